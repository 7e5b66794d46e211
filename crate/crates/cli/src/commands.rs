//! The subcommands. Each writes its files under `cfg.out` and a short
//! `key=value` report to `log`.

use std::io::Write;
use std::path::{Path, PathBuf};

use mmfuse_core::data::PopularityTarget;
use mmfuse_core::decoders::DecoderOutput;
use mmfuse_core::synth::synth_generate;
use mmfuse_core::train::evaluate;
use mmfuse_core::verify::run_suite;
use serde_json::json;

use crate::config::{DataSource, RunConfig};
use crate::dataset_io::{read_dataset, write_dataset, write_synth_meta};
use crate::error::{io_err, CliError, Result};
use crate::history::write_history;
use crate::model_io::{load_model, save_model};
use crate::pipeline::{fit, load_raw, modality_mask, prepare};
use crate::sweep::{run_sweep, runs_csv, summary_csv, thread_count};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const META_FILE: &str = "synth_meta.json";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SWEEP_RUNS_FILE: &str = "sweep_runs.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    Ok(&cfg.out)
}

fn say(log: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(log, "{}", line.as_ref()).map_err(io_err("<stdout>"))
}

pub fn synth(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let (dataset, meta) = synth_generate(&cfg.synth)?;
    let dir = out_dir(cfg)?;
    write_dataset(&dataset, dir.join(DATASET_FILE))?;
    write_synth_meta(&meta, dir.join(META_FILE))?;
    say(log, format!("samples={}", dataset.len()))?;
    say(log, format!("dataset={}", dir.join(DATASET_FILE).display()))
}

pub fn train(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let splits = prepare(load_raw(cfg)?, cfg.split, cfg.train.seed)?;
    let (model, history) = fit(&splits, &cfg.train)?;
    let dir = out_dir(cfg)?;
    save_model(&model, dir.join(MODEL_FILE))?;
    write_history(&history, dir.join(HISTORY_FILE))?;
    if let Some(last) = history.epochs.last() {
        say(
            log,
            format!("final_val_{}={}", history.metric, last.val_metric),
        )?;
    }
    say(log, format!("best_epoch={}", history.best_epoch))?;
    if let Some(test) = &splits.test {
        for r in evaluate(&model, test, None)?.reports {
            say(log, format!("test_{}={}", r.metric, r.value))?;
        }
    }
    say(log, format!("model={}", dir.join(MODEL_FILE).display()))
}

fn model_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.model
        .as_deref()
        .ok_or_else(|| CliError::Config(String::from("model: no model file given")))
}

fn eval_data_path(cfg: &RunConfig) -> Result<&PathBuf> {
    match &cfg.source {
        DataSource::Single(p) => Ok(p),
        DataSource::Split { test: Some(p), .. } => Ok(p),
        _ => Err(CliError::Config(String::from(
            "data: no dataset to evaluate",
        ))),
    }
}

pub fn eval(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let model = load_model(model_path(cfg)?)?;
    let raw = read_dataset(eval_data_path(cfg)?)?;
    model.check_compatible(&raw)?;
    let mask = modality_mask(&model, &cfg.drop_modalities)?;
    let data = model.standardize(&raw)?;
    let eval = evaluate(&model, &data, mask.as_deref())?;
    say(log, format!("n={}", data.len()))?;
    if let Some(m) = &cfg.metric {
        if eval.metric(m).is_none() {
            let known: Vec<&str> = eval.reports.iter().map(|r| r.metric.as_str()).collect();
            return Err(CliError::Config(format!(
                "metric: `{m}` is not one of {}",
                known.join(", ")
            )));
        }
    }
    for r in eval
        .reports
        .iter()
        .filter(|r| cfg.metric.as_ref().map_or(true, |m| *m == r.metric))
    {
        say(log, format!("{}={}", r.metric, r.value))?;
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let model = load_model(model_path(cfg)?)?;
    let raw = read_dataset(eval_data_path(cfg)?)?;
    model.check_compatible(&raw)?;
    let mask = modality_mask(&model, &cfg.drop_modalities)?;
    let data = model.standardize(&raw)?;
    let dir = out_dir(cfg)?;
    let path = dir.join(PREDICTIONS_FILE);
    let mut text = String::new();
    for s in data.samples() {
        let prediction = match model.predict(s, mask.as_deref())? {
            DecoderOutput::Probability(p) => json!({ "probability": p }),
            DecoderOutput::Scalar(v) => json!({ "value": v }),
            DecoderOutput::Sequence(v) => {
                let ts = match &s.target {
                    PopularityTarget::Sequence(t) => t.timestamps.clone(),
                    _ => Vec::new(),
                };
                json!({ "values": v, "timestamps": ts })
            }
        };
        text.push_str(&json!({ "id": s.id, "prediction": prediction }).to_string());
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(io_err(&path))?;
    say(log, format!("n={}", data.len()))?;
    say(log, format!("predictions={}", path.display()))
}

pub fn sweep(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let table = run_sweep(cfg, thread_count()?)?;
    let dir = out_dir(cfg)?;
    let runs = dir.join(SWEEP_RUNS_FILE);
    let summary = dir.join(SWEEP_SUMMARY_FILE);
    std::fs::write(&runs, runs_csv(&table)).map_err(io_err(&runs))?;
    let text = summary_csv(&table);
    std::fs::write(&summary, &text).map_err(io_err(&summary))?;
    log.write_all(text.as_bytes()).map_err(io_err("<stdout>"))
}

pub fn gradcheck(seed: u64, log: &mut dyn Write) -> Result<()> {
    let results = run_suite(seed);
    say(
        log,
        format!(
            "{:<34} {:>12} {:>9} {:>8}  status",
            "check", "max_rel_err", "tolerance", "params"
        ),
    )?;
    for r in &results {
        say(
            log,
            format!(
                "{:<34} {:>12.3e} {:>9.0e} {:>8}  {}",
                r.name,
                r.max_relative_error,
                r.tolerance,
                r.checked,
                if r.passed() { "ok" } else { "FAIL" }
            ),
        )?;
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}
