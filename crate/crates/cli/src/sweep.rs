//! Hyperparameter sweeps: one training run per (value, seed) cell.
//!
//! Cells are independent and fully seeded, so running them on a thread pool
//! yields the same table as running them one after another.

use std::fmt::Write as _;

use mmfuse_core::train::evaluate;
use rayon::prelude::*;

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, Result};
use crate::pipeline::{fit, load_raw, prepare};

/// Environment variable capping the sweep thread pool.
pub const THREADS_ENV: &str = "MMFUSE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    /// Resampling interval in hours, at a fixed horizon.
    Interval,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Interval => "interval_hours",
        }
    }
}

/// Test metrics of one cell, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub n: usize,
    /// `(metric, mean, sample std)` over seeds.
    pub stats: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: SweepParam,
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, value: f64) -> Option<&SweepCell> {
        self.summary.iter().find(|c| c.value == value)
    }
}

impl SweepCell {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == metric).map(|s| s.1)
    }

    pub fn std(&self, metric: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == metric).map(|s| s.2)
    }
}

/// Thread count from `MMFUSE_THREADS`, else the machine's parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV}: expected a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn plan(cfg: &RunConfig) -> Result<(SweepParam, Vec<f64>)> {
    if cfg.sweep_seeds.is_empty() {
        return Err(CliError::Config(String::from(
            "sweep_seeds: the seed list is empty",
        )));
    }
    match (cfg.sweep_lambdas.is_empty(), cfg.sweep_intervals.is_empty()) {
        (false, true) => Ok((SweepParam::Lambda, cfg.sweep_lambdas.clone())),
        (true, false) => {
            if cfg.source != DataSource::Synthetic {
                return Err(CliError::Config(String::from(
                    "sweep_intervals: interval sweeps regenerate synthetic data and cannot use a data file",
                )));
            }
            Ok((SweepParam::Interval, cfg.sweep_intervals.clone()))
        }
        (true, true) => Err(CliError::Config(String::from(
            "sweep_lambdas: give a non-empty sweep_lambdas or sweep_intervals list",
        ))),
        (false, false) => Err(CliError::Config(String::from(
            "sweep_lambdas: sweep_lambdas and sweep_intervals cannot be combined",
        ))),
    }
}

/// The configuration of one cell.
pub fn cell_config(cfg: &RunConfig, param: SweepParam, value: f64, seed: u64) -> Result<RunConfig> {
    let mut c = cfg.clone();
    c.train.seed = seed;
    c.synth.seed = seed;
    match param {
        SweepParam::Lambda => c.train.lambda = value,
        SweepParam::Interval => {
            let horizon = cfg
                .synth_horizon_hours
                .unwrap_or(cfg.synth.seq_len as f64 * cfg.synth.interval_hours);
            let windows = horizon / value;
            if !(value > 0.0)
                || (windows - windows.round()).abs() > 1e-9 * windows.max(1.0)
                || windows < 0.5
            {
                return Err(CliError::Config(format!(
                    "sweep_intervals: {value} h does not divide the {horizon} h horizon"
                )));
            }
            c.synth.interval_hours = value;
            c.synth.seq_len = windows.round() as usize;
        }
    }
    c.train.validate()?;
    Ok(c)
}

fn run_cell(cfg: &RunConfig, param: SweepParam, value: f64, seed: u64) -> Result<SweepRun> {
    let c = cell_config(cfg, param, value, seed)?;
    let raw = load_raw(&c)?;
    let splits = prepare(raw, c.split, seed)?;
    let (model, _) = fit(&splits, &c.train)?;
    let test = splits.test.as_ref().unwrap_or(&splits.val);
    let eval = evaluate(&model, test, None)?;
    Ok(SweepRun {
        value,
        seed,
        metrics: eval
            .reports
            .into_iter()
            .map(|r| (r.metric, r.value))
            .collect(),
    })
}

/// Runs every (value, seed) cell on at most `threads` threads.
pub fn run_sweep(cfg: &RunConfig, threads: usize) -> Result<SweepTable> {
    let (param, values) = plan(cfg)?;
    // fail fast on bad cells before spending time on training
    for &v in &values {
        cell_config(cfg, param, v, cfg.sweep_seeds[0])?;
    }
    if let (DataSource::Single(_) | DataSource::Split { .. }, SweepParam::Lambda) =
        (&cfg.source, param)
    {
        // surface unreadable files once rather than once per cell
        let _ = load_raw(cfg)?;
    }
    let cells: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| cfg.sweep_seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: cannot build thread pool: {e}")))?;
    let results: Vec<Result<SweepRun>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, s)| {
                run_cell(cfg, param, v, s).map_err(|e| CliError::SweepRun {
                    param: param.as_str(),
                    value: v,
                    seed: s,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = values
        .iter()
        .map(|&v| summarize(v, runs.iter().filter(|r| r.value == v)))
        .collect();
    Ok(SweepTable {
        param,
        runs,
        summary,
    })
}

fn summarize<'a>(value: f64, runs: impl Iterator<Item = &'a SweepRun>) -> SweepCell {
    let runs: Vec<&SweepRun> = runs.collect();
    let n = runs.len();
    let names: Vec<String> = runs.first().map_or_else(Vec::new, |r| {
        r.metrics.iter().map(|m| m.0.clone()).collect()
    });
    let stats = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let xs: Vec<f64> = runs.iter().map(|r| r.metrics[i].1).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            (name, mean, std)
        })
        .collect();
    SweepCell { value, n, stats }
}

pub fn runs_csv(table: &SweepTable) -> String {
    let names: Vec<&str> = table.runs.first().map_or_else(Vec::new, |r| {
        r.metrics.iter().map(|m| m.0.as_str()).collect()
    });
    let mut out = format!("{},seed", table.param.as_str());
    for n in &names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for r in &table.runs {
        let _ = write!(out, "{},{}", r.value, r.seed);
        for m in &r.metrics {
            let _ = write!(out, ",{}", m.1);
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(table: &SweepTable) -> String {
    let mut out = format!("{},n", table.param.as_str());
    if let Some(c) = table.summary.first() {
        for (name, _, _) in &c.stats {
            let _ = write!(out, ",{name}_mean,{name}_std");
        }
    }
    out.push('\n');
    for c in &table.summary {
        let _ = write!(out, "{},{}", c.value, c.n);
        for (_, mean, std) in &c.stats {
            let _ = write!(out, ",{mean},{std}");
        }
        out.push('\n');
    }
    out
}
