//! Drives the `mmfuse` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn mmfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmfuse"))
        .current_dir(dir)
        .args(args)
        .env("MMFUSE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fails_with(out: &Output, needle: &str) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(needle), "stderr lacks `{needle}`:\n{err}");
}

#[test]
fn synth_writes_one_line_per_sample_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        "synth_n_samples = 1000\ndecoder = \"reg\"\nseed = 9\n",
    )
    .unwrap();
    ok(&mmfuse(
        dir.path(),
        &["synth", "--config", "s.toml", "--out", "a"],
    ));
    ok(&mmfuse(
        dir.path(),
        &["synth", "--config", "s.toml", "--out", "b"],
    ));
    let a = std::fs::read_to_string(dir.path().join("a/dataset.jsonl")).unwrap();
    // schema header plus one record per sample
    assert_eq!(a.lines().count(), 1001);
    assert_eq!(
        a,
        std::fs::read_to_string(dir.path().join("b/dataset.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a/synth_meta.json")).unwrap(),
        std::fs::read(dir.path().join("b/synth_meta.json")).unwrap()
    );
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "epochs = 2\nlearning_rate = 0.1\n",
    )
    .unwrap();
    for cmd in ["synth", "train", "sweep"] {
        fails_with(
            &mmfuse(dir.path(), &[cmd, "--config", "bad.toml"]),
            "learning_rate",
        );
    }
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.toml"),
        "decoder = \"tmp\"\nepochs = 4\nsynth_n_samples = 150\nlambda = 0.3\ndata = \"data/dataset.jsonl\"\n",
    )
    .unwrap();
    ok(&mmfuse(
        d,
        &[
            "synth",
            "--decoder",
            "tmp",
            "--out",
            "data",
            "--config",
            "run.toml",
        ],
    ));
    let report = ok(&mmfuse(
        d,
        &["train", "--config", "run.toml", "--out", "m1"],
    ));
    assert!(report.contains("test_src="), "{report}");
    ok(&mmfuse(
        d,
        &["train", "--config", "run.toml", "--out", "m2"],
    ));

    let history = std::fs::read_to_string(d.join("m1/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 4);
    assert!(history.starts_with("epoch,lr,train_total,train_ell,train_kl,lambda,val_nmse_tmp\n"));
    assert_eq!(
        history,
        std::fs::read_to_string(d.join("m2/history.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("m1/model.json")).unwrap(),
        std::fs::read(d.join("m2/model.json")).unwrap()
    );

    let eval = |extra: &[&str]| {
        let mut args = vec![
            "eval",
            "--model",
            "m1/model.json",
            "--data",
            "data/dataset.jsonl",
        ];
        args.extend_from_slice(extra);
        mmfuse(d, &args)
    };
    let full = ok(&eval(&[]));
    assert!(
        full.contains("src=") && full.contains("nmse_tmp="),
        "{full}"
    );
    let dropped = ok(&eval(&["--drop-modalities", "visual,social"]));
    assert_ne!(full, dropped);
    fails_with(&eval(&["--drop-modalities", "smell"]), "smell");

    ok(&mmfuse(
        d,
        &[
            "predict",
            "--model",
            "m1/model.json",
            "--data",
            "data/dataset.jsonl",
            "--out",
            "p",
        ],
    ));
    let preds = std::fs::read_to_string(d.join("p/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 150);
    assert!(preds.lines().next().unwrap().contains("\"values\""));
}

#[test]
fn deterministic_baseline_flag_drops_the_kl() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("r.toml"),
        "epochs = 2\nsynth_n_samples = 100\nlambda = 5.0\n",
    )
    .unwrap();
    ok(&mmfuse(
        d,
        &[
            "train",
            "--config",
            "r.toml",
            "--deterministic-baseline",
            "--out",
            "m",
        ],
    ));
    let history = std::fs::read_to_string(d.join("m/history.csv")).unwrap();
    for row in history.lines().skip(1) {
        assert_eq!(row.split(',').nth(5), Some("0"), "{row}");
    }
}

#[test]
fn schema_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("r.toml"), "epochs = 1\nsynth_n_samples = 60\n").unwrap();
    ok(&mmfuse(d, &["train", "--config", "r.toml", "--out", "m"]));
    std::fs::write(
        d.join("x.toml"),
        "synth_n_samples = 5\nsynth_modality_dims = [8, 8, 3, 8]\n",
    )
    .unwrap();
    ok(&mmfuse(d, &["synth", "--config", "x.toml", "--out", "x"]));
    fails_with(
        &mmfuse(
            d,
            &[
                "eval",
                "--model",
                "m/model.json",
                "--data",
                "x/dataset.jsonl",
            ],
        ),
        "textual",
    );
}

#[test]
fn sweep_table_has_one_row_per_cell_and_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sw.toml"),
        "epochs = 2\nsynth_n_samples = 80\nsweep_lambdas = [0.0, 0.3, 1.0, 100.0]\nsweep_seeds = [0, 1, 2]\n",
    )
    .unwrap();
    let serial = ok(&mmfuse(d, &["sweep", "--config", "sw.toml", "--out", "s1"]));
    let parallel = Command::new(env!("CARGO_BIN_EXE_mmfuse"))
        .current_dir(d)
        .args(["sweep", "--config", "sw.toml", "--out", "s4"])
        .env("MMFUSE_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(serial, ok(&parallel));
    let runs = std::fs::read_to_string(d.join("s1/sweep_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 12);
    assert_eq!(
        runs,
        std::fs::read_to_string(d.join("s4/sweep_runs.csv")).unwrap()
    );
    let summary = std::fs::read_to_string(d.join("s1/sweep_summary.csv")).unwrap();
    assert!(
        summary.starts_with("lambda,n,nmse_mean,nmse_std\n"),
        "{summary}"
    );
    assert_eq!(summary.lines().count(), 1 + 4);

    let bad = Command::new(env!("CARGO_BIN_EXE_mmfuse"))
        .current_dir(d)
        .args(["sweep", "--config", "sw.toml"])
        .env("MMFUSE_THREADS", "zero")
        .output()
        .unwrap();
    fails_with(&bad, "MMFUSE_THREADS");
}

#[test]
fn gradcheck_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&mmfuse(dir.path(), &["gradcheck"]));
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(rows.len() >= 20, "{out}");
    assert!(rows.iter().all(|r| r.ends_with(" ok")), "{out}");
    assert_eq!(out, ok(&mmfuse(dir.path(), &["gradcheck"])));
}
