//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.
//!
//! Training-heavy criteria honour `MMFUSE_THREADS`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mmfuse::commands;
use mmfuse::config::RunConfig;
use mmfuse::model_io::load_model;
use mmfuse::pipeline::{fit, load_raw, prepare};
use mmfuse::sweep::{run_sweep, thread_count, SweepTable};
use mmfuse_core::data::TaskKind;
use mmfuse_core::metrics::{nmse, src};
use mmfuse_core::noise::{GaussianNoise, NoiseSource};
use mmfuse_core::objective::{kl_standard_normal, reparameterize};
use mmfuse_core::poe::{poe_fuse, GaussianEmbedding, GaussianExpert};
use mmfuse_core::train::evaluate;
use mmfuse_core::verify::{check_kl, run_suite, LAYER_TOLERANCE, SEQUENCE_TOLERANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// 1. analytic vs finite-difference gradients
fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let results = run_suite(0);
    let elapsed = t.elapsed();
    let worst = |tol: f64| {
        results
            .iter()
            .filter(|r| r.tolerance == tol)
            .map(|r| r.max_relative_error)
            .fold(0.0f64, f64::max)
    };
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    let layer_ok = results
        .iter()
        .filter(|r| r.tolerance <= LAYER_TOLERANCE)
        .all(|r| r.max_relative_error < LAYER_TOLERANCE);
    let seq_ok = results
        .iter()
        .filter(|r| r.tolerance == SEQUENCE_TOLERANCE)
        .all(|r| r.max_relative_error < SEQUENCE_TOLERANCE);
    let pass = failed.is_empty() && layer_ok && seq_ok && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{} checks, layer max {:.2e} (< 1e-4), lstm/end-to-end max {:.2e} (< 1e-3), failed [{}], {}",
            results.len(),
            worst(LAYER_TOLERANCE).max(worst(1e-8)),
            worst(SEQUENCE_TOLERANCE),
            failed.join(", "),
            secs(elapsed)
        ),
    )
}

// 2. fused Gaussian vs the numerically normalized density product
fn poe_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let step = 1e-3;
    let grid: Vec<f64> = (0..=20_000).map(|i| -10.0 + i as f64 * step).collect();
    let mut worst = 0.0f64;
    for case in 0..100 {
        let k = rng.random_range(1..=4);
        let prior = case % 2 == 0;
        // every expert keeps ≥ 5σ of each tail on the grid
        let experts: Vec<GaussianExpert> = (0..k)
            .map(|_| GaussianExpert {
                mean: vec![rng.random_range(-2.0..2.0)],
                std: vec![rng.random_range(0.2..1.5)],
            })
            .collect();
        let fused = poe_fuse(&experts, prior).unwrap();
        let log_density = |x: f64| {
            let mut l: f64 = experts
                .iter()
                .map(|e| -0.5 * ((x - e.mean[0]) / e.std[0]).powi(2) - e.std[0].ln())
                .sum();
            if prior {
                l -= 0.5 * x * x;
            }
            l
        };
        let logs: Vec<f64> = grid.iter().map(|&x| log_density(x)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean = grid.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
        let var = grid
            .iter()
            .zip(&w)
            .map(|(x, w)| (x - mean).powi(2) * w)
            .sum::<f64>()
            / z;
        worst = worst
            .max((mean - fused.mean[0]).abs())
            .max((var.sqrt() - fused.std[0]).abs());
    }
    let elapsed = t.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "100 expert sets, max |Δμ|,|Δσ| = {worst:.2e} (< 1e-4), {}",
            secs(elapsed)
        ),
    )
}

// 3. closed-form KL vs Monte Carlo, and its gradient
fn kl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut noise = GaussianNoise::new(ChaCha8Rng::seed_from_u64(33));
    let n = 100_000;
    let mut worst_z = 0.0f64;
    for _ in 0..50 {
        let dim = rng.random_range(1..=4);
        let emb = GaussianEmbedding {
            mean: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            std: (0..dim)
                .map(|_| rng.random_range(-1.0f64..1.0).exp())
                .collect(),
        };
        let analytic = kl_standard_normal(&emb);
        let mut eps = vec![0.0; dim];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            noise.fill_standard_normal(&mut eps);
            let z = reparameterize(&emb, &eps).unwrap();
            // ln q(z) − ln p(z); the 2π terms cancel
            let d: f64 = z
                .iter()
                .zip(&eps)
                .zip(&emb.std)
                .map(|((z, e), s)| -0.5 * e * e - s.ln() + 0.5 * z * z)
                .sum();
            sum += d;
            sum_sq += d * d;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
        worst_z = worst_z.max((mean - analytic).abs() / se);
    }
    let grad = check_kl(0);
    outcome(
        worst_z <= 3.0 && grad.max_relative_error < 1e-8,
        format!(
            "50 embeddings, worst |MC − KL| = {worst_z:.2} SE (≤ 3), gradient rel err {:.2e} (< 1e-8)",
            grad.max_relative_error
        ),
    )
}

// 4. metric identities and SRC bounds under fuzzing
fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = true;
    let mut worst_id = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..50);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        worst_id = worst_id
            .max(nmse(&y, &y).unwrap().abs())
            .max((nmse(&y, &vec![mean; n]).unwrap() - 1.0).abs());
        let seqs: Vec<Vec<f64>> = y
            .chunks(2)
            .filter(|c| c.len() == 2 && c[0] != c[1])
            .map(<[f64]>::to_vec)
            .collect();
        if !seqs.is_empty() {
            let neg: Vec<Vec<f64>> = seqs
                .iter()
                .map(|s| s.iter().map(|v| -v).collect())
                .collect();
            worst_id = worst_id
                .max((src(&seqs, &seqs).unwrap() - 1.0).abs())
                .max((src(&seqs, &neg).unwrap() + 1.0).abs());
        }
    }
    ok &= worst_id <= 1e-12;
    let mut out_of_range = 0;
    for _ in 0..10_000 {
        let t = rng.random_range(2..12);
        let scale = 10f64.powi(rng.random_range(-6..7));
        let a = vec![(0..t)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect::<Vec<f64>>()];
        let b = vec![(0..t)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect::<Vec<f64>>()];
        let v = src(&a, &b).unwrap();
        if !(-1.0..=1.0).contains(&v) {
            out_of_range += 1;
        }
    }
    ok &= out_of_range == 0;
    outcome(
        ok,
        format!("max identity error {worst_id:.1e} (≤ 1e-12), SRC out of [−1, 1] in {out_of_range}/10000 fuzz pairs"),
    )
}

fn sweep_means(table: &SweepTable, metric: &str) -> Vec<(f64, f64, f64)> {
    table
        .summary
        .iter()
        .map(|c| (c.value, c.mean(metric).unwrap(), c.std(metric).unwrap()))
        .collect()
}

fn fmt_cells(cells: &[(f64, f64, f64)]) -> String {
    cells
        .iter()
        .map(|(v, m, s)| format!("{v}: {m:.4}±{s:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// The temporal setting shared by criteria 6 to 8.
fn temporal_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.train.decoder = TaskKind::Temporal;
    c.train.batch_size = 32;
    c.train.lambda = 0.3;
    c.synth.task = TaskKind::Temporal;
    c.synth.n_samples = 2000;
    c.synth.noise_scales = vec![1.0; 4];
    c.synth.target_noise = 1.0;
    c.synth.seq_len = 9;
    c.synth.interval_hours = 8.0;
    c.sweep_seeds = (0..5).collect();
    c
}

// 5. interior λ beats both ends on noisy regression data
fn lambda_u_shape(threads: usize) -> Outcome {
    let t = Instant::now();
    let mut c = RunConfig::default();
    c.synth.n_samples = 5000;
    c.synth.modality_dims = vec![64; 4];
    c.synth.distractor_dims = vec![64; 4];
    c.synth.noise_scales = vec![1.0; 4];
    c.synth.target_noise = 0.5;
    c.sweep_lambdas = vec![0.0, 0.1, 0.3, 0.7, 100.0];
    c.sweep_seeds = (0..5).collect();
    let table = run_sweep(&c, threads).unwrap();
    let elapsed = t.elapsed();
    let cells = sweep_means(&table, "nmse");
    let at = |l: f64| cells.iter().find(|c| c.0 == l).unwrap().1;
    let (lo, hi) = (at(0.0), at(100.0));
    let best = [0.1, 0.3, 0.7]
        .into_iter()
        .min_by(|a, b| at(*a).total_cmp(&at(*b)))
        .unwrap();
    outcome(
        at(best) < lo && at(best) < hi && elapsed < Duration::from_secs(600),
        format!(
            "mean test nMSE over 5 seeds {{{}}}; best interior λ={best}, {}",
            fmt_cells(&cells),
            secs(elapsed)
        ),
    )
}

// 6. stochastic model at its best λ vs the deterministic baseline
fn stochastic_vs_deterministic(threads: usize) -> Outcome {
    let mut c = temporal_config();
    c.sweep_lambdas = vec![0.0, 0.1, 0.3, 0.7];
    let var = sweep_means(&run_sweep(&c, threads).unwrap(), "src");
    let mut d = temporal_config();
    d.train.deterministic_baseline = true;
    d.sweep_lambdas = vec![0.0];
    let det = sweep_means(&run_sweep(&d, threads).unwrap(), "src")[0];
    let best = var
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    outcome(
        best.1 >= det.1,
        format!(
            "variational mean SRC {{{}}}; best λ={} SRC {:.4} vs deterministic {:.4}±{:.4}, gap {:+.4}",
            fmt_cells(&var),
            best.0,
            best.1,
            det.1,
            det.2,
            best.1 - det.1
        ),
    )
}

// 7. dropping one modality at evaluation time
fn missing_modality_robustness() -> Outcome {
    let c = temporal_config();
    let names: Vec<String> = c.synth.modality_names();
    let mut full = 0.0;
    let mut dropped = vec![0.0; names.len()];
    for &seed in &c.sweep_seeds {
        let mut run = c.clone();
        run.train.seed = seed;
        run.synth.seed = seed;
        let splits = prepare(load_raw(&run).unwrap(), run.split, seed).unwrap();
        let (model, _) = fit(&splits, &run.train).unwrap();
        let test = splits.test.as_ref().unwrap();
        full += evaluate(&model, test, None).unwrap().metric("src").unwrap();
        for (i, d) in dropped.iter_mut().enumerate() {
            let mut mask = vec![true; names.len()];
            mask[i] = false;
            *d += evaluate(&model, test, Some(&mask))
                .unwrap()
                .metric("src")
                .unwrap();
        }
    }
    let n = c.sweep_seeds.len() as f64;
    full /= n;
    let rel: Vec<f64> = dropped.iter().map(|d| (full - d / n) / full).collect();
    let worst = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        full > 0.0 && worst < 0.2,
        format!(
            "full SRC {full:.4}; relative drop {} (each < 20%)",
            names
                .iter()
                .zip(&rel)
                .map(|(m, r)| format!("{m} {:.1}%", 100.0 * r))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// 8. SRC does not rise with sequence length over a fixed 72 h horizon
fn sequence_length_trend(threads: usize) -> Outcome {
    let mut c = temporal_config();
    c.synth_horizon_hours = Some(72.0);
    c.sweep_intervals = vec![24.0, 8.0, 2.0];
    let cells = sweep_means(&run_sweep(&c, threads).unwrap(), "src");
    let pass = cells
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + w[0].2.min(w[1].2));
    let described: Vec<String> = cells
        .iter()
        .map(|(iv, m, s)| format!("T={}: {m:.4}±{s:.4}", (72.0 / iv) as usize))
        .collect();
    outcome(
        pass,
        format!("mean SRC over 5 seeds {}", described.join(", ")),
    )
}

// 9. byte-identical reruns and bitwise save/load
fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut c = temporal_config();
    c.synth.n_samples = 300;
    c.train.epochs = 10;
    let mut sink = Vec::new();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        c.out = dir.path().join(run);
        commands::train(&c, &mut sink).unwrap();
        files.push((
            std::fs::read(c.out.join(commands::HISTORY_FILE)).unwrap(),
            std::fs::read(c.out.join(commands::MODEL_FILE)).unwrap(),
        ));
    }
    let same_files = files[0] == files[1];

    let splits = prepare(load_raw(&c).unwrap(), c.split, c.train.seed).unwrap();
    let (model, _) = fit(&splits, &c.train).unwrap();
    let loaded = load_model(dir.path().join("a").join(commands::MODEL_FILE)).unwrap();
    let test = splits.test.as_ref().unwrap();
    let mut mismatches = 0;
    for s in test.samples() {
        let a = model.predict(s, None).unwrap();
        let b = loaded.predict(s, None).unwrap();
        let (a, b) = (a.as_sequence().unwrap(), b.as_sequence().unwrap());
        if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()) {
            mismatches += 1;
        }
    }
    outcome(
        same_files && mismatches == 0,
        format!(
            "history+model files identical across reruns: {same_files}; loaded vs in-process prediction mismatches {mismatches}/{}",
            test.len()
        ),
    )
}

fn main() -> ExitCode {
    let threads = thread_count().unwrap_or(1);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient suite", Box::new(gradient_suite)),
        ("product-of-experts oracle", Box::new(poe_oracle)),
        ("KL oracle", Box::new(kl_oracle)),
        ("metric identities", Box::new(metric_identities)),
        ("lambda U-shape", Box::new(move || lambda_u_shape(threads))),
        (
            "stochastic vs deterministic",
            Box::new(move || stochastic_vs_deterministic(threads)),
        ),
        (
            "missing-modality robustness",
            Box::new(missing_modality_robustness),
        ),
        (
            "sequence-length trend",
            Box::new(move || sequence_length_trend(threads)),
        ),
        ("reproducibility", Box::new(reproducibility)),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {id} [{name}]: {} ({}) [{}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            secs(t.elapsed())
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
