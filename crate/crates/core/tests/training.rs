use mmfuse_core::data::{split_dataset, standardize_fit, Dataset, TaskKind};
use mmfuse_core::model::LatentMode;
use mmfuse_core::nn::Parameterized;
use mmfuse_core::noise::NoNoise;
use mmfuse_core::objective::kl_standard_normal;
use mmfuse_core::synth::{synth_generate, SynthConfig};
use mmfuse_core::train::{evaluate, train, train_deterministic_baseline, TrainConfig};

fn splits(cfg: &SynthConfig) -> (Dataset, Dataset, Dataset) {
    let (d, _) = synth_generate(cfg).unwrap();
    let (tr, va, te) = split_dataset(&d, [0.64, 0.16, 0.20], cfg.seed).unwrap();
    let stats = standardize_fit(&tr).unwrap();
    (
        stats.apply(&tr).unwrap(),
        stats.apply(&va).unwrap(),
        stats.apply(&te).unwrap(),
    )
}

fn small(task: TaskKind) -> TrainConfig {
    TrainConfig {
        epochs: 8,
        batch_size: 32,
        ..TrainConfig::new(task)
    }
}

#[test]
fn separable_classification_loss_falls_early() {
    let data = SynthConfig {
        n_samples: 800,
        task: TaskKind::Classification,
        noise_scales: vec![0.0; 4],
        ..SynthConfig::default()
    };
    let (tr, va, _) = splits(&data);
    let (_, h) = train(&tr, &va, &small(TaskKind::Classification)).unwrap();
    let bce: Vec<f64> = h.epochs.iter().take(5).map(|r| -r.train.ell).collect();
    assert!(bce.windows(2).all(|w| w[1] < w[0]), "{bce:?}");
}

#[test]
fn same_seed_same_history_and_predictions() {
    let (tr, va, te) = splits(&SynthConfig {
        n_samples: 300,
        task: TaskKind::Temporal,
        ..SynthConfig::default()
    });
    let cfg = TrainConfig {
        lambda: 0.3,
        ..small(TaskKind::Temporal)
    };
    let (m1, h1) = train(&tr, &va, &cfg).unwrap();
    let (m2, h2) = train(&tr, &va, &cfg).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1.params(), m2.params());
    assert_eq!(
        evaluate(&m1, &te, None).unwrap(),
        evaluate(&m2, &te, None).unwrap()
    );
    let other = train(&tr, &va, &TrainConfig { seed: 1, ..cfg }).unwrap().1;
    assert_ne!(h1, other);
}

#[test]
fn large_lambda_shrinks_the_kl() {
    let (tr, va, _) = splits(&SynthConfig {
        n_samples: 600,
        ..SynthConfig::default()
    });
    let mean_kl = |lambda: f64| {
        let (m, _) = train(
            &tr,
            &va,
            &TrainConfig {
                lambda,
                ..small(TaskKind::Regression)
            },
        )
        .unwrap();
        tr.samples()
            .iter()
            .map(|s| kl_standard_normal(&m.embed(s, None).unwrap()))
            .sum::<f64>()
            / tr.len() as f64
    };
    let (free, bound) = (mean_kl(0.0), mean_kl(100.0));
    assert!(bound < free, "λ=100 KL {bound} vs λ=0 KL {free}");
}

#[test]
fn deterministic_baseline_never_uses_the_fused_std() {
    let (tr, va, _) = splits(&SynthConfig {
        n_samples: 300,
        ..SynthConfig::default()
    });
    // With one expert and no prior the fused mean is that expert's mean, so
    // any σ dependence could only enter through sampling.
    let cfg = TrainConfig {
        include_prior: false,
        ..small(TaskKind::Regression)
    };
    let (mut m, h) = train_deterministic_baseline(&tr, &va, &cfg).unwrap();
    assert!(h.epochs.iter().all(|r| r.train.lambda == 0.0));
    let only_visual = [true, false, false, false];
    m.params_mut().zero_grads();
    m.accumulate_gradients(
        &tr.samples()[0],
        Some(&only_visual),
        LatentMode::Mean,
        1,
        1.0,
        &mut NoNoise,
    )
    .unwrap();
    let std_slots: Vec<_> = m
        .params()
        .slots()
        .iter()
        .filter(|s| s.name.contains(".log_std."))
        .collect();
    assert!(!std_slots.is_empty());
    for slot in std_slots {
        assert!(
            slot.grad.as_slice().iter().all(|g| *g == 0.0),
            "{}",
            slot.name
        );
    }
}

#[test]
fn deterministic_baseline_fits_clean_data_like_the_variational_model() {
    let (tr, va, te) = splits(&SynthConfig {
        n_samples: 1000,
        noise_scales: vec![0.0; 4],
        ..SynthConfig::default()
    });
    let cfg = TrainConfig {
        epochs: 30,
        ..small(TaskKind::Regression)
    };
    let (det, _) = train_deterministic_baseline(&tr, &va, &cfg).unwrap();
    let (var, _) = train(&tr, &va, &cfg).unwrap();
    let d = evaluate(&det, &te, None).unwrap().metric("nmse").unwrap();
    let v = evaluate(&var, &te, None).unwrap().metric("nmse").unwrap();
    assert!(d < 0.2 && v < 0.2, "det {d}, var {v}");
    assert!(d < 2.0 * v && v < 2.0 * d, "det {d}, var {v}");
}

#[test]
fn learning_rate_reaches_both_endpoints() {
    let (tr, va, _) = splits(&SynthConfig {
        n_samples: 200,
        ..SynthConfig::default()
    });
    let (_, h) = train(&tr, &va, &small(TaskKind::Regression)).unwrap();
    assert_eq!(h.epochs.len(), 8);
    assert_eq!(h.epochs[0].lr, 5e-4);
    assert_eq!(h.epochs[7].lr, 5e-5);
}
