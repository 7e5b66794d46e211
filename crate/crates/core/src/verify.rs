//! The finite-difference gradient suite behind `mmfuse gradcheck`.
//!
//! Every check builds a small randomly initialized network from a fixed
//! seed, freezes any reparameterization noise, and compares analytic
//! gradients against central differences.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{MultimodalSample, PopularityTarget, SequenceTarget, TaskKind};
use crate::decoders::{Decoder, DecoderSpec, TimeScaler};
use crate::math;
use crate::model::{LatentMode, Model, ModelSpec};
use crate::nn::{gradcheck, Activation, Dense, LstmCell, Matrix, ParamStore, Parameterized};
use crate::noise::{FixedNoise, GaussianNoise, NoiseSource};
use crate::objective::{kl_standard_normal, kl_standard_normal_grad};
use crate::poe::{
    EarlyFusionEncoder, EncoderKind, EncoderSpec, GaussianEmbedding, ModalityEncoder, ModalitySpec,
};

/// Finite-difference step used throughout the suite.
pub const FD_EPS: f64 = 1e-6;
pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const SEQUENCE_TOLERANCE: f64 = 1e-3;
pub const KL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn input_slot(store: &mut ParamStore, name: &str, values: Vec<f64>) -> crate::nn::SlotId {
    let n = values.len();
    store
        .add(name, Matrix::from_vec(n, 1, values).expect("column vector"))
        .expect("fresh slot name")
}

/// Dense layers of random shape for every activation (20 configurations each).
pub fn check_dense(seed: u64) -> Vec<CheckResult> {
    [
        Activation::Linear,
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
    ]
    .into_iter()
    .map(|act| {
        let mut worst = 0.0f64;
        let mut checked = 0;
        for k in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000) + k);
            let (n_in, n_out) = (rng.random_range(1..7), rng.random_range(1..7));
            let mut store = ParamStore::new();
            let layer =
                Dense::new(&mut store, "l", n_in, n_out, act, &mut rng).expect("valid sizes");
            // random, non-zero biases keep relu units away from exact kinks
            let b: Vec<f64> = random_vec(&mut rng, n_out);
            store
                .value_mut(layer.bias)
                .as_mut_slice()
                .copy_from_slice(&b);
            let x = input_slot(&mut store, "x", random_vec(&mut rng, n_in));
            let coef = random_vec(&mut rng, n_out);
            let r = gradcheck(&mut store, FD_EPS, |s: &mut ParamStore| {
                s.zero_grads();
                let input = s.value(x).as_slice().to_vec();
                let (y, cache) = layer.forward(s, &input).expect("shapes match");
                let loss: f64 = y.iter().zip(&coef).map(|(v, c)| c * v + 0.5 * v * v).sum();
                let dy: Vec<f64> = y.iter().zip(&coef).map(|(v, c)| c + v).collect();
                let dx = layer.backward(s, &cache, &dy).expect("shapes match");
                s.grad_mut(x).as_mut_slice().copy_from_slice(&dx);
                loss
            });
            worst = worst.max(r.max_relative_error);
            checked += r.checked;
        }
        CheckResult {
            name: format!("dense/{act:?}").to_lowercase(),
            max_relative_error: worst,
            tolerance: LAYER_TOLERANCE,
            checked,
        }
    })
    .collect()
}

/// `‖p‖²`, exact for central differences up to roundoff.
pub fn check_quadratic(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = input_slot(&mut store, "p", random_vec(&mut rng, 10));
    let r = gradcheck(&mut store, 1e-5, |s: &mut ParamStore| {
        let v = s.value(p).as_slice().to_vec();
        let g: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        s.grad_mut(p).as_mut_slice().copy_from_slice(&g);
        v.iter().map(|x| x * x).sum()
    });
    CheckResult {
        name: String::from("quadratic"),
        max_relative_error: r.max_relative_error,
        tolerance: 1e-8,
        checked: r.checked,
    }
}

/// Two-layer tanh/linear MLP under mean squared error over a small batch.
pub fn check_mlp(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let l1 = Dense::new(&mut store, "l1", 4, 6, Activation::Tanh, &mut rng).expect("sizes");
    let l2 = Dense::new(&mut store, "l2", 6, 2, Activation::Linear, &mut rng).expect("sizes");
    let xs: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 4)).collect();
    let ys: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 2)).collect();
    let r = gradcheck(&mut store, FD_EPS, |s: &mut ParamStore| {
        s.zero_grads();
        let mut loss = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let (h, c1) = l1.forward(s, x).expect("sizes");
            let (o, c2) = l2.forward(s, &h).expect("sizes");
            loss += o.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 5.0;
            let d: Vec<f64> = o.iter().zip(y).map(|(a, b)| 2.0 * (a - b) / 5.0).collect();
            let dh = l2.backward(s, &c2, &d).expect("sizes");
            l1.backward(s, &c1, &dh).expect("sizes");
        }
        loss
    });
    CheckResult {
        name: String::from("mlp-mse"),
        max_relative_error: r.max_relative_error,
        tolerance: LAYER_TOLERANCE,
        checked: r.checked,
    }
}

/// Unrolled LSTM over 3 steps for 10 random configurations.
pub fn check_lstm(seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for k in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919) + k);
        let (input, hidden) = (rng.random_range(1..4), rng.random_range(1..5));
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", input, hidden, &mut rng).expect("sizes");
        let b = random_vec(&mut rng, 4 * hidden);
        store
            .value_mut(cell.bias)
            .as_mut_slice()
            .copy_from_slice(&b);
        let h0 = input_slot(&mut store, "h0", random_vec(&mut rng, hidden));
        let c0 = input_slot(&mut store, "c0", random_vec(&mut rng, hidden));
        let xs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, input)).collect();
        let ys: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, hidden)).collect();
        let r = gradcheck(&mut store, FD_EPS, |s: &mut ParamStore| {
            s.zero_grads();
            let mut h = s.value(h0).as_slice().to_vec();
            let mut c = s.value(c0).as_slice().to_vec();
            let mut caches = Vec::new();
            let mut loss = 0.0;
            let mut dhs = Vec::new();
            for (x, y) in xs.iter().zip(&ys) {
                let (h2, c2, cache) = cell.step(s, x, &h, &c).expect("sizes");
                loss += h2
                    .iter()
                    .zip(y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                dhs.push(
                    h2.iter()
                        .zip(y)
                        .map(|(a, b)| 2.0 * (a - b))
                        .collect::<Vec<_>>(),
                );
                caches.push(cache);
                h = h2;
                c = c2;
            }
            let mut dh_next = vec![0.0; hidden];
            let mut dc_next = vec![0.0; hidden];
            for t in (0..3).rev() {
                let dh: Vec<f64> = dh_next.iter().zip(&dhs[t]).map(|(a, b)| a + b).collect();
                let (_, dhp, dcp) = cell
                    .backward_step(s, &caches[t], &dh, &dc_next)
                    .expect("sizes");
                dh_next = dhp;
                dc_next = dcp;
            }
            s.grad_mut(h0).as_mut_slice().copy_from_slice(&dh_next);
            s.grad_mut(c0).as_mut_slice().copy_from_slice(&dc_next);
            loss
        });
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
    }
    CheckResult {
        name: String::from("lstm-bptt"),
        max_relative_error: worst,
        tolerance: SEQUENCE_TOLERANCE,
        checked,
    }
}

/// Analytic KL gradient with respect to `(μ, lnσ)`.
pub fn check_kl(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mean = input_slot(&mut store, "mean", random_vec(&mut rng, 6));
    let log_std = input_slot(&mut store, "log_std", random_vec(&mut rng, 6));
    let r = gradcheck(&mut store, 1e-5, |s: &mut ParamStore| {
        let emb = GaussianEmbedding {
            mean: s.value(mean).as_slice().to_vec(),
            std: s
                .value(log_std)
                .as_slice()
                .iter()
                .map(|l| math::exp(*l))
                .collect(),
        };
        let (gm, gs) = kl_standard_normal_grad(&emb);
        s.grad_mut(mean).as_mut_slice().copy_from_slice(&gm);
        s.grad_mut(log_std).as_mut_slice().copy_from_slice(&gs);
        kl_standard_normal(&emb)
    });
    CheckResult {
        name: String::from("kl"),
        max_relative_error: r.max_relative_error,
        tolerance: KL_TOLERANCE,
        checked: r.checked,
    }
}

/// Modality encoder and early-fusion encoder through a smooth loss on `(μ, lnσ)`.
pub fn check_encoders(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    {
        let mut store = ParamStore::new();
        let spec = ModalitySpec {
            name: String::from("m"),
            dim: 5,
        };
        let enc = ModalityEncoder::new(&mut store, &spec, 7, 3, &mut rng).expect("sizes");
        let x = random_vec(&mut rng, 5);
        let r = gradcheck(&mut store, FD_EPS, |s: &mut ParamStore| {
            s.zero_grads();
            let (e, cache) = enc.encode(s, &x).expect("sizes");
            let ln: Vec<f64> = e.std.iter().map(|v| math::ln(*v)).collect();
            let loss =
                e.mean.iter().map(|m| m * m).sum::<f64>() + ln.iter().map(|l| l * l).sum::<f64>();
            let dm: Vec<f64> = e.mean.iter().map(|m| 2.0 * m).collect();
            let ds: Vec<f64> = ln.iter().map(|l| 2.0 * l).collect();
            enc.net.backward(s, &cache, &dm, &ds).expect("sizes");
            loss
        });
        out.push(CheckResult {
            name: String::from("encoder/modality"),
            max_relative_error: r.max_relative_error,
            tolerance: LAYER_TOLERANCE,
            checked: r.checked,
        });
    }
    {
        let mut store = ParamStore::new();
        let enc = EarlyFusionEncoder::new(&mut store, 9, 7, 3, &mut rng).expect("sizes");
        let x = random_vec(&mut rng, 9);
        let r = gradcheck(&mut store, FD_EPS, |s: &mut ParamStore| {
            s.zero_grads();
            let (e, cache) = enc.encode(s, &x).expect("sizes");
            let ln: Vec<f64> = e.std.iter().map(|v| math::ln(*v)).collect();
            let loss =
                e.mean.iter().map(|m| m * m).sum::<f64>() + ln.iter().map(|l| l * l).sum::<f64>();
            let dm: Vec<f64> = e.mean.iter().map(|m| 2.0 * m).collect();
            let ds: Vec<f64> = ln.iter().map(|l| 2.0 * l).collect();
            enc.net.backward(s, &cache, &dm, &ds).expect("sizes");
            loss
        });
        out.push(CheckResult {
            name: String::from("encoder/early-fusion"),
            max_relative_error: r.max_relative_error,
            tolerance: LAYER_TOLERANCE,
            checked: r.checked,
        });
    }
    out
}

fn demo_sample(task: TaskKind, rng: &mut ChaCha8Rng, i: usize) -> MultimodalSample {
    let target = match task {
        TaskKind::Classification => PopularityTarget::Binary(i % 2 == 1),
        TaskKind::Regression => PopularityTarget::Scalar(rng.random_range(-1.0..1.0)),
        TaskKind::Temporal => PopularityTarget::Sequence(
            SequenceTarget::new(random_vec(rng, 5), vec![8.0, 16.0, 24.0, 32.0, 40.0])
                .expect("valid"),
        ),
    };
    MultimodalSample {
        id: format!("gc{i}"),
        features: vec![
            Some(random_vec(rng, 4)),
            Some(random_vec(rng, 3)),
            Some(random_vec(rng, 2)),
        ],
        target,
    }
}

/// Decoder heads on their own, with `z` as a parameter.
pub fn check_decoders(seed: u64) -> Vec<CheckResult> {
    [
        TaskKind::Classification,
        TaskKind::Regression,
        TaskKind::Temporal,
    ]
    .into_iter()
    .map(|task| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dec = Decoder::new(
            &mut store,
            &DecoderSpec {
                task,
                mlp_hidden: 6,
                rnn_hidden: 4,
            },
            3,
            TimeScaler {
                mean: 24.0,
                std: 12.0,
            },
            &mut rng,
        )
        .expect("sizes");
        let z = input_slot(&mut store, "z", random_vec(&mut rng, 3));
        let sample = demo_sample(task, &mut rng, 1);
        let r = gradcheck(&mut store, FD_EPS, |s: &mut ParamStore| {
            s.zero_grads();
            let zv = s.value(z).as_slice().to_vec();
            let (o, cache) = dec.forward(s, &zv, sample.timestamps()).expect("sizes");
            let (loss, g) = dec.loss(&o, &sample.target).expect("kinds match");
            let dz = dec.backward(s, &cache, &g).expect("sizes");
            s.grad_mut(z).as_mut_slice().copy_from_slice(&dz);
            loss
        });
        CheckResult {
            name: format!("decoder/{}", task.as_str()),
            max_relative_error: r.max_relative_error,
            tolerance: if task == TaskKind::Temporal {
                SEQUENCE_TOLERANCE
            } else {
                LAYER_TOLERANCE
            },
            checked: r.checked,
        }
    })
    .collect()
}

/// Whole-model loss over a small batch with frozen noise.
pub fn check_end_to_end(
    seed: u64,
    task: TaskKind,
    encoder: EncoderKind,
    deterministic: bool,
) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = 0.5;
    let spec = ModelSpec {
        encoder: EncoderSpec {
            modalities: vec![
                ModalitySpec {
                    name: String::from("visual"),
                    dim: 4,
                },
                ModalitySpec {
                    name: String::from("acoustic"),
                    dim: 3,
                },
                ModalitySpec {
                    name: String::from("textual"),
                    dim: 2,
                },
            ],
            hidden: 6,
            latent_dim: 3,
            include_prior: true,
            kind: encoder,
        },
        decoder: DecoderSpec {
            task,
            mlp_hidden: 5,
            rnn_hidden: 4,
        },
        lambda,
        deterministic,
    };
    let mut model = Model::new(
        spec,
        TimeScaler {
            mean: 24.0,
            std: 12.0,
        },
        &mut rng,
    )
    .expect("valid spec");
    let batch: Vec<MultimodalSample> = (0..4).map(|i| demo_sample(task, &mut rng, i)).collect();
    let mut tape = vec![0.0; 64];
    GaussianNoise::new(ChaCha8Rng::seed_from_u64(seed ^ 0x5eed)).fill_standard_normal(&mut tape);
    let mut noise = FixedNoise::new(tape);
    let mode = if deterministic {
        LatentMode::Mean
    } else {
        LatentMode::Sample
    };
    let scale = 1.0 / batch.len() as f64;
    let r = gradcheck(&mut model, FD_EPS, |m: &mut Model| {
        m.params_mut().zero_grads();
        noise.rewind();
        let mut total = 0.0;
        for s in &batch {
            let l = m
                .accumulate_gradients(s, None, mode, 1, scale, &mut noise)
                .expect("valid sample");
            let kl = if deterministic { 0.0 } else { lambda * l.kl };
            total += scale * (l.decoder_loss + kl);
        }
        total
    });
    let variant = match (encoder, deterministic) {
        (EncoderKind::EarlyFusion, _) => "early-fusion",
        (_, true) => "deterministic",
        _ => "poe",
    };
    CheckResult {
        name: format!("end-to-end/{}/{variant}", task.as_str()),
        max_relative_error: r.max_relative_error,
        tolerance: SEQUENCE_TOLERANCE,
        checked: r.checked,
    }
}

/// Every check, in a fixed order.
pub fn run_suite(seed: u64) -> Vec<CheckResult> {
    let mut out = vec![check_quadratic(seed), check_mlp(seed)];
    out.extend(check_dense(seed));
    out.push(check_lstm(seed));
    out.push(check_kl(seed));
    out.extend(check_encoders(seed));
    out.extend(check_decoders(seed));
    for task in [
        TaskKind::Classification,
        TaskKind::Regression,
        TaskKind::Temporal,
    ] {
        out.push(check_end_to_end(
            seed,
            task,
            EncoderKind::ProductOfExperts,
            false,
        ));
        out.push(check_end_to_end(
            seed,
            task,
            EncoderKind::ProductOfExperts,
            true,
        ));
        out.push(check_end_to_end(
            seed,
            task,
            EncoderKind::EarlyFusion,
            false,
        ));
    }
    out
}
