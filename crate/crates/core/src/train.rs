//! The minibatch training loop, deterministic evaluation, and the
//! deterministic (no-sampling) ablation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PopularityTarget, TaskKind};
use crate::decoders::{binary_cross_entropy, DecoderOutput, DecoderSpec, TimeScaler};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::model::{LatentMode, Model, ModelSpec};
use crate::nn::{AdamConfig, AdamState};
use crate::noise::GaussianNoise;
use crate::objective::{iblbo_loss, LossBreakdown};
use crate::poe::{EncoderKind, EncoderSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lambda: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub decoder: TaskKind,
    pub deterministic_baseline: bool,
    pub include_prior: bool,
    pub encoder: EncoderKind,
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub decoder_hidden: usize,
    pub rnn_hidden: usize,
}

impl TrainConfig {
    pub fn new(decoder: TaskKind) -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            lr_start: 5e-4,
            lr_end: 5e-5,
            lambda: 0.0,
            mc_samples: 1,
            seed: 0,
            decoder,
            deterministic_baseline: false,
            include_prior: true,
            encoder: EncoderKind::ProductOfExperts,
            encoder_hidden: 32,
            latent_dim: 8,
            decoder_hidden: 16,
            rnn_hidden: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad(String::from("epochs must be ≥ 1"));
        }
        if self.batch_size == 0 {
            return bad(String::from("batch_size must be ≥ 1"));
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start && self.lr_start.is_finite()) {
            return bad(format!(
                "learning rates must satisfy 0 < lr_end ≤ lr_start (got {} → {})",
                self.lr_start, self.lr_end
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be ≥ 0, got {}", self.lambda));
        }
        if self.mc_samples == 0 {
            return bad(String::from("mc_samples must be ≥ 1"));
        }
        Ok(())
    }

    /// Learning rate of `epoch`, interpolated linearly from `lr_start` at the
    /// first epoch to `lr_end` at the last.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_start;
        }
        if epoch + 1 >= self.epochs {
            return self.lr_end;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * frac
    }

    fn model_spec(&self, dataset: &Dataset) -> ModelSpec {
        ModelSpec {
            encoder: EncoderSpec {
                modalities: dataset.modalities().to_vec(),
                hidden: self.encoder_hidden,
                latent_dim: self.latent_dim,
                include_prior: self.include_prior,
                kind: self.encoder,
            },
            decoder: DecoderSpec {
                task: self.decoder,
                mlp_hidden: self.decoder_hidden,
                rnn_hidden: self.rnn_hidden,
            },
            lambda: if self.deterministic_baseline {
                0.0
            } else {
                self.lambda
            },
            deterministic: self.deterministic_baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Per-sample averages over the epoch.
    pub train: LossBreakdown,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Name of the validation metric (`bce`, `nmse` or `nmse_tmp`; lower is better).
    pub metric: String,
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation metric. The returned model is always
    /// the last epoch's.
    pub best_epoch: usize,
}

/// Trains on standardized splits.
///
/// Each epoch shuffles the training set with the run seed, walks it in
/// batches, and takes one Adam step per batch on
/// `mean(decoder_loss) + λ·mean(KL)`. With `deterministic_baseline` the
/// latent code is the fused mean and the KL term is dropped.
pub fn train(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput(String::from(
            "train and validation splits must be non-empty",
        )));
    }
    if train.task() != cfg.decoder || val.task() != cfg.decoder {
        return Err(Error::InvalidConfig(format!(
            "decoder {} does not match dataset target kind {}",
            cfg.decoder.as_str(),
            train.task().as_str()
        )));
    }
    if train.modalities() != val.modalities() {
        return Err(Error::Schema(String::from(
            "train and validation schemas differ",
        )));
    }

    let time = match cfg.decoder {
        TaskKind::Temporal => {
            TimeScaler::fit(train.samples().iter().filter_map(|s| s.timestamps()))?
        }
        _ => TimeScaler::default(),
    };

    // Independent streams for init, shuffling and noise so that e.g. changing
    // the noise draw count never perturbs the batch order.
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);
    let mut noise = GaussianNoise::new(noise_rng);

    let mut model = Model::new(cfg.model_spec(train), time, &mut init_rng)?;
    let mut adam = AdamState::new(
        crate::nn::Parameterized::params(&model),
        AdamConfig::default(),
    );
    let mode = if cfg.deterministic_baseline {
        LatentMode::Mean
    } else {
        LatentMode::Sample
    };
    let lambda = model.spec().lambda;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut shuffle_rng);
        let (mut sum_dec, mut sum_kl, mut seen) = (0.0, 0.0, 0usize);
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            if batch.is_empty() {
                continue;
            }
            let params = crate::nn::Parameterized::params_mut(&mut model);
            params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let (mut b_dec, mut b_kl) = (0.0, 0.0);
            for &i in batch {
                let l = model.accumulate_gradients(
                    &train.samples()[i],
                    None,
                    mode,
                    cfg.mc_samples,
                    scale,
                    &mut noise,
                )?;
                b_dec += l.decoder_loss;
                b_kl += l.kl;
            }
            let batch_total = (b_dec + lambda * b_kl) * scale;
            if !batch_total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            adam.step(crate::nn::Parameterized::params_mut(&mut model), lr)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {batch_idx}: {e}")))?;
            sum_dec += b_dec;
            sum_kl += b_kl;
            seen += batch.len();
        }
        let n = seen.max(1) as f64;
        let breakdown = iblbo_loss(-sum_dec / n, sum_kl / n, lambda)?;
        let val_metric = validation_metric(&model, val)?;
        records.push(EpochRecord {
            epoch,
            lr,
            train: breakdown,
            val_metric,
        });
    }

    let best_epoch = records
        .iter()
        .min_by(|a, b| a.val_metric.total_cmp(&b.val_metric))
        .map_or(0, |r| r.epoch);
    let history = TrainHistory {
        metric: String::from(task_metric_name(cfg.decoder)),
        epochs: records,
        best_epoch,
    };
    Ok((model, history))
}

/// The deterministic ablation: `z` is the fused mean and the KL term is
/// dropped. The σ heads are still built but never influence the output.
pub fn train_deterministic_baseline(
    train_set: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    let mut cfg = cfg.clone();
    cfg.deterministic_baseline = true;
    train(train_set, val, &cfg)
}

fn task_metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Classification => "bce",
        TaskKind::Regression => "nmse",
        TaskKind::Temporal => "nmse_tmp",
    }
}

/// Task metric used for validation (lower is better).
pub fn validation_metric(model: &Model, val: &Dataset) -> Result<f64> {
    let eval = evaluate(model, val, None)?;
    let name = task_metric_name(model.spec().decoder.task);
    eval.reports
        .iter()
        .find(|r| r.metric == name)
        .map(|r| r.value)
        .ok_or_else(|| Error::InvalidInput(format!("metric {name} unavailable")))
}

/// Deterministic predictions plus the task metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<DecoderOutput>,
    pub reports: Vec<MetricReport>,
}

impl Evaluation {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.reports
            .iter()
            .find(|r| r.metric == name)
            .map(|r| r.value)
    }
}

/// Predicts every sample of a standardized dataset and scores it:
/// `bce` and `accuracy` for classification, `nmse` for regression,
/// `nmse_tmp`, `src` and `src_rank` for sequences.
pub fn evaluate(model: &Model, dataset: &Dataset, mask: Option<&[bool]>) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(String::from(
            "cannot evaluate an empty dataset",
        )));
    }
    let predictions: Vec<DecoderOutput> = dataset
        .samples()
        .iter()
        .map(|s| model.predict(s, mask))
        .collect::<Result<_>>()?;
    let n = predictions.len();
    let mut reports = Vec::new();
    match model.spec().decoder.task {
        TaskKind::Classification => {
            let labels: Vec<bool> = dataset
                .samples()
                .iter()
                .map(|s| matches!(s.target, PopularityTarget::Binary(true)))
                .collect();
            let probs: Vec<f64> = predictions.iter().filter_map(|p| p.as_scalar()).collect();
            let bce = labels
                .iter()
                .zip(&probs)
                .map(|(y, p)| binary_cross_entropy(*p, *y))
                .sum::<f64>()
                / n as f64;
            reports.push(MetricReport::new("bce", bce, n));
            reports.push(MetricReport::new(
                "accuracy",
                metrics::accuracy(&labels, &probs)?,
                n,
            ));
        }
        TaskKind::Regression => {
            let y: Vec<f64> = dataset
                .samples()
                .iter()
                .map(|s| match s.target {
                    PopularityTarget::Scalar(v) => v,
                    _ => f64::NAN,
                })
                .collect();
            let yhat: Vec<f64> = predictions.iter().filter_map(|p| p.as_scalar()).collect();
            reports.push(MetricReport::new("nmse", metrics::nmse(&y, &yhat)?, n));
        }
        TaskKind::Temporal => {
            let y: Vec<Vec<f64>> = dataset
                .samples()
                .iter()
                .map(|s| match &s.target {
                    PopularityTarget::Sequence(q) => q.values.clone(),
                    _ => Vec::new(),
                })
                .collect();
            let yhat: Vec<Vec<f64>> = predictions
                .iter()
                .map(|p| p.as_sequence().map(<[f64]>::to_vec).unwrap_or_default())
                .collect();
            reports.push(MetricReport::new(
                "nmse_tmp",
                metrics::nmse_tmp(&y, &yhat)?,
                n,
            ));
            if y.iter().all(|s| s.len() >= 2) {
                reports.push(MetricReport::new("src", metrics::src(&y, &yhat)?, n));
                reports.push(MetricReport::new(
                    "src_rank",
                    metrics::src_rank(&y, &yhat)?,
                    n,
                ));
            }
        }
    }
    Ok(Evaluation {
        predictions,
        reports,
    })
}
