//! Synthetic multimodal popularity data with known ground truth.
//!
//! A latent `z* ~ N(0, I)` drives every modality through a random linear
//! map plus noise (`x_i = A_i z* + b_i + η_i ε`), padded with pure-noise
//! distractor columns. Targets are functions of `w·z*`:
//!
//! * regression: `y = w·z* + σ_y ε`
//! * classification: `y = [w·z* > 0]`, flipped with a fixed probability
//! * temporal: increments on a fine grid follow
//!   `softplus(w·z*) · s(t) + noise`, with `s(t) = (t/τ)·exp(1 − t/τ)` and
//!   `τ` the first window end, then summed into windows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    resample_sequence, Dataset, ModalitySpec, MultimodalSample, PopularityTarget, TaskKind,
};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::Matrix;

const NAMED_MODALITIES: [&str; 4] = ["visual", "acoustic", "textual", "social"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub latent_dim: usize,
    /// Informative columns per modality.
    pub modality_dims: Vec<usize>,
    /// Feature noise scale `η_i` per modality.
    pub noise_scales: Vec<f64>,
    /// Pure-noise columns appended to each modality.
    pub distractor_dims: Vec<usize>,
    pub task: TaskKind,
    /// Windows per temporal target.
    pub seq_len: usize,
    /// Window length in hours.
    pub interval_hours: f64,
    /// Fine-grid increment length in hours.
    pub base_interval_hours: f64,
    /// Target noise std (temporal targets: per window of one hour; a window
    /// of `h` hours carries std `target_noise / √h`).
    pub target_noise: f64,
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 1000,
            latent_dim: 4,
            modality_dims: vec![8; 4],
            noise_scales: vec![0.5; 4],
            distractor_dims: vec![0; 4],
            task: TaskKind::Regression,
            seq_len: 9,
            interval_hours: 8.0,
            base_interval_hours: 0.25,
            target_noise: 0.1,
            flip_prob: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_modalities(&self) -> usize {
        self.modality_dims.len()
    }

    pub fn modality_names(&self) -> Vec<String> {
        let k = self.num_modalities();
        (0..k)
            .map(|i| {
                if k <= NAMED_MODALITIES.len() {
                    String::from(NAMED_MODALITIES[i])
                } else {
                    format!("m{i}")
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let k = self.num_modalities();
        if self.n_samples == 0 || self.latent_dim == 0 || k == 0 {
            return bad(String::from(
                "n_samples, latent_dim and the modality count must be ≥ 1",
            ));
        }
        if self.noise_scales.len() != k || self.distractor_dims.len() != k {
            return bad(format!(
                "noise_scales ({}) and distractor_dims ({}) need one entry per modality ({k})",
                self.noise_scales.len(),
                self.distractor_dims.len()
            ));
        }
        if self.modality_dims.iter().any(|d| *d == 0) {
            return bad(String::from("every modality needs ≥ 1 informative column"));
        }
        if self
            .noise_scales
            .iter()
            .any(|n| !(*n >= 0.0 && n.is_finite()))
        {
            return bad(String::from("noise scales must be finite and ≥ 0"));
        }
        if !(self.target_noise >= 0.0 && self.target_noise.is_finite()) {
            return bad(String::from("target_noise must be finite and ≥ 0"));
        }
        if !(0.0..=0.5).contains(&self.flip_prob) {
            return bad(format!(
                "flip_prob must lie in [0, 0.5], got {}",
                self.flip_prob
            ));
        }
        if self.task == TaskKind::Temporal {
            if self.seq_len == 0 {
                return bad(String::from("seq_len must be ≥ 1"));
            }
            if !(self.base_interval_hours > 0.0 && self.interval_hours > 0.0) {
                return bad(String::from("intervals must be positive"));
            }
            let ratio = self.interval_hours / self.base_interval_hours;
            if math::abs(ratio - math::round(ratio)) > 1e-9 * ratio.max(1.0) || ratio < 0.5 {
                return bad(format!(
                    "interval_hours {} is not a multiple of base_interval_hours {}",
                    self.interval_hours, self.base_interval_hours
                ));
            }
        }
        Ok(())
    }

    /// Increments per window on the fine grid.
    pub fn increments_per_window(&self) -> usize {
        math::round(self.interval_hours / self.base_interval_hours) as usize
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: SynthConfig,
    /// `A_i`, one `dim_i × latent_dim` matrix per modality.
    pub loadings: Vec<Matrix>,
    pub offsets: Vec<Vec<f64>>,
    /// Unit-norm target direction `w`.
    pub weights: Vec<f64>,
    /// Peak time `τ` of the temporal shape, in hours.
    pub peak_hours: f64,
    /// `z*` of every sample, in dataset order.
    pub latents: Vec<Vec<f64>>,
}

impl SynthMeta {
    /// Noise-free target score `w·z*` of sample `i`.
    pub fn score(&self, i: usize) -> f64 {
        math::dot(&self.weights, &self.latents[i])
    }
}

/// `s(t) = (t/τ)·exp(1 − t/τ)`: zero at release, peak 1 at `τ`, then decay.
pub fn temporal_shape(t: f64, peak: f64) -> f64 {
    let u = t / peak;
    u * math::exp(1.0 - u)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<(Dataset, SynthMeta)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.num_modalities();
    let latent = cfg.latent_dim;
    let scale = 1.0 / math::sqrt(latent as f64);

    let loadings: Vec<Matrix> = cfg
        .modality_dims
        .iter()
        .map(|&d| {
            let v = (0..d * latent).map(|_| normal(&mut rng) * scale).collect();
            Matrix::from_vec(d, latent, v).expect("consistent shape")
        })
        .collect();
    let offsets: Vec<Vec<f64>> = cfg
        .modality_dims
        .iter()
        .map(|&d| (0..d).map(|_| normal(&mut rng)).collect())
        .collect();
    let mut weights: Vec<f64> = (0..latent).map(|_| normal(&mut rng)).collect();
    let norm = math::sqrt(math::dot(&weights, &weights)).max(1e-12);
    weights.iter_mut().for_each(|w| *w /= norm);
    let peak = cfg.interval_hours;

    let specs: Vec<ModalitySpec> = cfg
        .modality_names()
        .into_iter()
        .zip(cfg.modality_dims.iter().zip(&cfg.distractor_dims))
        .map(|(name, (d, x))| ModalitySpec { name, dim: d + x })
        .collect();
    let mut dataset = Dataset::new(specs, cfg.task)?;
    let mut latents = Vec::with_capacity(cfg.n_samples);

    for n in 0..cfg.n_samples {
        let z: Vec<f64> = (0..latent).map(|_| normal(&mut rng)).collect();
        let mut features = Vec::with_capacity(k);
        for i in 0..k {
            let mut x = loadings[i].matvec(&z)?;
            for (v, b) in x.iter_mut().zip(&offsets[i]) {
                *v += b + cfg.noise_scales[i] * normal(&mut rng);
            }
            x.extend((0..cfg.distractor_dims[i]).map(|_| normal(&mut rng)));
            features.push(Some(x));
        }
        let score = math::dot(&weights, &z);
        let target = match cfg.task {
            TaskKind::Regression => {
                PopularityTarget::Scalar(score + cfg.target_noise * normal(&mut rng))
            }
            TaskKind::Classification => {
                let flip = rng.random::<f64>() < cfg.flip_prob;
                PopularityTarget::Binary((score > 0.0) != flip)
            }
            TaskKind::Temporal => {
                let amplitude = math::softplus(score);
                let base = cfg.base_interval_hours;
                let fine = cfg.seq_len * cfg.increments_per_window();
                // Noise of std target_noise per sqrt-hour accrues on the fine
                // grid and is averaged per window, so wider windows are
                // cleaner. The signal is the shape at each window end.
                let step_noise = cfg.target_noise * math::sqrt(base);
                let noise: Vec<f64> = (0..fine).map(|_| step_noise * normal(&mut rng)).collect();
                let mut seq = resample_sequence(&noise, base, cfg.interval_hours)?;
                for (v, t) in seq.values.iter_mut().zip(&seq.timestamps) {
                    *v = amplitude * temporal_shape(*t, peak) + *v / cfg.interval_hours;
                }
                PopularityTarget::Sequence(seq)
            }
        };
        dataset.push(MultimodalSample {
            id: format!("syn{n:06}"),
            features,
            target,
        })?;
        latents.push(z);
    }

    Ok((
        dataset,
        SynthMeta {
            config: cfg.clone(),
            loadings,
            offsets,
            weights,
            peak_hours: peak,
            latents,
        },
    ))
}
