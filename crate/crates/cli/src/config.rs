//! Flat TOML run configuration.
//!
//! Values are layered: built-in defaults, then the config file, then
//! command-line flags. Unknown keys are rejected by name. Relative paths in
//! a config file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use mmfuse_core::data::TaskKind;
use mmfuse_core::poe::EncoderKind;
use mmfuse_core::synth::SynthConfig;
use mmfuse_core::train::TrainConfig;
use serde::Deserialize;

use crate::error::{io_err, CliError, Result};

pub const DEFAULT_SPLIT: [f64; 3] = [0.64, 0.16, 0.20];

/// The keys accepted in a config file. Every key is optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // training
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub lambda: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub decoder: Option<String>,
    pub deterministic_baseline: Option<bool>,
    pub include_prior: Option<bool>,
    pub encoder: Option<String>,
    pub encoder_hidden: Option<usize>,
    pub latent_dim: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub rnn_hidden: Option<usize>,
    // data
    pub data: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub split: Option<Vec<f64>>,
    pub model: Option<PathBuf>,
    pub drop_modalities: Option<Vec<String>>,
    pub metric: Option<String>,
    pub out: Option<PathBuf>,
    // synthetic data
    pub synth_n_samples: Option<usize>,
    pub synth_latent_dim: Option<usize>,
    pub synth_modality_dims: Option<Vec<usize>>,
    pub synth_noise_scales: Option<Vec<f64>>,
    pub synth_distractor_dims: Option<Vec<usize>>,
    pub synth_seq_len: Option<usize>,
    pub synth_interval_hours: Option<f64>,
    pub synth_base_interval_hours: Option<f64>,
    pub synth_horizon_hours: Option<f64>,
    pub synth_target_noise: Option<f64>,
    pub synth_flip_prob: Option<f64>,
    // sweeps
    pub sweep_lambdas: Option<Vec<f64>>,
    pub sweep_intervals: Option<Vec<f64>>,
    pub sweep_seeds: Option<Vec<u64>>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data,
            &mut cfg.train_data,
            &mut cfg.val_data,
            &mut cfg.test_data,
            &mut cfg.model,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Command-line flags that override file values.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub decoder: Option<TaskKind>,
    pub drop_modalities: Option<Vec<String>>,
    pub deterministic_baseline: bool,
    pub include_prior: Option<bool>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generate from `RunConfig::synth`.
    Synthetic,
    /// One file, split by ratio with the run seed.
    Single(PathBuf),
    /// Pre-split files.
    Split {
        train: PathBuf,
        val: PathBuf,
        test: Option<PathBuf>,
    },
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    /// When set, temporal sweeps over intervals keep this horizon fixed.
    pub synth_horizon_hours: Option<f64>,
    pub source: DataSource,
    pub split: [f64; 3],
    pub model: Option<PathBuf>,
    pub drop_modalities: Vec<String>,
    pub metric: Option<String>,
    pub out: PathBuf,
    pub sweep_lambdas: Vec<f64>,
    pub sweep_intervals: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::new(TaskKind::Regression);
        RunConfig {
            synth: SynthConfig {
                task: train.decoder,
                ..SynthConfig::default()
            },
            train,
            synth_horizon_hours: None,
            source: DataSource::Synthetic,
            split: DEFAULT_SPLIT,
            model: None,
            drop_modalities: Vec::new(),
            metric: None,
            out: PathBuf::from("out"),
            sweep_lambdas: Vec::new(),
            sweep_intervals: Vec::new(),
            sweep_seeds: vec![0],
        }
    }
}

fn parse_encoder(s: &str) -> Result<EncoderKind> {
    match s {
        "poe" | "product_of_experts" => Ok(EncoderKind::ProductOfExperts),
        "early" | "early_fusion" => Ok(EncoderKind::EarlyFusion),
        other => Err(CliError::Config(format!(
            "encoder: unknown kind `{other}` (expected poe or early)"
        ))),
    }
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self> {
        let mut c = RunConfig::default();
        let t = &mut c.train;
        macro_rules! take {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        if let Some(d) = &file.decoder {
            t.decoder = d
                .parse()
                .map_err(|e: mmfuse_core::Error| CliError::Config(format!("decoder: {e}")))?;
        }
        take!(t.epochs, file.epochs);
        take!(t.batch_size, file.batch_size);
        take!(t.lr_start, file.lr_start);
        take!(t.lr_end, file.lr_end);
        take!(t.lambda, file.lambda);
        take!(t.mc_samples, file.mc_samples);
        take!(t.seed, file.seed);
        take!(t.deterministic_baseline, file.deterministic_baseline);
        take!(t.include_prior, file.include_prior);
        if let Some(e) = &file.encoder {
            t.encoder = parse_encoder(e)?;
        }
        take!(t.encoder_hidden, file.encoder_hidden);
        take!(t.latent_dim, file.latent_dim);
        take!(t.decoder_hidden, file.decoder_hidden);
        take!(t.rnn_hidden, file.rnn_hidden);

        take!(t.seed, flags.seed);
        take!(t.lambda, flags.lambda);
        take!(t.decoder, flags.decoder);
        take!(t.include_prior, flags.include_prior);
        t.deterministic_baseline |= flags.deterministic_baseline;

        let s = &mut c.synth;
        take!(s.n_samples, file.synth_n_samples);
        take!(s.latent_dim, file.synth_latent_dim);
        take!(s.modality_dims, file.synth_modality_dims);
        take!(s.target_noise, file.synth_target_noise);
        take!(s.flip_prob, file.synth_flip_prob);
        take!(s.seq_len, file.synth_seq_len);
        take!(s.interval_hours, file.synth_interval_hours);
        take!(s.base_interval_hours, file.synth_base_interval_hours);
        let k = s.modality_dims.len();
        // per-modality lists default to the built-in value broadcast to K
        s.noise_scales = file
            .synth_noise_scales
            .clone()
            .unwrap_or_else(|| vec![SynthConfig::default().noise_scales[0]; k]);
        s.distractor_dims = file
            .synth_distractor_dims
            .clone()
            .unwrap_or_else(|| vec![0; k]);
        s.task = c.train.decoder;
        s.seed = c.train.seed;
        c.synth_horizon_hours = file.synth_horizon_hours;

        let data = flags.data.clone().or_else(|| file.data.clone());
        c.source = match (data, &file.train_data, &file.val_data) {
            (Some(p), None, None) => DataSource::Single(p),
            (None, Some(tr), Some(va)) => DataSource::Split {
                train: tr.clone(),
                val: va.clone(),
                test: file.test_data.clone(),
            },
            (None, None, None) => DataSource::Synthetic,
            (Some(_), _, _) => {
                return Err(CliError::Config(String::from(
                    "data: give either `data` or `train_data`/`val_data`, not both",
                )))
            }
            _ => {
                return Err(CliError::Config(String::from(
                    "train_data: `train_data` and `val_data` must be given together",
                )))
            }
        };
        if let Some(split) = &file.split {
            c.split = <[f64; 3]>::try_from(split.as_slice()).map_err(|_| {
                CliError::Config(format!("split: expected 3 ratios, got {}", split.len()))
            })?;
        }
        c.model = flags.model.clone().or_else(|| file.model.clone());
        take!(c.drop_modalities, file.drop_modalities);
        take!(c.drop_modalities, flags.drop_modalities);
        c.metric = file.metric.clone();
        take!(c.out, file.out);
        take!(c.out, flags.out);
        take!(c.sweep_lambdas, file.sweep_lambdas);
        take!(c.sweep_intervals, file.sweep_intervals);
        take!(c.sweep_seeds, file.sweep_seeds);

        c.train.validate()?;
        Ok(c)
    }

    /// Loads `path` (if any) and applies `flags` on top.
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::resolve(&file, flags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::resolve(&FileConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(c.train.epochs, 50);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.train.encoder_hidden, 32);
        assert_eq!(c.train.latent_dim, 8);
        assert_eq!(c.train.rnn_hidden, 8);
        assert_eq!((c.train.lr_start, c.train.lr_end), (5e-4, 5e-5));
        assert_eq!(c.source, DataSource::Synthetic);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = FileConfig::parse("epochs = 3\nlambada = 0.3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("lambada"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let file = FileConfig::parse("lambda = 0.3\nseed = 4\ndecoder = \"tmp\"\n").unwrap();
        let flags = Overrides {
            lambda: Some(0.7),
            ..Default::default()
        };
        let c = RunConfig::resolve(&file, &flags).unwrap();
        assert_eq!(c.train.lambda, 0.7);
        assert_eq!(c.train.seed, 4);
        assert_eq!(c.synth.seed, 4);
        assert_eq!(c.train.decoder, TaskKind::Temporal);
        assert_eq!(c.synth.task, TaskKind::Temporal);
    }

    #[test]
    fn bad_values_are_rejected() {
        let file = FileConfig::parse("decoder = \"seq\"").unwrap();
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
        let file = FileConfig::parse("epochs = 0").unwrap();
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
        let file = FileConfig::parse("split = [0.5, 0.5]").unwrap();
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
    }
}
