//! Shared plumbing: data loading, splitting, standardization and training.

use mmfuse_core::data::{split_dataset, standardize_fit, Dataset, StandardizationStats};
use mmfuse_core::model::Model;
use mmfuse_core::synth::{synth_generate, SynthMeta};
use mmfuse_core::train::{train, TrainConfig, TrainHistory};

use crate::config::{DataSource, RunConfig};
use crate::dataset_io::read_dataset;
use crate::error::{CliError, Result};

/// Standardized splits plus the statistics fitted on the training split.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Option<Dataset>,
    pub stats: StandardizationStats,
}

/// Raw (unstandardized) data for a run, before splitting.
pub enum RawData {
    Whole(Dataset, Option<SynthMeta>),
    Split {
        train: Dataset,
        val: Dataset,
        test: Option<Dataset>,
    },
}

pub fn load_raw(cfg: &RunConfig) -> Result<RawData> {
    Ok(match &cfg.source {
        DataSource::Synthetic => {
            let (d, meta) = synth_generate(&cfg.synth)?;
            RawData::Whole(d, Some(meta))
        }
        DataSource::Single(p) => RawData::Whole(read_dataset(p)?, None),
        DataSource::Split { train, val, test } => RawData::Split {
            train: read_dataset(train)?,
            val: read_dataset(val)?,
            test: test.as_ref().map(read_dataset).transpose()?,
        },
    })
}

/// Splits (when needed) with `seed`, then standardizes every split with
/// statistics fitted on the training split.
pub fn prepare(raw: RawData, split: [f64; 3], seed: u64) -> Result<Splits> {
    let (train, val, test) = match raw {
        RawData::Whole(d, _) => {
            if d.is_empty() {
                return Err(CliError::Config(String::from("data: the dataset is empty")));
            }
            let (a, b, c) = split_dataset(&d, split, seed)?;
            (a, b, Some(c).filter(|c| !c.is_empty()))
        }
        RawData::Split { train, val, test } => (train, val, test),
    };
    let stats = standardize_fit(&train)?;
    Ok(Splits {
        train: stats.apply(&train)?,
        val: stats.apply(&val)?,
        test: test.map(|t| stats.apply(&t)).transpose()?,
        stats,
    })
}

/// Trains on prepared splits and stores the feature statistics in the model
/// so it can standardize raw inputs later.
pub fn fit(splits: &Splits, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    let (mut model, history) = train(&splits.train, &splits.val, cfg)?;
    model.set_feature_stats(Some(splits.stats.clone()));
    Ok((model, history))
}

/// Turns modality names to drop into an availability mask for `model`.
/// Names the model does not know are an error.
pub fn modality_mask(model: &Model, drop: &[String]) -> Result<Option<Vec<bool>>> {
    if drop.is_empty() {
        return Ok(None);
    }
    let names = &model.spec().encoder.modalities;
    let mut mask = vec![true; names.len()];
    for d in drop {
        let i = names.iter().position(|m| &m.name == d).ok_or_else(|| {
            CliError::Config(format!("drop-modalities: the model has no modality `{d}`"))
        })?;
        mask[i] = false;
    }
    Ok(Some(mask))
}
