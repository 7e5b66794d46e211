//! Samples, datasets, feature standardization, sequence resampling and
//! train/validation/test splitting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
pub use crate::poe::ModalitySpec;

/// Floor applied to column standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Prediction task, which is also the kind of target a dataset carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "cls")]
    Classification,
    #[serde(rename = "reg")]
    Regression,
    #[serde(rename = "tmp")]
    Temporal,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "cls",
            TaskKind::Regression => "reg",
            TaskKind::Temporal => "tmp",
        }
    }
}

impl core::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(TaskKind::Classification),
            "reg" => Ok(TaskKind::Regression),
            "tmp" => Ok(TaskKind::Temporal),
            other => Err(Error::InvalidConfig(format!(
                "unknown decoder kind `{other}` (expected cls, reg or tmp)"
            ))),
        }
    }
}

/// Popularity values with absolute timestamps (hours since release).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTarget {
    pub values: Vec<f64>,
    pub timestamps: Vec<f64>,
}

impl SequenceTarget {
    pub fn new(values: Vec<f64>, timestamps: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput(String::from(
                "sequence target must be non-empty",
            )));
        }
        if values.len() != timestamps.len() {
            return Err(Error::dim(
                "sequence timestamps",
                values.len(),
                timestamps.len(),
            ));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(String::from(
                "sequence timestamps must be strictly increasing",
            )));
        }
        Ok(SequenceTarget { values, timestamps })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PopularityTarget {
    Binary(bool),
    Scalar(f64),
    Sequence(SequenceTarget),
}

impl PopularityTarget {
    pub fn kind(&self) -> TaskKind {
        match self {
            PopularityTarget::Binary(_) => TaskKind::Classification,
            PopularityTarget::Scalar(_) => TaskKind::Regression,
            PopularityTarget::Sequence(_) => TaskKind::Temporal,
        }
    }
}

/// One sample: a feature vector per declared modality (`None` when missing)
/// and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub id: String,
    pub features: Vec<Option<Vec<f64>>>,
    pub target: PopularityTarget,
}

impl MultimodalSample {
    /// Features of all modalities concatenated in declaration order, or
    /// `None` if any modality is missing.
    pub fn concatenated(&self) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for f in &self.features {
            out.extend_from_slice(f.as_deref()?);
        }
        Some(out)
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        match &self.target {
            PopularityTarget::Sequence(s) => Some(&s.timestamps),
            _ => None,
        }
    }
}

/// A schema (modalities and target kind) plus samples that conform to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    modalities: Vec<ModalitySpec>,
    task: TaskKind,
    samples: Vec<MultimodalSample>,
}

impl Dataset {
    pub fn new(modalities: Vec<ModalitySpec>, task: TaskKind) -> Result<Self> {
        for (i, m) in modalities.iter().enumerate() {
            if modalities[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Schema(format!("duplicate modality `{}`", m.name)));
            }
            if m.dim == 0 {
                return Err(Error::Schema(format!(
                    "modality `{}` has zero width",
                    m.name
                )));
            }
        }
        Ok(Dataset {
            modalities,
            task,
            samples: Vec::new(),
        })
    }

    pub fn modalities(&self) -> &[ModalitySpec] {
        &self.modalities
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn samples(&self) -> &[MultimodalSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample after checking it against the schema.
    pub fn push(&mut self, sample: MultimodalSample) -> Result<()> {
        if sample.features.len() != self.modalities.len() {
            return Err(Error::Schema(format!(
                "sample `{}` has {} modality slots, dataset declares {}",
                sample.id,
                sample.features.len(),
                self.modalities.len()
            )));
        }
        for (spec, f) in self.modalities.iter().zip(&sample.features) {
            if let Some(f) = f {
                if f.len() != spec.dim {
                    return Err(Error::Schema(format!(
                        "sample `{}` modality `{}` has {} values, expected {}",
                        sample.id,
                        spec.name,
                        f.len(),
                        spec.dim
                    )));
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "sample `{}` modality `{}`",
                        sample.id, spec.name
                    )));
                }
            }
        }
        if sample.target.kind() != self.task {
            return Err(Error::Schema(format!(
                "sample `{}` has a {} target in a {} dataset",
                sample.id,
                sample.target.kind().as_str(),
                self.task.as_str()
            )));
        }
        self.samples.push(sample);
        Ok(())
    }

    /// A dataset with the same schema holding the given samples.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            modalities: self.modalities.clone(),
            task: self.task,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Same schema, samples replaced by `f` applied to each.
    pub fn map_samples<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&MultimodalSample) -> Result<MultimodalSample>,
    {
        let mut out = Dataset::new(self.modalities.clone(), self.task)?;
        for s in &self.samples {
            out.push(f(s)?)?;
        }
        Ok(out)
    }
}

/// Per-column mean and (population) standard deviation for each modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub modalities: Vec<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits per-column statistics on `train`, skipping missing modalities.
pub fn standardize_fit(train: &Dataset) -> Result<StandardizationStats> {
    if train.is_empty() {
        return Err(Error::InvalidInput(String::from(
            "cannot fit standardization on zero samples",
        )));
    }
    let mut modalities = Vec::with_capacity(train.modalities.len());
    for (k, spec) in train.modalities.iter().enumerate() {
        let present: Vec<&[f64]> = train
            .samples
            .iter()
            .filter_map(|s| s.features[k].as_deref())
            .collect();
        if present.is_empty() {
            return Err(Error::InvalidInput(format!(
                "modality `{}` is missing from every training sample",
                spec.name
            )));
        }
        let n = present.len() as f64;
        let mut mean = alloc::vec![0.0; spec.dim];
        for row in &present {
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; spec.dim];
        for row in &present {
            for ((s, v), m) in var.iter_mut().zip(*row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| math::sqrt(s / n)).collect();
        modalities.push(ColumnStats {
            name: spec.name.clone(),
            mean,
            std,
        });
    }
    Ok(StandardizationStats { modalities })
}

impl StandardizationStats {
    /// `(x − mean) / max(std, 1e-8)` per column; missing modalities untouched.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if self.modalities.len() != dataset.modalities.len() {
            return Err(Error::Schema(format!(
                "standardization covers {} modalities, dataset has {}",
                self.modalities.len(),
                dataset.modalities.len()
            )));
        }
        for (stats, spec) in self.modalities.iter().zip(&dataset.modalities) {
            if stats.name != spec.name || stats.mean.len() != spec.dim {
                return Err(Error::Schema(format!(
                    "standardization stats for `{}` do not match modality `{}`",
                    stats.name, spec.name
                )));
            }
        }
        dataset.map_samples(|s| Ok(self.apply_sample(s)))
    }

    pub fn apply_sample(&self, sample: &MultimodalSample) -> MultimodalSample {
        let features = sample
            .features
            .iter()
            .zip(&self.modalities)
            .map(|(f, st)| {
                f.as_ref().map(|f| {
                    f.iter()
                        .zip(st.mean.iter().zip(&st.std))
                        .map(|(v, (m, s))| (v - m) / s.max(STD_FLOOR))
                        .collect()
                })
            })
            .collect();
        MultimodalSample {
            id: sample.id.clone(),
            features,
            target: sample.target.clone(),
        }
    }
}

/// Sums consecutive increments recorded every `base_interval` into windows
/// of length `window`. Timestamps are the window ends, measured from 0.
pub fn resample_sequence(
    increments: &[f64],
    base_interval: f64,
    window: f64,
) -> Result<SequenceTarget> {
    if !(base_interval > 0.0) || !(window > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "intervals must be positive (base {base_interval}, window {window})"
        )));
    }
    let ratio = window / base_interval;
    let per_window = math::round(ratio);
    if per_window < 1.0 || math::abs(ratio - per_window) > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "resample interval {window} is not a multiple of the base interval {base_interval}"
        )));
    }
    let per_window = per_window as usize;
    if increments.is_empty() || increments.len() % per_window != 0 {
        return Err(Error::InvalidConfig(format!(
            "{} increments cannot be split into windows of {per_window}",
            increments.len()
        )));
    }
    let values: Vec<f64> = increments
        .chunks(per_window)
        .map(|c| c.iter().sum())
        .collect();
    let timestamps = (1..=values.len()).map(|j| j as f64 * window).collect();
    SequenceTarget::new(values, timestamps)
}

/// Seeded shuffle then a three-way partition by `ratios` (train, val, test).
pub fn split_dataset(
    dataset: &Dataset,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if math::abs(sum - 1.0) > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split ratios sum to {sum}, expected 1"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (math::round(n as f64 * ratios[0]) as usize).min(n);
    let n_val = (math::round(n as f64 * ratios[1]) as usize).min(n - n_train);
    Ok((
        dataset.subset(&order[..n_train]),
        dataset.subset(&order[n_train..n_train + n_val]),
        dataset.subset(&order[n_train + n_val..]),
    ))
}
