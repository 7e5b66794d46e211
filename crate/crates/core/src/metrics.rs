//! Evaluation metrics: nMSE, its temporal variant, and the sequence trend
//! correlation (SRC). All standard deviations are population (÷N) ones.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<f64>>,
}

impl MetricReport {
    pub fn new(metric: &str, value: f64, n: usize) -> Self {
        MetricReport {
            metric: String::from(metric),
            value,
            n,
            per_sample: None,
        }
    }
}

/// `Σ(y − ŷ)² / (N σ_y²)`.
pub fn nmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::dim("nmse", y.len(), yhat.len()));
    }
    if y.len() < 2 {
        return Err(Error::InvalidInput(String::from(
            "nmse needs at least two samples",
        )));
    }
    let var = math::population_variance(y);
    if !(var > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "nmse is undefined for constant groundtruth",
        )));
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / (y.len() as f64 * var))
}

fn check_sequences(y: &[Vec<f64>], yhat: &[Vec<f64>], what: &'static str) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::dim(what, y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput(String::from("no sequences to score")));
    }
    for (a, b) in y.iter().zip(yhat) {
        if a.len() != b.len() {
            return Err(Error::dim(what, a.len(), b.len()));
        }
        if a.is_empty() {
            return Err(Error::InvalidInput(String::from("empty sequence")));
        }
    }
    Ok(())
}

/// `(1/(N σ_y²)) Σ_i (1/T) Σ_j (y_i^j − ŷ_i^j)²` with `σ_y` taken over every
/// groundtruth entry.
pub fn nmse_tmp(y: &[Vec<f64>], yhat: &[Vec<f64>]) -> Result<f64> {
    check_sequences(y, yhat, "nmse_tmp")?;
    let all: Vec<f64> = y.iter().flatten().copied().collect();
    let var = math::population_variance(&all);
    if !(var > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "nmse_tmp is undefined for constant groundtruth",
        )));
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64)
        .sum();
    Ok(total / (y.len() as f64 * var))
}

/// Correlation of one pair of sequences after per-sequence standardization,
/// or 0 if either is constant.
pub fn sequence_correlation(y: &[f64], yhat: &[f64]) -> f64 {
    let t = y.len() as f64;
    let (my, mh) = (math::mean(y), math::mean(yhat));
    let sy = math::sqrt(math::population_variance(y));
    let sh = math::sqrt(math::population_variance(yhat));
    if !(sy > 0.0) || !(sh > 0.0) {
        return 0.0;
    }
    let r = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| ((a - my) / sy) * ((b - mh) / sh))
        .sum::<f64>()
        / t;
    // roundoff can push |r| a hair past 1
    r.clamp(-1.0, 1.0)
}

/// Mean over samples of the per-sequence standardized correlation.
pub fn src(y: &[Vec<f64>], yhat: &[Vec<f64>]) -> Result<f64> {
    Ok(src_report(y, yhat)?.value)
}

pub fn src_report(y: &[Vec<f64>], yhat: &[Vec<f64>]) -> Result<MetricReport> {
    check_sequences(y, yhat, "src")?;
    if y.iter().any(|s| s.len() < 2) {
        return Err(Error::InvalidInput(String::from(
            "src needs sequences of length ≥ 2",
        )));
    }
    let per: Vec<f64> = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| sequence_correlation(a, b))
        .collect();
    let mut report = MetricReport::new("src", math::mean(&per), per.len());
    report.per_sample = Some(per);
    Ok(report)
}

/// Ranks with ties sharing their average rank (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-based variant of [`src`]: the same formula applied to within-sequence ranks.
pub fn src_rank(y: &[Vec<f64>], yhat: &[Vec<f64>]) -> Result<f64> {
    let ry: Vec<Vec<f64>> = y.iter().map(|s| average_ranks(s)).collect();
    let rh: Vec<Vec<f64>> = yhat.iter().map(|s| average_ranks(s)).collect();
    src(&ry, &rh)
}

/// Fraction of probabilities on the right side of 0.5.
pub fn accuracy(labels: &[bool], probabilities: &[f64]) -> Result<f64> {
    if labels.len() != probabilities.len() {
        return Err(Error::dim("accuracy", labels.len(), probabilities.len()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput(String::from("no samples")));
    }
    let hits = labels
        .iter()
        .zip(probabilities)
        .filter(|(y, p)| **y == (**p >= 0.5))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
