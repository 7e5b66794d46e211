//! The information-bottleneck bound: analytic KL to the unit Gaussian,
//! reparameterized sampling, and the combined loss.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::poe::GaussianEmbedding;

/// `KL(N(μ, σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − 2 lnσ)`.
pub fn kl_standard_normal(emb: &GaussianEmbedding) -> f64 {
    0.5 * emb
        .mean
        .iter()
        .zip(&emb.std)
        .map(|(m, s)| m * m + s * s - 1.0 - 2.0 * math::ln(*s))
        .sum::<f64>()
}

/// `(∂KL/∂μ, ∂KL/∂lnσ) = (μ, σ² − 1)`.
pub fn kl_standard_normal_grad(emb: &GaussianEmbedding) -> (Vec<f64>, Vec<f64>) {
    (
        emb.mean.clone(),
        emb.std.iter().map(|s| s * s - 1.0).collect(),
    )
}

/// `z = μ + σ ⊙ ε`.
pub fn reparameterize(emb: &GaussianEmbedding, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != emb.dim() {
        return Err(Error::dim("reparameterize noise", emb.dim(), noise.len()));
    }
    Ok(emb
        .mean
        .iter()
        .zip(&emb.std)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// The two terms of the bound and the minimized total `−(ell − λ·kl)`.
///
/// `ell` is the expected log-likelihood without its additive constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ell: f64,
    pub kl: f64,
    pub lambda: f64,
    pub total: f64,
}

pub fn iblbo_loss(ell: f64, kl: f64, lambda: f64) -> Result<LossBreakdown> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "lambda must be ≥ 0, got {lambda}"
        )));
    }
    if kl < 0.0 {
        return Err(Error::InvalidInput(format!("kl must be ≥ 0, got {kl}")));
    }
    Ok(LossBreakdown {
        ell,
        kl,
        lambda,
        total: -ell + lambda * kl,
    })
}
