//! Gaussian encoders and product-of-experts fusion.
//!
//! Each modality gets its own MLP that emits a diagonal Gaussian expert.
//! Experts are fused by multiplying densities: precisions add and the fused
//! mean is the precision-weighted average of the expert means. An optional
//! unit-Gaussian prior expert (mean 0, precision 1) can join the product.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::nn::{Activation, Dense, DenseCache, ParamStore};

/// Bound on the log standard deviation emitted by an encoder head.
pub const LOG_STD_CLAMP: f64 = 7.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianExpert {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianExpert {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        validate_gaussian(&mean, &std)?;
        Ok(GaussianExpert { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Element-wise `1/σ²`.
    pub fn precision(&self) -> Vec<f64> {
        self.std.iter().map(|s| 1.0 / (s * s)).collect()
    }
}

/// Diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEmbedding {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianEmbedding {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        validate_gaussian(&mean, &std)?;
        Ok(GaussianEmbedding { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Vec<f64> {
        self.std.iter().map(|s| 1.0 / (s * s)).collect()
    }
}

fn validate_gaussian(mean: &[f64], std: &[f64]) -> Result<()> {
    if mean.len() != std.len() {
        return Err(Error::dim("gaussian std", mean.len(), std.len()));
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite(String::from("gaussian mean")));
    }
    if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidInput(String::from(
            "gaussian std must be strictly positive and finite",
        )));
    }
    Ok(())
}

/// Fuses experts by multiplying their densities.
///
/// Precision is `Σ 1/σ_i²` (plus one per dimension with the prior),
/// `σ = 1/√precision` and `μ = Σ(μ_i/σ_i²) / precision`.
pub fn poe_fuse(experts: &[GaussianExpert], include_prior: bool) -> Result<GaussianEmbedding> {
    let dim = match experts.first() {
        Some(e) => e.dim(),
        None if include_prior => {
            return Err(Error::InvalidInput(String::from(
                "cannot infer latent dimension from an empty expert list; use poe_fuse_dim",
            )))
        }
        None => {
            return Err(Error::InvalidInput(String::from(
                "no experts to fuse and the prior is excluded",
            )))
        }
    };
    poe_fuse_dim(experts, include_prior, dim)
}

/// [`poe_fuse`] with an explicit latent dimension, so an empty expert list
/// fused with the prior is well defined (it returns the prior).
pub fn poe_fuse_dim(
    experts: &[GaussianExpert],
    include_prior: bool,
    dim: usize,
) -> Result<GaussianEmbedding> {
    if experts.is_empty() && !include_prior {
        return Err(Error::InvalidInput(String::from(
            "no experts to fuse and the prior is excluded",
        )));
    }
    let prior = if include_prior { 1.0 } else { 0.0 };
    let mut precision = vec![prior; dim];
    let mut weighted = vec![0.0; dim];
    for e in experts {
        if e.dim() != dim {
            return Err(Error::dim("poe_fuse expert", dim, e.dim()));
        }
        for d in 0..dim {
            let p = 1.0 / (e.std[d] * e.std[d]);
            precision[d] += p;
            weighted[d] += e.mean[d] * p;
        }
    }
    let mean = weighted
        .iter()
        .zip(&precision)
        .map(|(w, p)| w / p)
        .collect();
    let std = precision.iter().map(|p| 1.0 / math::sqrt(*p)).collect();
    Ok(GaussianEmbedding { mean, std })
}

/// Fuses only the experts whose entry in `available` is true.
pub fn drop_modalities(
    experts: &[GaussianExpert],
    available: &[bool],
    include_prior: bool,
) -> Result<GaussianEmbedding> {
    if available.len() != experts.len() {
        return Err(Error::dim(
            "drop_modalities mask",
            experts.len(),
            available.len(),
        ));
    }
    let kept: Vec<GaussianExpert> = experts
        .iter()
        .zip(available)
        .filter(|(_, &keep)| keep)
        .map(|(e, _)| e.clone())
        .collect();
    if kept.is_empty() && !include_prior {
        return Err(Error::InvalidInput(String::from(
            "every modality is masked and the prior is excluded",
        )));
    }
    let dim = experts.first().map_or(0, |e| e.dim());
    poe_fuse_dim(&kept, include_prior, dim)
}

/// Gradients of a fused embedding pushed back to its experts.
///
/// `d_mean` and `d_log_std` are `∂L/∂μ` and `∂L/∂lnσ` of the fused Gaussian.
/// Returns `(∂L/∂μ_i, ∂L/∂lnσ_i)` per expert, in input order.
pub fn poe_backward(
    experts: &[&GaussianExpert],
    fused: &GaussianEmbedding,
    d_mean: &[f64],
    d_log_std: &[f64],
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = fused.dim();
    let total: Vec<f64> = fused.std.iter().map(|s| 1.0 / (s * s)).collect();
    experts
        .iter()
        .map(|e| {
            let mut dm = vec![0.0; dim];
            let mut ds = vec![0.0; dim];
            for d in 0..dim {
                let p = 1.0 / (e.std[d] * e.std[d]);
                let big_p = total[d];
                dm[d] = d_mean[d] * p / big_p;
                // ∂μ/∂p_i = (μ_i − μ)/P, ∂lnσ/∂P = −1/(2P), ∂p_i/∂lnσ_i = −2p_i
                let d_p =
                    d_mean[d] * (e.mean[d] - fused.mean[d]) / big_p - d_log_std[d] / (2.0 * big_p);
                ds[d] = d_p * (-2.0 * p);
            }
            (dm, ds)
        })
        .collect()
}

/// Shape of one modality's input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// One Gaussian expert per modality fused by product of experts.
    #[default]
    ProductOfExperts,
    /// A single MLP over the concatenated features (baseline).
    EarlyFusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub modalities: Vec<ModalitySpec>,
    pub hidden: usize,
    pub latent_dim: usize,
    pub include_prior: bool,
    #[serde(default)]
    pub kind: EncoderKind,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::InvalidConfig(String::from(
                "encoder needs at least one modality",
            )));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig(String::from(
                "encoder hidden width must be ≥ 1",
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig(String::from(
                "latent dimension must be ≥ 1",
            )));
        }
        for m in &self.modalities {
            if m.dim == 0 {
                return Err(Error::InvalidConfig(format!(
                    "modality `{}` has zero width",
                    m.name
                )));
            }
        }
        Ok(())
    }
}

/// One hidden relu layer followed by linear mean and log-std heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMlp {
    pub hidden: Dense,
    pub mean_head: Dense,
    pub log_std_head: Dense,
}

#[derive(Debug, Clone)]
pub struct GaussianMlpCache {
    hidden: DenseCache,
    mean: DenseCache,
    log_std: DenseCache,
    /// Raw head outputs that fell inside the clamp (gradient passes).
    unclamped: Vec<bool>,
}

impl GaussianMlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        latent: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GaussianMlp {
            hidden: Dense::new(
                store,
                &format!("{name}.hidden"),
                input,
                hidden,
                Activation::Relu,
                rng,
            )?,
            mean_head: Dense::new(
                store,
                &format!("{name}.mean"),
                hidden,
                latent,
                Activation::Linear,
                rng,
            )?,
            log_std_head: Dense::new(
                store,
                &format!("{name}.log_std"),
                hidden,
                latent,
                Activation::Linear,
                rng,
            )?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.n_in
    }

    /// Returns `(mean, std)` with `std = exp(clamp(log_std, ±7))`.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, GaussianMlpCache)> {
        let (h, hidden) = self.hidden.forward(store, x)?;
        let (mean, mean_cache) = self.mean_head.forward(store, &h)?;
        let (raw, log_std) = self.log_std_head.forward(store, &h)?;
        let unclamped: Vec<bool> = raw.iter().map(|v| v.abs() < LOG_STD_CLAMP).collect();
        let std = raw
            .iter()
            .map(|v| math::exp(v.clamp(-LOG_STD_CLAMP, LOG_STD_CLAMP)))
            .collect();
        Ok((
            mean,
            std,
            GaussianMlpCache {
                hidden,
                mean: mean_cache,
                log_std,
                unclamped,
            },
        ))
    }

    /// Accumulates parameter gradients from `∂L/∂μ` and `∂L/∂lnσ`; returns `∂L/∂x`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &GaussianMlpCache,
        d_mean: &[f64],
        d_log_std: &[f64],
    ) -> Result<Vec<f64>> {
        let d_raw: Vec<f64> = d_log_std
            .iter()
            .zip(&cache.unclamped)
            .map(|(g, &pass)| if pass { *g } else { 0.0 })
            .collect();
        let mut dh = self.mean_head.backward(store, &cache.mean, d_mean)?;
        let dh2 = self.log_std_head.backward(store, &cache.log_std, &d_raw)?;
        for (a, b) in dh.iter_mut().zip(dh2) {
            *a += b;
        }
        self.hidden.backward(store, &cache.hidden, &dh)
    }
}

/// Gaussian encoder for a single modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEncoder {
    pub name: String,
    pub net: GaussianMlp,
}

impl ModalityEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        spec: &ModalitySpec,
        hidden: usize,
        latent: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(ModalityEncoder {
            name: spec.name.clone(),
            net: GaussianMlp::new(
                store,
                &format!("enc.{}", spec.name),
                spec.dim,
                hidden,
                latent,
                rng,
            )?,
        })
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        features: &[f64],
    ) -> Result<(GaussianExpert, GaussianMlpCache)> {
        if features.len() != self.net.input_dim() {
            return Err(Error::dim(
                "encode_modality",
                self.net.input_dim(),
                features.len(),
            ));
        }
        let (mean, std, cache) = self.net.forward(store, features)?;
        Ok((GaussianExpert { mean, std }, cache))
    }
}

/// Early-fusion baseline: one MLP over the concatenated modality features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyFusionEncoder {
    pub net: GaussianMlp,
}

impl EarlyFusionEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        total_input: usize,
        hidden: usize,
        latent: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(EarlyFusionEncoder {
            net: GaussianMlp::new(store, "enc.early", total_input, hidden, latent, rng)?,
        })
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        concatenated: &[f64],
    ) -> Result<(GaussianEmbedding, GaussianMlpCache)> {
        if concatenated.len() != self.net.input_dim() {
            return Err(Error::dim(
                "early_fuse_encode",
                self.net.input_dim(),
                concatenated.len(),
            ));
        }
        let (mean, std, cache) = self.net.forward(store, concatenated)?;
        Ok((GaussianEmbedding { mean, std }, cache))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradcheck, Matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn expert(m: &[f64], s: &[f64]) -> GaussianExpert {
        GaussianExpert::new(m.to_vec(), s.to_vec()).unwrap()
    }

    fn zero_params(store: &mut ParamStore) {
        for i in 0..store.len() {
            let id = store.find(&store.slots()[i].name.clone()).unwrap();
            store.value_mut(id).fill(0.0);
        }
    }

    #[test]
    fn equal_precision_gives_average() {
        let f = poe_fuse(&[expert(&[1.0], &[1.0]), expert(&[3.0], &[1.0])], false).unwrap();
        assert_eq!(f.mean, vec![2.0]);
        assert!((f.std[0] - libm::sqrt(0.5)).abs() < 1e-15);
    }

    #[test]
    fn single_expert_with_prior() {
        let f = poe_fuse(&[expert(&[2.0], &[1.0])], true).unwrap();
        assert_eq!(f.mean, vec![1.0]);
        assert!((f.std[0] - libm::sqrt(0.5)).abs() < 1e-15);
        assert!((f.precision()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn low_precision_expert_is_ignored() {
        let f = poe_fuse(&[expert(&[5.0], &[100.0]), expert(&[0.0], &[0.1])], false).unwrap();
        assert!(f.mean[0].abs() < 1e-3);
    }

    #[test]
    fn empty_without_prior_is_an_error() {
        assert!(poe_fuse(&[], false).is_err());
        let prior = poe_fuse_dim(&[], true, 3).unwrap();
        assert_eq!(prior.mean, vec![0.0; 3]);
        assert_eq!(prior.std, vec![1.0; 3]);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        assert!(poe_fuse(
            &[expert(&[0.0], &[1.0]), expert(&[0.0, 0.0], &[1.0, 1.0])],
            true
        )
        .is_err());
        assert!(GaussianExpert::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn mask_behaviour() {
        let experts = [
            expert(&[1.0, -1.0], &[0.5, 2.0]),
            expert(&[0.0, 3.0], &[1.0, 1.0]),
        ];
        let all = drop_modalities(&experts, &[true, true], true).unwrap();
        assert_eq!(all, poe_fuse(&experts, true).unwrap());
        let one = drop_modalities(&experts, &[false, true], true).unwrap();
        assert_eq!(one, poe_fuse(&experts[1..], true).unwrap());
        assert!(drop_modalities(&experts, &[false, false], false).is_err());
        let prior_only = drop_modalities(&experts, &[false, false], true).unwrap();
        assert_eq!(prior_only.std, vec![1.0, 1.0]);
        assert!(drop_modalities(&experts, &[true], true).is_err());
    }

    #[test]
    fn zero_weight_encoder_is_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let spec = ModalitySpec {
            name: "visual".into(),
            dim: 5,
        };
        let enc = ModalityEncoder::new(&mut store, &spec, 32, 8, &mut rng).unwrap();
        zero_params(&mut store);
        let (e, _) = enc.encode(&store, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(e.mean, vec![0.0; 8]);
        assert_eq!(e.std, vec![1.0; 8]);
        assert!(enc.encode(&store, &[1.0]).is_err());

        let mut store = ParamStore::new();
        let early = EarlyFusionEncoder::new(&mut store, 7, 32, 8, &mut rng).unwrap();
        zero_params(&mut store);
        let (g, _) = early.encode(&store, &[0.5; 7]).unwrap();
        assert_eq!(g.mean, vec![0.0; 8]);
        assert_eq!(g.std, vec![1.0; 8]);
        assert!(early.encode(&store, &[0.5; 6]).is_err());
    }

    #[test]
    fn encoder_std_respects_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let spec = ModalitySpec {
            name: "m".into(),
            dim: 2,
        };
        let enc = ModalityEncoder::new(&mut store, &spec, 4, 3, &mut rng).unwrap();
        let w = store.find("enc.m.log_std.b").unwrap();
        store
            .value_mut(w)
            .as_mut_slice()
            .copy_from_slice(&[100.0, -100.0, 0.0]);
        let (e, _) = enc.encode(&store, &[0.0, 0.0]).unwrap();
        assert!((e.std[0] - libm::exp(7.0)).abs() < 1e-9);
        assert!((e.std[1] - libm::exp(-7.0)).abs() < 1e-18);
    }

    #[test]
    fn encoder_is_deterministic_for_a_seed() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut store = ParamStore::new();
            let spec = ModalitySpec {
                name: "m".into(),
                dim: 3,
            };
            let enc = ModalityEncoder::new(&mut store, &spec, 6, 2, &mut rng).unwrap();
            enc.encode(&store, &[0.1, 0.2, -0.3]).unwrap().0
        };
        let (a, b) = (build(), build());
        assert_eq!(
            a.mean.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.mean.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.std, b.std);
    }

    #[test]
    fn fusion_backward_matches_finite_differences() {
        // experts as raw parameters: [mean; log_std] per expert
        let mut store = ParamStore::new();
        let ids: Vec<_> = [
            [0.3, -1.2, 0.4, 0.1],
            [1.5, 0.2, -0.5, 0.6],
            [-0.7, 0.9, 0.2, -0.3],
        ]
        .iter()
        .enumerate()
        .map(|(i, v)| {
            store
                .add(format!("e{i}"), Matrix::from_vec(4, 1, v.to_vec()).unwrap())
                .unwrap()
        })
        .collect();
        for prior in [false, true] {
            let report = gradcheck(&mut store, 1e-6, |s: &mut ParamStore| {
                s.zero_grads();
                let experts: Vec<GaussianExpert> = ids
                    .iter()
                    .map(|&id| {
                        let v = s.value(id).as_slice();
                        GaussianExpert {
                            mean: v[..2].to_vec(),
                            std: v[2..].iter().map(|l| libm::exp(*l)).collect(),
                        }
                    })
                    .collect();
                let f = poe_fuse(&experts, prior).unwrap();
                // arbitrary smooth function of (μ, lnσ)
                let loss = f.mean[0] * f.mean[0] + 3.0 * f.mean[1] + 2.0 * libm::log(f.std[0])
                    - libm::log(f.std[1]).powi(2);
                let dm = [2.0 * f.mean[0], 3.0];
                let ds = [2.0, -2.0 * libm::log(f.std[1])];
                let refs: Vec<&GaussianExpert> = experts.iter().collect();
                for (id, (gm, gs)) in ids.iter().zip(poe_backward(&refs, &f, &dm, &ds)) {
                    let g = s.grad_mut(*id).as_mut_slice();
                    g[..2].copy_from_slice(&gm);
                    g[2..].copy_from_slice(&gs);
                }
                loss
            });
            assert!(
                report.max_relative_error < 1e-6,
                "prior={prior}: {report:?}"
            );
        }
    }

    #[test]
    fn early_fusion_gradients_pass_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let early = EarlyFusionEncoder::new(&mut store, 5, 6, 3, &mut rng).unwrap();
        let x = [0.4, -0.2, 1.3, 0.0, -0.9];
        let report = gradcheck(&mut store, 1e-6, |s: &mut ParamStore| {
            s.zero_grads();
            let (g, cache) = early.encode(s, &x).unwrap();
            let ln: Vec<f64> = g.std.iter().map(|v| libm::log(*v)).collect();
            let loss: f64 =
                g.mean.iter().map(|m| m * m).sum::<f64>() + ln.iter().map(|l| 0.5 * l).sum::<f64>();
            let dm: Vec<f64> = g.mean.iter().map(|m| 2.0 * m).collect();
            early.net.backward(s, &cache, &dm, &[0.5; 3]).unwrap();
            loss
        });
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }
}
