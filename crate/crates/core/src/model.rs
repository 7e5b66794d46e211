//! The full encoder-decoder: per-modality experts (or the early-fusion
//! baseline), fusion, reparameterization and a decoder head, with the
//! hand-written backward pass that trains them jointly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MultimodalSample, StandardizationStats};
use crate::decoders::{Decoder, DecoderOutput, DecoderSpec, OutputGrad, TimeScaler};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Parameterized};
use crate::noise::{NoNoise, NoiseSource};
use crate::objective::{kl_standard_normal, kl_standard_normal_grad};
use crate::poe::{
    poe_backward, poe_fuse_dim, EarlyFusionEncoder, EncoderKind, EncoderSpec, GaussianEmbedding,
    GaussianExpert, GaussianMlpCache, ModalityEncoder,
};

/// Architecture and the settings the model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    pub lambda: f64,
    /// Trained as the deterministic ablation (no sampling, no KL).
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoder {
    ProductOfExperts { experts: Vec<ModalityEncoder> },
    EarlyFusion { net: EarlyFusionEncoder },
}

/// How the latent code is obtained from the fused Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    /// `z = μ + σ ⊙ ε` with `ε` drawn from the noise source.
    Sample,
    /// `z = μ`; the noise source is never touched.
    Mean,
}

enum EncodeCache {
    Poe {
        /// (modality index, expert, encoder cache) for every expert used.
        experts: Vec<(usize, GaussianExpert, GaussianMlpCache)>,
    },
    Early(GaussianMlpCache),
}

/// Per-sample loss terms. `decoder_loss` is the paired decoder loss
/// (negative expected log-likelihood up to a constant), averaged over MC draws.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleLoss {
    pub decoder_loss: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    store: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
    feature_stats: Option<StandardizationStats>,
}

impl Parameterized for Model {
    fn params(&self) -> &ParamStore {
        &self.store
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

impl Model {
    /// Builds and randomly initializes every layer. Slots are registered in a
    /// fixed order (encoders in modality order, then the decoder).
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, time: TimeScaler, rng: &mut R) -> Result<Self> {
        spec.encoder.validate()?;
        if spec.decoder.mlp_hidden == 0 || spec.decoder.rnn_hidden == 0 {
            return Err(Error::InvalidConfig(String::from(
                "decoder widths must be ≥ 1",
            )));
        }
        if !(spec.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be ≥ 0, got {}",
                spec.lambda
            )));
        }
        let mut store = ParamStore::new();
        let enc = &spec.encoder;
        let encoder = match enc.kind {
            EncoderKind::ProductOfExperts => Encoder::ProductOfExperts {
                experts: enc
                    .modalities
                    .iter()
                    .map(|m| ModalityEncoder::new(&mut store, m, enc.hidden, enc.latent_dim, rng))
                    .collect::<Result<_>>()?,
            },
            EncoderKind::EarlyFusion => Encoder::EarlyFusion {
                net: EarlyFusionEncoder::new(
                    &mut store,
                    enc.modalities.iter().map(|m| m.dim).sum(),
                    enc.hidden,
                    enc.latent_dim,
                    rng,
                )?,
            },
        };
        let decoder = Decoder::new(&mut store, &spec.decoder, enc.latent_dim, time, rng)?;
        Ok(Model {
            spec,
            store,
            encoder,
            decoder,
            feature_stats: None,
        })
    }

    /// Rebuilds a model from saved parts; `params` must match the
    /// architecture slot for slot.
    pub fn from_parts(
        spec: ModelSpec,
        time: TimeScaler,
        feature_stats: Option<StandardizationStats>,
        params: &ParamStore,
    ) -> Result<Self> {
        // every value is overwritten below
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Model::new(spec, time, &mut rng)?;
        model.store.load_values(params)?;
        model.feature_stats = feature_stats;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn time_scaler(&self) -> TimeScaler {
        match &self.decoder {
            Decoder::Temporal(h) => h.time,
            _ => TimeScaler::default(),
        }
    }

    pub fn feature_stats(&self) -> Option<&StandardizationStats> {
        self.feature_stats.as_ref()
    }

    pub fn set_feature_stats(&mut self, stats: Option<StandardizationStats>) {
        self.feature_stats = stats;
    }

    /// Applies the stored training statistics (identity when none are stored).
    pub fn standardize(&self, dataset: &Dataset) -> Result<Dataset> {
        match &self.feature_stats {
            Some(stats) => stats.apply(dataset),
            None => Ok(dataset.clone()),
        }
    }

    /// Checks that a dataset's modalities and task match this model.
    pub fn check_compatible(&self, dataset: &Dataset) -> Result<()> {
        let ours = &self.spec.encoder.modalities;
        for m in dataset.modalities() {
            match ours.iter().find(|o| o.name == m.name) {
                None => {
                    return Err(Error::Schema(format!(
                        "modality `{}` is not known to the model",
                        m.name
                    )))
                }
                Some(o) if o.dim != m.dim => {
                    return Err(Error::Schema(format!(
                        "modality `{}` has width {} but the model expects {}",
                        m.name, m.dim, o.dim
                    )))
                }
                _ => {}
            }
        }
        if let Some(missing) = ours
            .iter()
            .find(|o| dataset.modality_index(&o.name).is_none())
        {
            return Err(Error::Schema(format!(
                "dataset lacks modality `{}`",
                missing.name
            )));
        }
        if ours
            .iter()
            .map(|m| &m.name)
            .ne(dataset.modalities().iter().map(|m| &m.name))
        {
            return Err(Error::Schema(String::from(
                "dataset modality order differs from the model's",
            )));
        }
        if dataset.task() != self.spec.decoder.task {
            return Err(Error::Schema(format!(
                "dataset target kind {} does not match the {} decoder",
                dataset.task().as_str(),
                self.spec.decoder.task.as_str()
            )));
        }
        Ok(())
    }

    fn availability(&self, sample: &MultimodalSample, mask: Option<&[bool]>) -> Result<Vec<bool>> {
        let k = self.spec.encoder.modalities.len();
        if sample.features.len() != k {
            return Err(Error::dim("sample modalities", k, sample.features.len()));
        }
        if let Some(m) = mask {
            if m.len() != k {
                return Err(Error::dim("modality mask", k, m.len()));
            }
        }
        Ok((0..k)
            .map(|i| sample.features[i].is_some() && mask.map_or(true, |m| m[i]))
            .collect())
    }

    fn encode(
        &self,
        sample: &MultimodalSample,
        mask: Option<&[bool]>,
    ) -> Result<(GaussianEmbedding, EncodeCache)> {
        let available = self.availability(sample, mask)?;
        let latent = self.spec.encoder.latent_dim;
        match &self.encoder {
            Encoder::ProductOfExperts { experts } => {
                let mut used = Vec::new();
                for (i, enc) in experts.iter().enumerate() {
                    if !available[i] {
                        continue;
                    }
                    let x = sample.features[i]
                        .as_deref()
                        .expect("availability checked presence");
                    let (e, cache) = enc.encode(&self.store, x)?;
                    used.push((i, e, cache));
                }
                if used.is_empty() && !self.spec.encoder.include_prior {
                    return Err(Error::InvalidInput(format!(
                        "sample `{}` has no available modality and the prior is excluded",
                        sample.id
                    )));
                }
                let experts: Vec<GaussianExpert> = used.iter().map(|(_, e, _)| e.clone()).collect();
                let fused = poe_fuse_dim(&experts, self.spec.encoder.include_prior, latent)?;
                Ok((fused, EncodeCache::Poe { experts: used }))
            }
            Encoder::EarlyFusion { net } => {
                if available.iter().any(|a| !a) {
                    return Err(Error::InvalidInput(format!(
                        "early-fusion encoder needs every modality; sample `{}` is missing some",
                        sample.id
                    )));
                }
                let x = sample.concatenated().expect("all modalities present");
                let (emb, cache) = net.encode(&self.store, &x)?;
                Ok((emb, EncodeCache::Early(cache)))
            }
        }
    }

    /// The fused Gaussian embedding of a sample.
    pub fn embed(
        &self,
        sample: &MultimodalSample,
        mask: Option<&[bool]>,
    ) -> Result<GaussianEmbedding> {
        Ok(self.encode(sample, mask)?.0)
    }

    /// Encodes, picks `z` per `mode`, and decodes.
    pub fn forward(
        &self,
        sample: &MultimodalSample,
        mask: Option<&[bool]>,
        mode: LatentMode,
        noise: &mut dyn NoiseSource,
    ) -> Result<DecoderOutput> {
        let (emb, _) = self.encode(sample, mask)?;
        let z = match mode {
            LatentMode::Mean => emb.mean,
            LatentMode::Sample => {
                let mut eps = vec![0.0; emb.dim()];
                noise.fill_standard_normal(&mut eps);
                crate::objective::reparameterize(&emb, &eps)?
            }
        };
        Ok(self
            .decoder
            .forward(&self.store, &z, sample.timestamps())?
            .0)
    }

    /// Deterministic prediction from the fused mean. `mask[i] == false`
    /// drops modality `i`; features must already be standardized.
    pub fn predict(
        &self,
        sample: &MultimodalSample,
        mask: Option<&[bool]>,
    ) -> Result<DecoderOutput> {
        self.forward(sample, mask, LatentMode::Mean, &mut NoNoise)
    }

    /// Forward and backward for one sample, adding `scale · ∂loss/∂θ` into the
    /// gradient buffers. The per-sample loss is
    /// `mean_l decoder_loss(z_l) + λ·KL` in [`LatentMode::Sample`] and
    /// `decoder_loss(μ)` in [`LatentMode::Mean`].
    pub fn accumulate_gradients(
        &mut self,
        sample: &MultimodalSample,
        mask: Option<&[bool]>,
        mode: LatentMode,
        mc_samples: usize,
        scale: f64,
        noise: &mut dyn NoiseSource,
    ) -> Result<SampleLoss> {
        let (emb, cache) = self.encode(sample, mask)?;
        let dim = emb.dim();
        let lambda = self.spec.lambda;
        let mut d_mean = vec![0.0; dim];
        let mut d_log_std = vec![0.0; dim];
        let mut out = SampleLoss::default();

        let draws = match mode {
            LatentMode::Sample => mc_samples.max(1),
            LatentMode::Mean => 1,
        };
        let per_draw = scale / draws as f64;
        for _ in 0..draws {
            let mut eps = vec![0.0; dim];
            let z = match mode {
                LatentMode::Sample => {
                    noise.fill_standard_normal(&mut eps);
                    crate::objective::reparameterize(&emb, &eps)?
                }
                LatentMode::Mean => emb.mean.clone(),
            };
            let (output, dcache) = self.decoder.forward(&self.store, &z, sample.timestamps())?;
            let (loss, grad) = self.decoder.loss(&output, &sample.target)?;
            out.decoder_loss += loss / draws as f64;
            let grad = match grad {
                OutputGrad::Scalar(g) => OutputGrad::Scalar(g * per_draw),
                OutputGrad::Sequence(g) => {
                    OutputGrad::Sequence(g.iter().map(|v| v * per_draw).collect())
                }
            };
            let dz = self.decoder.backward(&mut self.store, &dcache, &grad)?;
            for d in 0..dim {
                d_mean[d] += dz[d];
                // z = μ + exp(lnσ)·ε
                d_log_std[d] += dz[d] * eps[d] * emb.std[d];
            }
        }

        if mode == LatentMode::Sample {
            out.kl = kl_standard_normal(&emb);
            if lambda > 0.0 {
                let (km, ks) = kl_standard_normal_grad(&emb);
                for d in 0..dim {
                    d_mean[d] += scale * lambda * km[d];
                    d_log_std[d] += scale * lambda * ks[d];
                }
            }
        }

        match (&self.encoder, cache) {
            (Encoder::ProductOfExperts { experts }, EncodeCache::Poe { experts: used }) => {
                let refs: Vec<&GaussianExpert> = used.iter().map(|(_, e, _)| e).collect();
                let grads = poe_backward(&refs, &emb, &d_mean, &d_log_std);
                for ((i, _, c), (gm, gs)) in used.iter().zip(grads) {
                    experts[*i].net.backward(&mut self.store, c, &gm, &gs)?;
                }
            }
            (Encoder::EarlyFusion { net }, EncodeCache::Early(c)) => {
                net.net.backward(&mut self.store, &c, &d_mean, &d_log_std)?;
            }
            _ => unreachable!("encode cache always matches the encoder"),
        }
        Ok(out)
    }
}
