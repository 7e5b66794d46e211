//! Decoder heads: sigmoid classifier, scalar regressor, and an LSTM that
//! regresses a popularity sequence from the latent code.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PopularityTarget, TaskKind};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{Activation, Dense, DenseCache, LstmCell, LstmStepCache, ParamStore};

/// Classifier outputs (and BCE inputs) are clamped to `[P_CLAMP, 1 − P_CLAMP]`.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub task: TaskKind,
    /// Hidden width of the classifier/regressor MLP.
    pub mlp_hidden: usize,
    /// LSTM state size of the temporal head.
    pub rnn_hidden: usize,
}

impl DecoderSpec {
    pub fn new(task: TaskKind) -> Self {
        DecoderSpec {
            task,
            mlp_hidden: 16,
            rnn_hidden: 8,
        }
    }
}

/// Mean/std used to standardize absolute timestamps before they enter the LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScaler {
    pub mean: f64,
    pub std: f64,
}

impl TimeScaler {
    pub fn fit<'a>(timestamps: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let all: Vec<f64> = timestamps.into_iter().flatten().copied().collect();
        if all.is_empty() {
            return Err(Error::InvalidInput(String::from(
                "no timestamps to fit the time scaler",
            )));
        }
        Ok(TimeScaler {
            mean: math::mean(&all),
            std: math::sqrt(math::population_variance(&all)),
        })
    }

    pub fn apply(&self, t: f64) -> f64 {
        (t - self.mean) / self.std.max(1e-8)
    }
}

impl Default for TimeScaler {
    fn default() -> Self {
        TimeScaler {
            mean: 0.0,
            std: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderOutput {
    Probability(f64),
    Scalar(f64),
    Sequence(Vec<f64>),
}

impl DecoderOutput {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            DecoderOutput::Probability(p) => Some(*p),
            DecoderOutput::Scalar(v) => Some(*v),
            DecoderOutput::Sequence(_) => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&[f64]> {
        match self {
            DecoderOutput::Sequence(s) => Some(s),
            _ => None,
        }
    }
}

/// `−[y ln p + (1 − y) ln(1 − p)]` with `p` clamped away from 0 and 1.
pub fn binary_cross_entropy(p: f64, y: bool) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if y {
        -math::ln(p)
    } else {
        -math::ln(1.0 - p)
    }
}

pub fn squared_error(y: f64, o: f64) -> f64 {
    (y - o) * (y - o)
}

/// `Σ_t (y_t − o_t)²`.
pub fn sequence_squared_error(y: &[f64], o: &[f64]) -> f64 {
    y.iter().zip(o).map(|(a, b)| squared_error(*a, *b)).sum()
}

/// Relu hidden layer then one linear output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub hidden: Dense,
    pub out: Dense,
}

impl MlpHead {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        latent: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(MlpHead {
            hidden: Dense::new(
                store,
                &alloc::format!("{name}.hidden"),
                latent,
                hidden,
                Activation::Relu,
                rng,
            )?,
            out: Dense::new(
                store,
                &alloc::format!("{name}.out"),
                hidden,
                1,
                Activation::Linear,
                rng,
            )?,
        })
    }

    fn forward(&self, store: &ParamStore, z: &[f64]) -> Result<(f64, DenseCache, DenseCache)> {
        let (h, hc) = self.hidden.forward(store, z)?;
        let (o, oc) = self.out.forward(store, &h)?;
        Ok((o[0], hc, oc))
    }

    fn backward(
        &self,
        store: &mut ParamStore,
        hidden: &DenseCache,
        out: &DenseCache,
        d_out: f64,
    ) -> Result<Vec<f64>> {
        let dh = self.out.backward(store, out, &[d_out])?;
        self.hidden.backward(store, hidden, &dh)
    }
}

/// LSTM head: `h₀ = tanh(W_h z + b_h)`, `c₀ = tanh(W_c z + b_c)`, then one
/// step per target timestamp consuming only the standardized absolute time;
/// `o_t = w·h_t + b`. Past predictions are never fed back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalHead {
    pub init_hidden: Dense,
    pub init_cell: Dense,
    pub cell: LstmCell,
    pub out: Dense,
    pub time: TimeScaler,
}

impl TemporalHead {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        latent: usize,
        hidden: usize,
        time: TimeScaler,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(TemporalHead {
            init_hidden: Dense::new(store, "dec.init_h", latent, hidden, Activation::Tanh, rng)?,
            init_cell: Dense::new(store, "dec.init_c", latent, hidden, Activation::Tanh, rng)?,
            cell: LstmCell::new(store, "dec.lstm", 1, hidden, rng)?,
            out: Dense::new(store, "dec.out", hidden, 1, Activation::Linear, rng)?,
            time,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decoder {
    Classify(MlpHead),
    Regress(MlpHead),
    Temporal(TemporalHead),
}

#[derive(Debug, Clone)]
pub enum DecoderCache {
    Mlp {
        hidden: DenseCache,
        out: DenseCache,
        probability: Option<f64>,
    },
    Temporal {
        init_hidden: DenseCache,
        init_cell: DenseCache,
        steps: Vec<LstmStepCache>,
        outs: Vec<DenseCache>,
    },
}

/// `∂loss/∂(raw head output)`: the logit for the classifier, the output
/// itself for the regressors.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputGrad {
    Scalar(f64),
    Sequence(Vec<f64>),
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        spec: &DecoderSpec,
        latent: usize,
        time: TimeScaler,
        rng: &mut R,
    ) -> Result<Self> {
        match spec.task {
            TaskKind::Classification => Ok(Decoder::Classify(MlpHead::new(
                store,
                "dec",
                latent,
                spec.mlp_hidden,
                rng,
            )?)),
            TaskKind::Regression => Ok(Decoder::Regress(MlpHead::new(
                store,
                "dec",
                latent,
                spec.mlp_hidden,
                rng,
            )?)),
            TaskKind::Temporal => Ok(Decoder::Temporal(TemporalHead::new(
                store,
                latent,
                spec.rnn_hidden,
                time,
                rng,
            )?)),
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Decoder::Classify(_) => TaskKind::Classification,
            Decoder::Regress(_) => TaskKind::Regression,
            Decoder::Temporal(_) => TaskKind::Temporal,
        }
    }

    /// Decodes `z`. `timestamps` (absolute, unstandardized) is required by the
    /// temporal head and ignored otherwise.
    pub fn forward(
        &self,
        store: &ParamStore,
        z: &[f64],
        timestamps: Option<&[f64]>,
    ) -> Result<(DecoderOutput, DecoderCache)> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(String::from("latent code")));
        }
        match self {
            Decoder::Classify(head) => {
                let (logit, hidden, out) = head.forward(store, z)?;
                // clamped here so predictions and the loss see the same value
                let p = math::sigmoid(logit).clamp(P_CLAMP, 1.0 - P_CLAMP);
                Ok((
                    DecoderOutput::Probability(p),
                    DecoderCache::Mlp {
                        hidden,
                        out,
                        probability: Some(p),
                    },
                ))
            }
            Decoder::Regress(head) => {
                let (o, hidden, out) = head.forward(store, z)?;
                Ok((
                    DecoderOutput::Scalar(o),
                    DecoderCache::Mlp {
                        hidden,
                        out,
                        probability: None,
                    },
                ))
            }
            Decoder::Temporal(head) => {
                let ts = timestamps.ok_or_else(|| {
                    Error::InvalidInput(String::from("temporal decoder needs timestamps"))
                })?;
                if ts.is_empty() {
                    return Err(Error::InvalidInput(String::from(
                        "empty prediction sequence",
                    )));
                }
                let (mut h, init_hidden) = head.init_hidden.forward(store, z)?;
                let (mut c, init_cell) = head.init_cell.forward(store, z)?;
                let mut steps = Vec::with_capacity(ts.len());
                let mut outs = Vec::with_capacity(ts.len());
                let mut seq = Vec::with_capacity(ts.len());
                for &t in ts {
                    let (h2, c2, step) = head.cell.step(store, &[head.time.apply(t)], &h, &c)?;
                    let (o, oc) = head.out.forward(store, &h2)?;
                    seq.push(o[0]);
                    steps.push(step);
                    outs.push(oc);
                    h = h2;
                    c = c2;
                }
                Ok((
                    DecoderOutput::Sequence(seq),
                    DecoderCache::Temporal {
                        init_hidden,
                        init_cell,
                        steps,
                        outs,
                    },
                ))
            }
        }
    }

    /// Paired loss of an output against its target, and its gradient with
    /// respect to the raw head output.
    pub fn loss(
        &self,
        output: &DecoderOutput,
        target: &PopularityTarget,
    ) -> Result<(f64, OutputGrad)> {
        match (output, target) {
            (DecoderOutput::Probability(p), PopularityTarget::Binary(y)) => {
                let yv = if *y { 1.0 } else { 0.0 };
                let clamped = *p <= P_CLAMP || *p >= 1.0 - P_CLAMP;
                let grad = if clamped { 0.0 } else { p - yv };
                Ok((binary_cross_entropy(*p, *y), OutputGrad::Scalar(grad)))
            }
            (DecoderOutput::Scalar(o), PopularityTarget::Scalar(y)) => {
                Ok((squared_error(*y, *o), OutputGrad::Scalar(2.0 * (o - y))))
            }
            (DecoderOutput::Sequence(o), PopularityTarget::Sequence(seq)) => {
                if o.len() != seq.values.len() {
                    return Err(Error::dim("temporal loss", seq.values.len(), o.len()));
                }
                let grad = o
                    .iter()
                    .zip(&seq.values)
                    .map(|(o, y)| 2.0 * (o - y))
                    .collect();
                Ok((
                    sequence_squared_error(&seq.values, o),
                    OutputGrad::Sequence(grad),
                ))
            }
            _ => Err(Error::Schema(String::from(
                "target kind does not match decoder",
            ))),
        }
    }

    /// Accumulates parameter gradients and returns `∂L/∂z`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &DecoderCache,
        grad: &OutputGrad,
    ) -> Result<Vec<f64>> {
        match (self, cache, grad) {
            (
                Decoder::Classify(head) | Decoder::Regress(head),
                DecoderCache::Mlp { hidden, out, .. },
                OutputGrad::Scalar(g),
            ) => head.backward(store, hidden, out, *g),
            (
                Decoder::Temporal(head),
                DecoderCache::Temporal {
                    init_hidden,
                    init_cell,
                    steps,
                    outs,
                },
                OutputGrad::Sequence(g),
            ) => {
                if g.len() != steps.len() {
                    return Err(Error::dim("temporal backward", steps.len(), g.len()));
                }
                let hd = head.cell.hidden;
                let mut dh_next = vec![0.0; hd];
                let mut dc_next = vec![0.0; hd];
                for t in (0..steps.len()).rev() {
                    let dh_out = head.out.backward(store, &outs[t], &[g[t]])?;
                    let dh: Vec<f64> = dh_next.iter().zip(&dh_out).map(|(a, b)| a + b).collect();
                    let (_, dh_prev, dc_prev) =
                        head.cell.backward_step(store, &steps[t], &dh, &dc_next)?;
                    dh_next = dh_prev;
                    dc_next = dc_prev;
                }
                let mut dz = head.init_hidden.backward(store, init_hidden, &dh_next)?;
                let dz_c = head.init_cell.backward(store, init_cell, &dc_next)?;
                for (a, b) in dz.iter_mut().zip(dz_c) {
                    *a += b;
                }
                Ok(dz)
            }
            _ => Err(Error::InvalidInput(String::from(
                "decoder cache does not match decoder",
            ))),
        }
    }
}
