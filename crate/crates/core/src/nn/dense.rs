use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Matrix, ParamStore, SlotId};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => math::tanh(x),
            Activation::Sigmoid => math::sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

/// Everything the backward pass of one dense layer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub output: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

/// `act(W x + b)`, returning the output and the cache for [`dense_backward`].
pub fn dense_forward(
    x: &[f64],
    weight: &Matrix,
    bias: &[f64],
    activation: Activation,
) -> Result<(Vec<f64>, DenseCache)> {
    if bias.len() != weight.rows() {
        return Err(Error::dim("dense_forward bias", weight.rows(), bias.len()));
    }
    let mut pre = weight.matvec(x)?;
    for (p, b) in pre.iter_mut().zip(bias) {
        *p += b;
    }
    let out: Vec<f64> = pre.iter().map(|&p| activation.apply(p)).collect();
    Ok((
        out.clone(),
        DenseCache {
            input: x.to_vec(),
            pre_activation: pre,
            output: out,
            activation,
        },
    ))
}

/// Gradients of a dense layer given the upstream gradient on its output.
pub fn dense_backward(weight: &Matrix, cache: &DenseCache, upstream: &[f64]) -> Result<DenseGrads> {
    let delta = pre_activation_delta(cache, upstream)?;
    let mut grad_w = Matrix::zeros(weight.rows(), weight.cols());
    grad_w.add_outer(&delta, &cache.input);
    let grad_x = weight.matvec_transposed(&delta)?;
    Ok(DenseGrads {
        weight: grad_w,
        bias: delta,
        input: grad_x,
    })
}

fn pre_activation_delta(cache: &DenseCache, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != cache.output.len() {
        return Err(Error::dim(
            "dense_backward upstream",
            cache.output.len(),
            upstream.len(),
        ));
    }
    Ok(upstream
        .iter()
        .zip(cache.pre_activation.iter().zip(&cache.output))
        .map(|(g, (&p, &o))| g * cache.activation.derivative(p, o))
        .collect())
}

/// A fully connected layer whose weight `[n_out × n_in]` and bias `[n_out × 1]`
/// live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: SlotId,
    pub bias: SlotId,
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl Dense {
    /// Registers `{name}.w` and `{name}.b`: Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer `{name}` needs non-zero width, got {n_in}→{n_out}"
            )));
        }
        let weight = store.add(format!("{name}.w"), glorot_uniform(rng, n_out, n_in))?;
        let bias = store.add(format!("{name}.b"), Matrix::zeros(n_out, 1))?;
        Ok(Dense {
            weight,
            bias,
            n_in,
            n_out,
            activation,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if x.len() != self.n_in {
            return Err(Error::dim("Dense::forward", self.n_in, x.len()));
        }
        dense_forward(
            x,
            store.value(self.weight),
            store.value(self.bias).as_slice(),
            self.activation,
        )
    }

    /// Accumulates weight and bias gradients into `store`; returns `∂L/∂x`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &DenseCache,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        let delta = pre_activation_delta(cache, upstream)?;
        store.grad_mut(self.weight).add_outer(&delta, &cache.input);
        for (g, d) in store
            .grad_mut(self.bias)
            .as_mut_slice()
            .iter_mut()
            .zip(&delta)
        {
            *g += d;
        }
        store.value(self.weight).matvec_transposed(&delta)
    }
}
