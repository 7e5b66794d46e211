use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Matrix, ParamStore, SlotId};
use crate::error::{Error, Result};
use crate::math::{sigmoid, tanh};

/// Single LSTM cell. Gate rows are stacked `[input, forget, candidate, output]`
/// in `w_x` (`4H × I`), `w_h` (`4H × H`) and `bias` (`4H × 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_x: SlotId,
    pub w_h: SlotId,
    pub bias: SlotId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    input_gate: Vec<f64>,
    forget_gate: Vec<f64>,
    candidate: Vec<f64>,
    output_gate: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "lstm `{name}` needs non-zero sizes, got input={input} hidden={hidden}"
            )));
        }
        let w_x = store.add(
            format!("{name}.w_x"),
            glorot_uniform(rng, 4 * hidden, input),
        )?;
        let w_h = store.add(
            format!("{name}.w_h"),
            glorot_uniform(rng, 4 * hidden, hidden),
        )?;
        let bias = store.add(format!("{name}.b"), Matrix::zeros(4 * hidden, 1))?;
        Ok(LstmCell {
            w_x,
            w_h,
            bias,
            input,
            hidden,
        })
    }

    /// One time step: returns `(h_t, c_t)` and the cache for [`Self::backward_step`].
    pub fn step(
        &self,
        store: &ParamStore,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
        let hd = self.hidden;
        if x.len() != self.input {
            return Err(Error::dim("LstmCell::step input", self.input, x.len()));
        }
        if h_prev.len() != hd {
            return Err(Error::dim("LstmCell::step hidden state", hd, h_prev.len()));
        }
        if c_prev.len() != hd {
            return Err(Error::dim("LstmCell::step cell state", hd, c_prev.len()));
        }
        let mut a = store.value(self.w_x).matvec(x)?;
        let ah = store.value(self.w_h).matvec(h_prev)?;
        for ((a, h), b) in a.iter_mut().zip(ah).zip(store.value(self.bias).as_slice()) {
            *a += h + b;
        }
        let input_gate: Vec<f64> = a[..hd].iter().map(|&v| sigmoid(v)).collect();
        let forget_gate: Vec<f64> = a[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let candidate: Vec<f64> = a[2 * hd..3 * hd].iter().map(|&v| tanh(v)).collect();
        let output_gate: Vec<f64> = a[3 * hd..].iter().map(|&v| sigmoid(v)).collect();

        let c: Vec<f64> = (0..hd)
            .map(|k| forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| tanh(v)).collect();
        let h: Vec<f64> = (0..hd).map(|k| output_gate[k] * tanh_c[k]).collect();

        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            input_gate,
            forget_gate,
            candidate,
            output_gate,
            tanh_c,
        };
        Ok((h, c.clone(), cache))
    }

    /// Backpropagates `(∂L/∂h_t, ∂L/∂c_t)` through one step, accumulating
    /// parameter gradients. Returns `(∂L/∂x_t, ∂L/∂h_{t-1}, ∂L/∂c_{t-1})`.
    pub fn backward_step(
        &self,
        store: &mut ParamStore,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let hd = self.hidden;
        if dh.len() != hd || dc.len() != hd {
            return Err(Error::dim(
                "LstmCell::backward_step",
                hd,
                dh.len().min(dc.len()),
            ));
        }
        let mut da = alloc::vec![0.0; 4 * hd];
        let mut dc_prev = alloc::vec![0.0; hd];
        for k in 0..hd {
            let (i, f, g, o) = (
                cache.input_gate[k],
                cache.forget_gate[k],
                cache.candidate[k],
                cache.output_gate[k],
            );
            let tc = cache.tanh_c[k];
            let d_o = dh[k] * tc;
            let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
            da[k] = dc_total * g * i * (1.0 - i);
            da[hd + k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
            da[2 * hd + k] = dc_total * i * (1.0 - g * g);
            da[3 * hd + k] = d_o * o * (1.0 - o);
            dc_prev[k] = dc_total * f;
        }
        store.grad_mut(self.w_x).add_outer(&da, &cache.x);
        store.grad_mut(self.w_h).add_outer(&da, &cache.h_prev);
        for (g, d) in store.grad_mut(self.bias).as_mut_slice().iter_mut().zip(&da) {
            *g += d;
        }
        let dx = store.value(self.w_x).matvec_transposed(&da)?;
        let dh_prev = store.value(self.w_h).matvec_transposed(&da)?;
        Ok((dx, dh_prev, dc_prev))
    }
}
