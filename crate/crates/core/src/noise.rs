//! Sources of the standard-normal noise used by the reparameterization.

use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

/// Fills buffers with independent standard-normal draws.
pub trait NoiseSource {
    fn fill_standard_normal(&mut self, out: &mut [f64]);
}

/// Draws from a random generator.
#[derive(Debug, Clone)]
pub struct GaussianNoise<R> {
    rng: R,
}

impl<R: RngCore> GaussianNoise<R> {
    pub fn new(rng: R) -> Self {
        GaussianNoise { rng }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: RngCore> NoiseSource for GaussianNoise<R> {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Replays a fixed tape of values, wrapping around at the end.
///
/// Used to freeze the noise for finite-difference checks: call
/// [`FixedNoise::rewind`] before every evaluation.
#[derive(Debug, Clone)]
pub struct FixedNoise {
    tape: Vec<f64>,
    pos: usize,
}

impl FixedNoise {
    pub fn new(tape: Vec<f64>) -> Self {
        assert!(!tape.is_empty(), "noise tape must not be empty");
        FixedNoise { tape, pos: 0 }
    }

    pub fn rewind(&mut self) {
        self.pos = 0;
    }
}

impl NoiseSource for FixedNoise {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.tape[self.pos % self.tape.len()];
            self.pos += 1;
        }
    }
}

/// A source that must never be drawn from. Deterministic code paths take
/// this so that any accidental draw fails loudly.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoNoise;

impl NoiseSource for NoNoise {
    fn fill_standard_normal(&mut self, _out: &mut [f64]) {
        panic!("deterministic path attempted to draw noise");
    }
}
