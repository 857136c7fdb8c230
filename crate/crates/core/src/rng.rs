//! Counter-based Gaussian noise.
//!
//! Every path owns two ChaCha8 streams derived from the run seed: a base
//! stream whose position is a pure function of `(seed, path, step)`, and an
//! auxiliary stream for Brownian-bridge refinements. Refining a step never
//! shifts the base increments of later steps, so runs at different
//! refinement levels share the same driving Brownian path.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::f64::consts::PI;

const AUX_TWEAK: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 key derived from a 64-bit seed.
pub fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(seed));
    rng.set_stream(stream);
    rng
}

/// Uniform in `(0, 1]`.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Box-Muller pair from two 64-bit words.
#[inline]
fn normal_pair(a: u64, b: u64) -> (f64, f64) {
    let r = (-2.0 * open_unit(a).ln()).sqrt();
    let (s, c) = (2.0 * PI * open_unit(b)).sin_cos();
    (r * c, r * s)
}

/// Gaussian noise for one simulated path.
#[derive(Debug, Clone)]
pub struct PathNoise {
    base: ChaCha8Rng,
    aux: ChaCha8Rng,
    dim: usize,
    next_step: u64,
    spare: Option<f64>,
}

impl PathNoise {
    pub fn new(seed: u64, path: u64, dim: usize) -> Self {
        Self {
            base: stream_rng(seed, path),
            aux: stream_rng(seed ^ AUX_TWEAK, path),
            dim,
            next_step: 0,
            spare: None,
        }
    }

    /// 32-bit words consumed from the base stream per step.
    fn words_per_step(&self) -> u128 {
        4 * self.dim.div_ceil(2) as u128
    }

    /// Fills `out` with the standard normal vector of base step `step`.
    pub fn step_normals(&mut self, step: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if step != self.next_step {
            self.base.set_word_pos(step as u128 * self.words_per_step());
        }
        for pair in out.chunks_mut(2) {
            let (a, b) = normal_pair(self.base.next_u64(), self.base.next_u64());
            pair[0] = a;
            if pair.len() > 1 {
                pair[1] = b;
            }
        }
        self.next_step = step + 1;
    }

    /// Next standard normal from the auxiliary stream.
    pub fn aux_normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let (a, b) = normal_pair(self.aux.next_u64(), self.aux.next_u64());
        self.spare = Some(b);
        a
    }
}

/// Deterministic uniform numbers in `[0, 1)` for sampling test points.
#[derive(Debug, Clone)]
pub struct UniformStream(ChaCha8Rng);

impl UniformStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self(stream_rng(seed, stream))
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
