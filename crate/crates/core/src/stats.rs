//! Monte Carlo estimators with order-independent reduction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Running mean and sum of squared deviations of a complex sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    n: u64,
    mean: Complex64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: Complex64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += (delta.conj() * (x - self.mean)).re;
    }

    /// Combines two accumulators; the result depends on argument order only
    /// through floating-point rounding, so callers merge in a fixed order.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta.norm_sqr() * self.n as f64 * w,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> McEstimate {
        let stderr = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            mean: self.mean,
            stderr,
            n_paths: self.n,
        }
    }
}

/// Sample mean and standard error of a (possibly complex) observable.
///
/// For complex observables the standard error covers both components:
/// `stderr^2 = (Var(re) + Var(im)) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: Complex64,
    pub stderr: f64,
    pub n_paths: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[Complex64]) -> Self {
        let mut m = Moments::default();
        samples.iter().for_each(|&x| m.push(x));
        m.estimate()
    }

    pub fn exact(value: Complex64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n_paths: 0,
        }
    }

    /// `|mean - target| / stderr` with the standard error floored at 1e-15.
    pub fn z_score(&self, target: Complex64) -> f64 {
        (self.mean - target).norm() / self.stderr.max(1e-15)
    }

    /// Joint z-score of two independent estimates.
    pub fn joint_z(&self, other: &McEstimate) -> f64 {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        (self.mean - other.mean).norm() / se.max(1e-15)
    }
}

/// Sample correlation magnitude `|cov(a, b)| / sqrt(var a var b)` computed from
/// the means of `a`, `b`, `a conj(b)`, `|a|^2` and `|b|^2`.
pub fn correlation_from_means(
    a: Complex64,
    b: Complex64,
    a_conj_b: Complex64,
    a_sq: f64,
    b_sq: f64,
) -> f64 {
    let cov = a_conj_b - a * b.conj();
    let var_a = a_sq - a.norm_sqr();
    let var_b = b_sq - b.norm_sqr();
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    cov.norm() / (var_a * var_b).sqrt()
}
