//! Finite-difference application of the renormalized generators, eigenfunction
//! residuals, and the BC Jacobi coefficient table.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{drift, eigenvalue_elem, min_separation, Coupling, Kind, ModelSpec};
use crate::rng::UniformStream;
use crate::symfunc::{binomial, circle_elem_sym_all, cosh_elem_sym_all, elem_sym_all};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Seed for the sample points used by [`jacobi_coeffs`].
pub const COEFF_SEED: u64 = 0x6a61_636f_6269;

const COEFF_STEPS: (f64, f64) = (1e-2, 5e-3);
const COEFF_RETRIES: u64 = 16;
const MAX_CONDITION: f64 = 1e8;

fn generator_impl<T, F>(model: &ModelSpec, f: F, x: &[f64], h: f64) -> Result<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    F: Fn(&[f64]) -> T,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step h must be positive, got {h}")));
    }
    let gap = min_separation(model, x);
    if gap <= 10.0 * h {
        return Err(Error::StepTooLarge { h, min_gap: gap });
    }
    let b = drift(model, x)?;
    let f0 = f(x);
    let mut lap = f0 * 0.0;
    let mut grad = f0 * 0.0;
    let mut y = x.to_vec();
    for j in 0..x.len() {
        y[j] = x[j] + h;
        let fp = f(&y);
        y[j] = x[j] - h;
        let fm = f(&y);
        y[j] = x[j];
        lap = lap + (fp + fm - f0 * 2.0) * (1.0 / (h * h));
        grad = grad + (fp - fm) * (b[j] / (2.0 * h));
    }
    Ok(match model.kappa() {
        Coupling::Infinite => grad,
        Coupling::Finite(k) => lap * (1.0 / k) + grad,
    })
}

/// `(1/κ) Δf + drift · ∇f` at `x` by central differences with step `h`.
///
/// Requires every gap of `x` (as measured by [`min_separation`]) to exceed `10h`.
pub fn apply_generator<F>(model: &ModelSpec, f: F, x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    generator_impl(model, f, x, h)
}

/// Complex-valued variant of [`apply_generator`].
pub fn apply_generator_complex<F>(model: &ModelSpec, f: F, x: &[f64], h: f64) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64,
{
    generator_impl(model, f, x, h)
}

/// Richardson combination `(4 L_{h/2} f - L_h f) / 3`, accurate to `O(h^4)`.
pub fn apply_generator_richardson<F>(model: &ModelSpec, f: F, x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let coarse = generator_impl(model, &f, x, h)?;
    let fine = generator_impl(model, &f, x, h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Pseudo-random interior points with all gaps at least `min_gap`.
///
/// Coordinates lie in `[0, 2π)` for the compact alcove, `[-1.5, 1.5]` for
/// the type A chamber and `[0.5, 3]` for the BC chamber; the range is
/// widened when it cannot hold `N` points at the requested spacing.
pub fn random_interior_points(model: &ModelSpec, count: usize, min_gap: f64, seed: u64) -> Vec<Vec<f64>> {
    let n = model.n();
    let spread = (n - 1) as f64 * min_gap;
    let (lo, hi) = match model.kind() {
        Kind::CompactA => (0.0, 2.0 * std::f64::consts::PI - min_gap),
        Kind::NoncompactA => (-1.5, 1.5f64.max(-1.5 + spread + 1.0)),
        Kind::NoncompactBC => (0.5, 3.0f64.max(0.5 + spread + 1.0)),
    };
    let room = hi - lo - spread;
    assert!(room > 0.0, "no room for {n} points with gap {min_gap}");
    let mut rng = UniformStream::new(seed, 0);
    (0..count)
        .map(|_| {
            let mut u: Vec<f64> = (0..n).map(|_| room * rng.next_f64()).collect();
            u.sort_by(|a, b| a.total_cmp(b));
            let mut x: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(j, v)| lo + v + j as f64 * min_gap)
                .collect();
            if model.kind() != Kind::CompactA {
                x.reverse();
            }
            x
        })
        .collect()
}

/// Lower-triangular coefficients of the BC eigenfunctions in the basis
/// `e_l(cosh x)`, normalized to the value 1 at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffTable {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub n_max: usize,
    pub c: Vec<Vec<f64>>,
    /// Generator matrix on the basis, `L e_l = Σ_m matrix[l][m] e_m`.
    #[serde(skip)]
    pub matrix: Vec<Vec<f64>>,
}

impl CoeffTable {
    /// `H_n(x) = Σ_l c[n][l] e_l(cosh x)`.
    pub fn eigenfunction(&self, n: usize, x: &[f64]) -> Result<f64> {
        if n > self.n_max {
            return Err(Error::IndexOutOfRange { index: n, max: self.n_max });
        }
        let e = cosh_elem_sym_all(x)?;
        Ok(self.c[n].iter().zip(&e).map(|(c, e)| c * e).sum())
    }

    pub fn eigenvalue(&self, n: usize) -> f64 {
        let nf = n as f64;
        nf * (self.p + self.q - nf + 1.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Record(e.to_string()))
    }
}

/// Builds the generator matrix on `{e_l ∘ cosh}` numerically and extracts
/// its eigenvectors. The result depends on `(N, p, q)` only.
pub fn jacobi_coeffs(n: usize, p: f64, q: f64, kappa: Coupling, n_max: usize) -> Result<CoeffTable> {
    let model = ModelSpec::noncompact_bc(n, p, q, kappa)?;
    if n_max > n {
        return Err(Error::Parameter(format!("n_max = {n_max} exceeds N = {n}")));
    }
    let dim = n_max + 1;
    let mut last_cond = f64::NAN;
    for attempt in 0..COEFF_RETRIES {
        let points = random_interior_points(&model, dim, 0.5, COEFF_SEED ^ attempt);
        let basis = DMatrix::from_fn(dim, dim, |i, m| {
            cosh_elem_sym_all(&points[i]).map(|e| e[m]).unwrap_or(f64::NAN)
        });
        let sv = basis.singular_values();
        last_cond = sv.max() / sv.min();
        if !last_cond.is_finite() || last_cond > MAX_CONDITION {
            continue;
        }
        let lu = basis.lu();
        let mut matrix = vec![vec![0.0; dim]; dim];
        for l in 0..dim {
            let rhs = DVector::from_iterator(
                dim,
                points.iter().map(|x| generator_on_basis(&model, l, x)),
            );
            let rhs = DVector::from_iterator(dim, rhs.iter().map(|r| r.as_ref().copied().unwrap_or(f64::NAN)));
            if let Some(bad) = (0..dim).find(|&i| !rhs[i].is_finite()) {
                return Err(Error::Conditioning(format!("generator evaluation failed at sample {bad}")));
            }
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Conditioning("singular sample system".into()))?;
            matrix[l].copy_from_slice(sol.as_slice());
        }
        let c = eigenvectors(&matrix, n)?;
        return Ok(CoeffTable {
            n,
            p,
            q,
            n_max,
            c,
            matrix,
        });
    }
    Err(Error::Conditioning(format!(
        "no well-conditioned sample set after {COEFF_RETRIES} attempts (last condition number {last_cond:e})"
    )))
}

fn generator_on_basis(model: &ModelSpec, l: usize, x: &[f64]) -> Result<f64> {
    let f = |y: &[f64]| cosh_elem_sym_all(y).map(|e| e[l]).unwrap_or(f64::NAN);
    let (h1, h2) = COEFF_STEPS;
    let coarse = apply_generator_richardson(model, f, x, h1)?;
    let fine = apply_generator_richardson(model, f, x, h2)?;
    // Second Richardson level removes the O(h^4) term.
    Ok((16.0 * fine - coarse) / 15.0)
}

/// Left eigenvectors of the lower-triangular `matrix`, normalized by
/// `Σ_l c[l] binomial(N, l) = 1`.
fn eigenvectors(matrix: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    let dim = matrix.len();
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut c = vec![0.0; dim];
        c[k] = 1.0;
        let r = matrix[k][k];
        for m in (0..k).rev() {
            let s: f64 = (m + 1..=k).map(|l| c[l] * matrix[l][m]).sum();
            let denom = r - matrix[m][m];
            if denom.abs() < 1e-9 * (1.0 + r.abs()) {
                return Err(Error::Conditioning(format!("repeated eigenvalue at levels {m} and {k}")));
            }
            c[m] = s / denom;
        }
        let norm: f64 = c.iter().enumerate().map(|(l, v)| v * binomial(n, l)).sum();
        if norm.abs() < 1e-300 {
            return Err(Error::Conditioning(format!("eigenfunction {k} vanishes at the origin")));
        }
        c.iter_mut().for_each(|v| *v /= norm);
        out.push(c);
    }
    Ok(out)
}

/// Coefficients `a[n][l]` with `E e_n(cosh X_t) = Σ_l a[n][l] e^{r_l t}` for
/// the process started at `x`.
pub fn solve_a(table: &CoeffTable, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let dim = table.n_max + 1;
    // Invert the triangular matrix c row by row: e_n = Σ_m d[n][m] H_m.
    let mut d = vec![vec![0.0; dim]; dim];
    for row in 0..dim {
        assert!(table.c[row][row] != 0.0, "diagonal coefficient vanishes");
        for col in (0..=row).rev() {
            let target = if row == col { 1.0 } else { 0.0 };
            let s: f64 = (col + 1..=row).map(|m| d[row][m] * table.c[m][col]).sum();
            d[row][col] = (target - s) / table.c[col][col];
        }
    }
    let h: Vec<f64> = (0..dim)
        .map(|l| table.eigenfunction(l, x))
        .collect::<Result<_>>()?;
    Ok(d
        .into_iter()
        .map(|row| row.into_iter().zip(&h).map(|(d, h)| d * h).collect())
        .collect())
}

/// `E e_n(cosh X_t)` from the expansion of [`solve_a`].
pub fn expected_cosh_elem(table: &CoeffTable, a: &[Vec<f64>], n: usize, t: f64) -> f64 {
    a[n].iter()
        .take(n + 1)
        .enumerate()
        .map(|(l, a)| a * (table.eigenvalue(l) * t).exp())
        .sum()
}

/// The `l`-th member of the model's eigenfunction family, as a complex value.
fn eigenfunction_value(model: &ModelSpec, table: Option<&CoeffTable>, l: usize, x: &[f64]) -> Result<Complex64> {
    Ok(match model.kind() {
        Kind::CompactA => circle_elem_sym_all(x)[l],
        Kind::NoncompactA => {
            let v: Vec<Complex64> = x.iter().map(|v| Complex64::new(v.exp(), 0.0)).collect();
            elem_sym_all(&v)[l]
        }
        Kind::NoncompactBC => Complex64::new(table.expect("table present").eigenfunction(l, x)?, 0.0),
    })
}

/// Largest relative residual `|L f - λ f| / (1 + |f|)` of the `l`-th
/// eigenfunction over `grid`. BC models use `table`, computing one when absent.
pub fn eigen_residual(
    model: &ModelSpec,
    l: usize,
    grid: &[Vec<f64>],
    h: f64,
    table: Option<&CoeffTable>,
) -> Result<f64> {
    if l > model.n() {
        return Err(Error::IndexOutOfRange { index: l, max: model.n() });
    }
    let owned;
    let table = match (model.kind(), table) {
        (Kind::NoncompactBC, None) => {
            owned = jacobi_coeffs(model.n(), model.p(), model.q(), model.kappa(), model.n())?;
            Some(&owned)
        }
        (_, t) => t,
    };
    let lambda = match model.kind() {
        Kind::NoncompactBC => table.expect("table present").eigenvalue(l),
        _ => eigenvalue_elem(model, l)?,
    };
    let mut worst = 0.0f64;
    for x in grid {
        let f = |y: &[f64]| eigenfunction_value(model, table, l, y).unwrap_or(Complex64::new(f64::NAN, 0.0));
        let lf = apply_generator_complex(model, f, x, h)?;
        let fx = eigenfunction_value(model, table, l, x)?;
        let r = (lf - fx * lambda).norm() / (1.0 + fx.norm());
        if !r.is_finite() {
            return Err(Error::Domain(format!("non-finite residual at {x:?}")));
        }
        worst = worst.max(r);
    }
    Ok(worst)
}
