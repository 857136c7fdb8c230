//! Elementary symmetric polynomials and the observables built from them.
//!
//! All evaluations use the product expansion of `prod_j (1 + v_j s)`, updating
//! a coefficient array once per input value. Subset enumeration is only used
//! as an oracle in tests.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest argument for which `exp` and `cosh` stay finite.
pub const EXP_OVERFLOW: f64 = 709.78;

/// All elementary symmetric polynomials `e_0..=e_N` of `values`.
pub fn elem_sym_all(values: &[Complex64]) -> Vec<Complex64> {
    elem_sym_upto(values, values.len())
}

fn elem_sym_upto(values: &[Complex64], l_max: usize) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); l_max + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (j, &v) in values.iter().enumerate() {
        let top = (j + 1).min(l_max);
        for l in (1..=top).rev() {
            let prev = e[l - 1];
            e[l] += v * prev;
        }
    }
    e
}

/// The `l`-th elementary symmetric polynomial of `values`.
pub fn elem_sym(values: &[Complex64], l: usize) -> Result<Complex64> {
    if l > values.len() {
        return Err(Error::IndexOutOfRange {
            index: l,
            max: values.len(),
        });
    }
    Ok(elem_sym_upto(values, l)[l])
}

fn real_elem_sym_all(values: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (j, v) in values.enumerate() {
        for l in (1..=j + 1).rev() {
            e[l] += v * e[l - 1];
        }
    }
    e
}

fn check_overflow(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| v.abs() > EXP_OVERFLOW) {
        Some(index) => Err(Error::Overflow {
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

fn check_index(l: usize, n: usize) -> Result<()> {
    if l > n {
        Err(Error::IndexOutOfRange { index: l, max: n })
    } else {
        Ok(())
    }
}

/// `e_l(exp x_1, ..., exp x_N)`.
pub fn trig_elem_sym(x: &[f64], l: usize) -> Result<f64> {
    check_index(l, x.len())?;
    Ok(trig_elem_sym_all(x)?[l])
}

pub fn trig_elem_sym_all(x: &[f64]) -> Result<Vec<f64>> {
    check_overflow(x)?;
    Ok(real_elem_sym_all(x.iter().map(|v| v.exp()), x.len()))
}

/// `e_l(cosh x_1, ..., cosh x_N)`.
pub fn cosh_elem_sym(x: &[f64], l: usize) -> Result<f64> {
    check_index(l, x.len())?;
    Ok(cosh_elem_sym_all(x)?[l])
}

pub fn cosh_elem_sym_all(x: &[f64]) -> Result<Vec<f64>> {
    check_overflow(x)?;
    Ok(real_elem_sym_all(x.iter().map(|v| v.cosh()), x.len()))
}

/// `e_l(exp(i x_1), ..., exp(i x_N))` for every `l`.
pub fn circle_elem_sym_all(x: &[f64]) -> Vec<Complex64> {
    let z: Vec<Complex64> = x.iter().map(|&v| Complex64::cis(v)).collect();
    elem_sym_all(&z)
}

/// Monic polynomial stored as `coeffs[l] = (-1)^l e_l(roots)`, so that
/// `p(y) = sum_l coeffs[l] y^(degree - l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    coeffs: Vec<Complex64>,
}

impl PolyCoeffs {
    /// Builds the polynomial from signed elementary symmetric values; `coeffs[0]` must be 1.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self> {
        match coeffs.first() {
            Some(c) if (*c - 1.0).norm() < 1e-12 => Ok(Self { coeffs }),
            _ => Err(Error::Parameter("leading coefficient must be 1".into())),
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, y: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * y + c)
    }
}

pub fn poly_from_roots(roots: &[Complex64]) -> PolyCoeffs {
    let coeffs = elem_sym_all(roots)
        .into_iter()
        .enumerate()
        .map(|(l, e)| if l % 2 == 0 { e } else { -e })
        .collect();
    PolyCoeffs { coeffs }
}

/// Real-rooted convenience wrapper.
pub fn poly_from_real_roots(roots: &[f64]) -> PolyCoeffs {
    let r: Vec<Complex64> = roots.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    poly_from_roots(&r)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, PI};

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn small_integer_cases() {
        let v = [c(1.0), c(2.0), c(3.0)];
        assert_eq!(elem_sym(&v, 0).unwrap(), c(1.0));
        assert_eq!(elem_sym(&v, 2).unwrap(), c(11.0));
        assert_eq!(elem_sym(&v, 3).unwrap(), c(6.0));
        assert!(matches!(
            elem_sym(&v, 4),
            Err(Error::IndexOutOfRange { index: 4, max: 3 })
        ));
    }

    #[test]
    fn roots_of_unity() {
        for n in 2..=8 {
            let z: Vec<Complex64> = (0..n)
                .map(|j| Complex64::cis(2.0 * PI * j as f64 / n as f64))
                .collect();
            for l in 1..n {
                assert!(elem_sym(&z, l).unwrap().norm() < 1e-12, "n={n} l={l}");
            }
            let sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
            assert!((elem_sym(&z, n).unwrap() - sign).norm() < 1e-12);
        }
    }

    #[test]
    fn trig_and_cosh_values() {
        let zeros = [0.0; 5];
        for l in 0..=5 {
            assert_relative_eq!(trig_elem_sym(&zeros, l).unwrap(), binomial(5, l));
        }
        assert_relative_eq!(
            trig_elem_sym(&[1.0, -1.0], 1).unwrap(),
            E + 1.0 / E,
            max_relative = 1e-15
        );
        assert_relative_eq!(trig_elem_sym(&[1.0, -1.0], 1).unwrap(), 3.0861613, epsilon = 1e-7);
        let x = [0.3, -1.2, 2.0];
        assert_relative_eq!(
            trig_elem_sym(&x, 3).unwrap(),
            (0.3f64 - 1.2 + 2.0).exp(),
            max_relative = 1e-14
        );
        assert_eq!(cosh_elem_sym(&[0.0, 0.0], 2).unwrap(), 1.0);
        // cosh 2 + cosh 1
        assert_relative_eq!(cosh_elem_sym(&[2.0, 1.0], 1).unwrap(), 5.3052763259, epsilon = 1e-9);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for l in 0..=3 {
            assert_eq!(cosh_elem_sym(&x, l).unwrap(), cosh_elem_sym(&neg, l).unwrap());
            assert!(cosh_elem_sym(&x, l).unwrap() >= binomial(3, l));
        }
    }

    #[test]
    fn overflow_reports_index() {
        let err = trig_elem_sym(&[1.0, 800.0], 1).unwrap_err();
        assert_eq!(
            err,
            Error::Overflow {
                index: 1,
                value: 800.0
            }
        );
        assert!(cosh_elem_sym(&[-720.0, 0.0], 0).is_err());
    }

    #[test]
    fn polynomial_from_roots() {
        let p = poly_from_real_roots(&[1.0, 1.0]);
        assert_eq!(p.coeffs(), &[c(1.0), c(-2.0), c(1.0)]);

        for &t in &[0.1f64, 0.7, 2.0] {
            let x1 = (t as f64).exp().acosh();
            let p = poly_from_real_roots(&[x1.exp(), (-x1).exp()]);
            assert_relative_eq!(p.coeffs()[1].re, -2.0 * t.exp(), max_relative = 1e-12);
            assert_relative_eq!(p.coeffs()[2].re, 1.0, max_relative = 1e-12);

            let x1 = ((3.0 * (2.0 * t).exp() - 1.0) / 2.0).acosh();
            let p = poly_from_real_roots(&[1.0, x1.exp(), (-x1).exp()]);
            let e2t = (2.0 * t).exp();
            assert_relative_eq!(p.coeffs()[1].re, -3.0 * e2t, max_relative = 1e-12);
            assert_relative_eq!(p.coeffs()[2].re, 3.0 * e2t, max_relative = 1e-12);
            assert_relative_eq!(p.coeffs()[3].re, -1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn leading_coefficient_checked() {
        assert!(PolyCoeffs::from_coeffs(vec![c(2.0), c(1.0)]).is_err());
        let p = PolyCoeffs::from_coeffs(vec![c(1.0), c(0.0), c(-4.0)]).unwrap();
        assert_eq!(p.degree(), 2);
        assert_eq!(p.eval(c(2.0)), c(0.0));
    }
}
