//! Process families, parameter algebra, chambers and drift fields.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Separation below which [`drift`] refuses to evaluate.
pub const DEFAULT_SEPARATION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    /// Type A on the torus (alcove `x_1 <= ... <= x_N <= x_1 + 2pi`).
    CompactA,
    /// Type A on the chamber `x_1 >= ... >= x_N`.
    NoncompactA,
    /// Type BC on the chamber `x_1 >= ... >= x_N >= 0`.
    NoncompactBC,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::CompactA => "compactA",
            Kind::NoncompactA => "noncompactA",
            Kind::NoncompactBC => "noncompactBC",
        }
    }

    pub fn is_type_a(self) -> bool {
        !matches!(self, Kind::NoncompactBC)
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "compacta" => Ok(Kind::CompactA),
            "noncompacta" => Ok(Kind::NoncompactA),
            "noncompactbc" | "bc" => Ok(Kind::NoncompactBC),
            other => Err(Error::Record(format!("unknown model kind '{other}'"))),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coupling constant `kappa` in `(0, inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    Finite(f64),
    Infinite,
}

impl Coupling {
    pub fn finite(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Coupling::Finite(value))
        } else if value == f64::INFINITY {
            Ok(Coupling::Infinite)
        } else {
            Err(Error::Parameter(format!("coupling must be positive, got {value}")))
        }
    }

    /// `1/kappa`, zero in the freezing limit.
    pub fn inverse(self) -> f64 {
        match self {
            Coupling::Finite(k) => 1.0 / k,
            Coupling::Infinite => 0.0,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Coupling::Finite(k) => k,
            Coupling::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Coupling::Infinite)
    }
}

impl FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Coupling::Infinite);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Record(format!("bad coupling '{s}'")))?;
        Coupling::finite(v)
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Finite(k) => write!(f, "{k}"),
            Coupling::Infinite => f.write_str("inf"),
        }
    }
}

/// Immutable description of one process family member.
///
/// For the type A kinds the multiplicity `k` and the coupling coincide; `p`
/// and `q` are only meaningful for [`Kind::NoncompactBC`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelSpec {
    kind: Kind,
    n: usize,
    kappa: Coupling,
    p: f64,
    q: f64,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.n == other.n
            && self.kappa == other.kappa
            && (self.kind.is_type_a() || (self.p == other.p && self.q == other.q))
    }
}

impl ModelSpec {
    pub fn compact_a(n: usize, k: Coupling) -> Result<Self> {
        Self::type_a(Kind::CompactA, n, k)
    }

    pub fn noncompact_a(n: usize, k: Coupling) -> Result<Self> {
        Self::type_a(Kind::NoncompactA, n, k)
    }

    fn type_a(kind: Kind, n: usize, k: Coupling) -> Result<Self> {
        check_dimension(n)?;
        Ok(Self {
            kind,
            n,
            kappa: k,
            p: f64::NAN,
            q: f64::NAN,
        })
    }

    pub fn noncompact_bc(n: usize, p: f64, q: f64, kappa: Coupling) -> Result<Self> {
        check_dimension(n)?;
        check_bc(n, p, q, kappa)?;
        Ok(Self {
            kind: Kind::NoncompactBC,
            n,
            kappa,
            p,
            q,
        })
    }

    /// Same family and parameters with a different coupling.
    pub fn with_kappa(&self, kappa: Coupling) -> Result<Self> {
        match self.kind {
            Kind::NoncompactBC => Self::noncompact_bc(self.n, self.p, self.q, kappa),
            kind => Self::type_a(kind, self.n, kappa),
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> Coupling {
        self.kappa
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Diffusion coefficient `sqrt(2/kappa)`, `None` in the freezing limit.
    pub fn noise_scale(&self) -> Option<f64> {
        match self.kappa {
            Coupling::Finite(k) => Some((2.0 / k).sqrt()),
            Coupling::Infinite => None,
        }
    }

    /// `k_{0,2} = p - (N-1) - 1/(2 kappa)`; NaN for type A.
    pub fn k02(&self) -> f64 {
        self.p - (self.n as f64 - 1.0) - 0.5 * self.kappa.inverse()
    }

    /// Root multiplicities `(k1, k2, k3)` of a BC model with finite coupling.
    pub fn multiplicities(&self) -> Result<(f64, f64, f64)> {
        match (self.kind, self.kappa) {
            (Kind::NoncompactBC, Coupling::Finite(kappa)) => {
                bc_multiplicity(self.n, self.p, self.q, kappa)
            }
            _ => Err(Error::Unsupported(
                "multiplicities need a BC model with finite coupling".into(),
            )),
        }
    }

    /// Weyl vector components `rho(kappa)_j`, `j = 1..=N`.
    pub fn rho(&self) -> Result<Vec<f64>> {
        let (k1, k2, k3) = self.multiplicities()?;
        Ok((1..=self.n)
            .map(|j| 0.5 * (k1 + 2.0 * k2 + 2.0 * k3 * (self.n - j) as f64))
            .collect())
    }

    /// Flat `key=value` record, one pair per line.
    pub fn to_record(&self) -> String {
        let mut out = format!("kind={}\nN={}\nkappa={}\n", self.kind, self.n, self.kappa);
        if self.kind.is_type_a() {
            out.push_str(&format!("k={}\n", self.kappa));
        } else {
            out.push_str(&format!("p={}\nq={}\n", self.p, self.q));
        }
        out
    }

    /// Parses the record written by [`ModelSpec::to_record`]. Pairs may be separated
    /// by newlines, commas or semicolons.
    pub fn from_record(record: &str) -> Result<Self> {
        let mut kind = None;
        let mut n = None;
        let mut kappa: Option<Coupling> = None;
        let mut k: Option<Coupling> = None;
        let mut p = None;
        let mut q = None;
        for item in record.split(['\n', ',', ';']) {
            let item = item.trim();
            if item.is_empty() || item.starts_with('#') {
                continue;
            }
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Record(format!("expected key=value, got '{item}'")))?;
            let value = value.trim();
            match key.trim() {
                "kind" => kind = Some(value.parse::<Kind>()?),
                "N" | "n" => {
                    n = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| Error::Record(format!("bad N '{value}'")))?,
                    )
                }
                "kappa" => kappa = Some(value.parse()?),
                "k" => k = Some(value.parse()?),
                "p" => p = Some(parse_f64("p", value)?),
                "q" => q = Some(parse_f64("q", value)?),
                other => return Err(Error::Record(format!("unknown key '{other}'"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Record("missing kind".into()))?;
        let n = n.ok_or_else(|| Error::Record("missing N".into()))?;
        match kind {
            Kind::NoncompactBC => {
                let kappa = kappa.ok_or_else(|| Error::Record("missing kappa".into()))?;
                let p = p.ok_or_else(|| Error::Record("missing p".into()))?;
                let q = q.ok_or_else(|| Error::Record("missing q".into()))?;
                Self::noncompact_bc(n, p, q, kappa)
            }
            kind => {
                let coupling = match (k, kappa) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(Error::Record(format!("k={a} and kappa={b} disagree")))
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => return Err(Error::Record("missing k".into())),
                };
                Self::type_a(kind, n, coupling)
            }
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Record(format!("bad {key} '{value}'")))
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::Parameter(format!("dimension N must be at least 2, got {n}")))
    } else {
        Ok(())
    }
}

fn check_bc(n: usize, p: f64, q: f64, kappa: Coupling) -> Result<()> {
    if !(p.is_finite() && q.is_finite()) {
        return Err(Error::Parameter("p and q must be finite".into()));
    }
    let lower = n as f64 - 1.0 + 0.5 * kappa.inverse();
    if q < p {
        return Err(Error::Parameter(format!("q >= p violated: q = {q}, p = {p}")));
    }
    if p < lower {
        return Err(Error::Parameter(format!(
            "p >= N-1+1/(2 kappa) violated: p = {p} < {lower}"
        )));
    }
    Ok(())
}

/// Multiplicities `(k1, k2, k3) = kappa (q-p, p-(N-1)-1/(2 kappa), 1)`.
pub fn bc_multiplicity(n: usize, p: f64, q: f64, kappa: f64) -> Result<(f64, f64, f64)> {
    check_dimension(n)?;
    check_bc(n, p, q, Coupling::finite(kappa)?)?;
    let k02 = p - (n as f64 - 1.0) - 0.5 / kappa;
    Ok((kappa * (q - p), kappa * k02, kappa))
}

/// Forward map `(k1, k2, k3) -> (p, q, kappa)`.
pub fn bc_parameters(n: usize, k1: f64, k2: f64, k3: f64) -> Result<(f64, f64, f64)> {
    if !(k1 >= 0.0 && k2 >= 0.0 && k3 > 0.0) {
        return Err(Error::Parameter(format!(
            "need k1, k2 >= 0 and k3 > 0, got ({k1}, {k2}, {k3})"
        )));
    }
    let base = n as f64 - 1.0;
    let q = base + (1.0 + 2.0 * k1 + 2.0 * k2) / (2.0 * k3);
    let p = base + (1.0 + 2.0 * k2) / (2.0 * k3);
    Ok((p, q, k3))
}

/// A point of the model's closed chamber or alcove.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration(Vec<f64>);

impl Configuration {
    /// Wraps `x` after checking the chamber ordering of `model`.
    pub fn new(model: &ModelSpec, x: Vec<f64>) -> Result<Self> {
        if x.len() != model.n() {
            return Err(Error::Parameter(format!(
                "expected {} coordinates, got {}",
                model.n(),
                x.len()
            )));
        }
        if !in_chamber(model, &x, 1e-12) {
            return Err(Error::Domain(format!(
                "{x:?} is not in the {} chamber",
                model.kind()
            )));
        }
        Ok(Self(x))
    }

    /// Folds arbitrary coordinates into the chamber.
    pub fn folded(model: &ModelSpec, x: &[f64]) -> Self {
        Self(chamber_fold(model, x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Configuration {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Non-increasing sequence of non-negative integers of length at most N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Parameter(format!("{parts:?} is not non-increasing")));
        }
        Ok(Self(parts))
    }

    /// `1^n` padded to length `len`.
    pub fn ones(n: usize, len: usize) -> Self {
        Self((0..len.max(n)).map(|j| u32::from(j < n)).collect())
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }
}

/// Whether `x` satisfies the chamber inequalities up to `tol`.
pub fn in_chamber(model: &ModelSpec, x: &[f64], tol: f64) -> bool {
    let ordered_desc = x.windows(2).all(|w| w[0] >= w[1] - tol);
    match model.kind() {
        Kind::CompactA => {
            x.windows(2).all(|w| w[0] <= w[1] + tol)
                && x.last().unwrap() - x[0] <= TWO_PI + tol
        }
        Kind::NoncompactA => ordered_desc,
        Kind::NoncompactBC => ordered_desc && *x.last().unwrap() >= -tol,
    }
}

/// Smallest distance of `x` to a singular hyperplane of the drift.
pub fn min_separation(model: &ModelSpec, x: &[f64]) -> f64 {
    let n = x.len();
    let mut best = f64::INFINITY;
    for j in 0..n {
        if model.kind() == Kind::NoncompactBC {
            best = best.min(x[j].abs());
        }
        for l in j + 1..n {
            let d = x[j] - x[l];
            let sep = match model.kind() {
                Kind::CompactA => {
                    let r = d.rem_euclid(TWO_PI);
                    r.min(TWO_PI - r)
                }
                Kind::NoncompactA => d.abs(),
                Kind::NoncompactBC => d.abs().min((x[j] + x[l]).abs()),
            };
            best = best.min(sep);
        }
    }
    best
}

/// Drift of the renormalized SDE (equivalently the freezing-limit ODE field).
pub fn drift(model: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    drift_into(model, x, DEFAULT_SEPARATION_FLOOR, &mut out)?;
    Ok(out)
}

/// Allocation-free [`drift`] with an explicit separation floor.
pub fn drift_into(model: &ModelSpec, x: &[f64], floor: f64, out: &mut [f64]) -> Result<()> {
    let min_gap = min_separation(model, x);
    if !(min_gap >= floor) {
        return Err(Error::Singular { min_gap, floor });
    }
    let n = x.len();
    out.iter_mut().for_each(|b| *b = 0.0);
    match model.kind() {
        Kind::CompactA => {
            for j in 0..n {
                for l in j + 1..n {
                    let c = 1.0 / (0.5 * (x[j] - x[l])).tan();
                    out[j] += c;
                    out[l] -= c;
                }
            }
        }
        Kind::NoncompactA => {
            for j in 0..n {
                for l in j + 1..n {
                    let c = 1.0 / (0.5 * (x[j] - x[l])).tanh();
                    out[j] += c;
                    out[l] -= c;
                }
            }
        }
        Kind::NoncompactBC => {
            let wall = model.q() - model.p();
            let two_k02 = 2.0 * model.k02();
            for j in 0..n {
                out[j] += wall / (0.5 * x[j]).tanh() + two_k02 / x[j].tanh();
                for l in j + 1..n {
                    let minus = 1.0 / (0.5 * (x[j] - x[l])).tanh();
                    let plus = 1.0 / (0.5 * (x[j] + x[l])).tanh();
                    out[j] += minus + plus;
                    out[l] += plus - minus;
                }
            }
        }
    }
    Ok(())
}

/// Maps raw coordinates to the chamber representative of their orbit.
///
/// Type A compact: sorting plus translations from `2 pi Q^vee`, which leave the
/// coordinate sum unchanged. Type A non-compact: descending sort. BC: absolute
/// values, then descending sort.
pub fn chamber_fold(model: &ModelSpec, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    fold_in_place(model.kind(), &mut y);
    y
}

pub fn fold_in_place(kind: Kind, y: &mut [f64]) {
    match kind {
        Kind::CompactA => {
            y.sort_by(f64::total_cmp);
            let last = y.len() - 1;
            while y[last] - y[0] > TWO_PI {
                y[last] -= TWO_PI;
                y[0] += TWO_PI;
                y.sort_by(f64::total_cmp);
            }
        }
        Kind::NoncompactA => y.sort_by(|a, b| b.total_cmp(a)),
        Kind::NoncompactBC => {
            y.iter_mut().for_each(|v| *v = v.abs());
            y.sort_by(|a, b| b.total_cmp(a));
        }
    }
}

/// Eigenvalue of the `l`-th elementary-symmetric eigenfunction under the
/// renormalized generator.
pub fn eigenvalue_elem(model: &ModelSpec, l: usize) -> Result<f64> {
    let n = model.n();
    if l > n {
        return Err(Error::IndexOutOfRange { index: l, max: n });
    }
    let lf = l as f64;
    let inv = model.kappa().inverse();
    Ok(match model.kind() {
        Kind::CompactA => -lf * (inv + (n - l) as f64),
        Kind::NoncompactA => lf * (inv + (n - l) as f64),
        Kind::NoncompactBC => lf * (model.p() + model.q() - lf + 1.0),
    })
}

/// `r_lambda = sum_j lambda_j ((lambda_j - 1)/kappa + p + q + 2 - 2j)` for BC models.
pub fn eigenvalue_bc_partition(model: &ModelSpec, lambda: &Partition) -> Result<f64> {
    if model.kind() != Kind::NoncompactBC {
        return Err(Error::Unsupported("partition eigenvalues are defined for BC models".into()));
    }
    let parts = lambda.parts();
    if parts.len() > model.n() && parts[model.n()..].iter().any(|&v| v > 0) {
        return Err(Error::Parameter(format!("{parts:?} has more than N parts")));
    }
    if model.kappa().is_infinite() && parts.iter().any(|&v| v > 1) {
        return Err(Error::Unsupported(
            "kappa = inf only supports partitions of the form 1^n".into(),
        ));
    }
    let inv = model.kappa().inverse();
    let pq = model.p() + model.q();
    Ok(parts
        .iter()
        .enumerate()
        .map(|(idx, &lam)| {
            let lam = lam as f64;
            let j = (idx + 1) as f64;
            // (lam - 1)/kappa vanishes for lam in {0, 1}, which also covers kappa = inf
            let curvature = if lam > 1.0 { (lam - 1.0) * inv } else { 0.0 };
            lam * (curvature + pq + 2.0 - 2.0 * j)
        })
        .sum())
}

/// Equally spaced configuration `x_1 + 2 pi j / N` in the alcove.
pub fn equispaced(n: usize, base: f64) -> Vec<f64> {
    (0..n).map(|j| base + TWO_PI * j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn compact(n: usize, k: f64) -> ModelSpec {
        ModelSpec::compact_a(n, Coupling::Finite(k)).unwrap()
    }

    fn bc(n: usize, p: f64, q: f64, kappa: f64) -> ModelSpec {
        ModelSpec::noncompact_bc(n, p, q, Coupling::Finite(kappa)).unwrap()
    }

    #[test]
    fn multiplicity_examples() {
        let (k1, _, _) = bc_multiplicity(3, 4.0, 4.0, 1.0).unwrap();
        assert_eq!(k1, 0.0);
        let (_, k2, k3) = bc_multiplicity(2, 2.0, 3.0, 0.5).unwrap();
        assert_eq!(k2, 0.0);
        assert_eq!(k3, 0.5);
        let err = bc_multiplicity(2, 1.2, 3.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("p >= N-1+1/(2 kappa)"), "{err}");
        let err = bc_multiplicity(2, 3.0, 2.5, 1.0).unwrap_err();
        assert!(err.to_string().contains("q >= p"), "{err}");
    }

    #[test]
    fn multiplicity_roundtrip() {
        for &(k1, k2, k3) in &[(0.0, 0.0, 1.0), (0.5, 1.5, 2.0), (3.0, 0.25, 0.1)] {
            let (p, q, kappa) = bc_parameters(4, k1, k2, k3).unwrap();
            let (a, b, c) = bc_multiplicity(4, p, q, kappa).unwrap();
            assert_relative_eq!(a, k1, epsilon = 1e-14);
            assert_relative_eq!(b, k2, epsilon = 1e-14);
            assert_relative_eq!(c, k3, epsilon = 1e-14);
        }
    }

    #[test]
    fn rho_components() {
        let m = bc(3, 3.0, 4.0, 2.0);
        let rho = m.rho().unwrap();
        let k02 = m.k02();
        for (j, r) in rho.iter().enumerate() {
            let expected = 1.0 * ((4.0 - 3.0) + 2.0 * k02 + 2.0 * (3 - (j + 1)) as f64);
            assert_relative_eq!(*r, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn compact_drift_vanishes_on_equispaced() {
        for n in 2..=7 {
            for &base in &[0.0, 0.37, -2.0, 10.0] {
                let b = drift(&compact(n, 1.0), &equispaced(n, base)).unwrap();
                assert!(b.iter().all(|v| v.abs() < 1e-12), "n={n} base={base} {b:?}");
            }
        }
        let b = drift(&compact(2, 1.0), &[0.0, PI]).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn type_a_drift_sums_to_zero() {
        let x = [2.1, 0.4, -0.3, -1.9];
        for model in [
            ModelSpec::noncompact_a(4, Coupling::Finite(0.7)).unwrap(),
            compact(4, 2.0),
        ] {
            let x = chamber_fold(&model, &x);
            let s: f64 = drift(&model, &x).unwrap().iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn bc_drift_at_infinity_uses_shifted_k02() {
        let fin = bc(2, 3.0, 4.0, 2.0);
        let inf = ModelSpec::noncompact_bc(2, 3.0, 4.0, Coupling::Infinite).unwrap();
        assert_relative_eq!(fin.k02(), 3.0 - 1.0 - 0.25);
        assert_relative_eq!(inf.k02(), 2.0);
        let x = [1.5, 0.5];
        let b = drift(&inf, &x).unwrap();
        let expected0 = 1.0 / (0.5f64).tanh() + 1.0 / (1.0f64).tanh() + 1.0 / (0.75f64).tanh()
            + 4.0 / (1.5f64).tanh();
        assert_relative_eq!(b[0], expected0, max_relative = 1e-14);
    }

    #[test]
    fn drift_refuses_collisions() {
        let m = ModelSpec::noncompact_a(3, Coupling::Finite(1.0)).unwrap();
        assert!(matches!(drift(&m, &[1.0, 1.0, 0.0]), Err(Error::Singular { .. })));
        assert!(matches!(drift(&bc(2, 2.0, 2.0, 1.0), &[1.0, 0.0]), Err(Error::Singular { .. })));
        assert!(matches!(
            drift(&compact(2, 1.0), &[0.0, TWO_PI]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn folds() {
        let m = bc(2, 2.0, 2.0, 1.0);
        assert_eq!(chamber_fold(&m, &[-1.0, 3.0]), vec![3.0, 1.0]);
        let a = ModelSpec::noncompact_a(3, Coupling::Finite(1.0)).unwrap();
        assert_eq!(chamber_fold(&a, &[3.0, 1.0, -2.0]), vec![3.0, 1.0, -2.0]);

        let c = compact(2, 1.0);
        let y = chamber_fold(&c, &[5.0, 0.1]);
        assert!(in_chamber(&c, &y, 0.0));
        assert_relative_eq!(y.iter().sum::<f64>(), 5.1, epsilon = 1e-14);

        let raw = [9.0, -4.0, 0.5, 13.0];
        let c4 = compact(4, 1.0);
        let y = chamber_fold(&c4, &raw);
        assert!(in_chamber(&c4, &y, 0.0), "{y:?}");
        assert_relative_eq!(y.iter().sum::<f64>(), raw.iter().sum::<f64>(), epsilon = 1e-12);
        assert_eq!(chamber_fold(&c4, &y), y);
    }

    #[test]
    fn eigenvalues() {
        for m in [
            compact(3, 1.0),
            ModelSpec::noncompact_a(3, Coupling::Infinite).unwrap(),
            bc(3, 3.0, 4.0, 1.0),
        ] {
            assert_eq!(eigenvalue_elem(&m, 0).unwrap(), 0.0);
        }
        assert_eq!(eigenvalue_elem(&compact(3, 1.0), 1).unwrap(), -3.0);
        let inf = ModelSpec::compact_a(3, Coupling::Infinite).unwrap();
        assert_eq!(eigenvalue_elem(&inf, 1).unwrap(), -2.0);
        assert_eq!(eigenvalue_elem(&bc(2, 2.0, 2.0, 1.0), 1).unwrap(), 4.0);
        assert!(eigenvalue_elem(&compact(3, 1.0), 4).is_err());
    }

    #[test]
    fn partition_eigenvalues() {
        let m = bc(2, 3.0, 4.0, 2.0);
        assert_eq!(eigenvalue_bc_partition(&m, &Partition::new(vec![0, 0]).unwrap()).unwrap(), 0.0);
        let r = eigenvalue_bc_partition(&m, &Partition::new(vec![2, 1]).unwrap()).unwrap();
        assert_relative_eq!(r, 20.0, epsilon = 1e-12);
        for n in 0..=2 {
            let ones = Partition::ones(n, 2);
            let r = eigenvalue_bc_partition(&m, &ones).unwrap();
            assert_eq!(r, eigenvalue_elem(&m, n).unwrap());
            assert_eq!(r, (n as f64) * (7.0 - n as f64 + 1.0));
        }
        let m1 = bc(3, 3.0, 4.0, 1.0);
        let m10 = bc(3, 3.0, 4.0, 10.0);
        let ones = Partition::ones(2, 3);
        assert_eq!(
            eigenvalue_bc_partition(&m1, &ones).unwrap(),
            eigenvalue_bc_partition(&m10, &ones).unwrap()
        );
        let inf = ModelSpec::noncompact_bc(2, 3.0, 4.0, Coupling::Infinite).unwrap();
        assert!(matches!(
            eigenvalue_bc_partition(&inf, &Partition::new(vec![2, 0]).unwrap()),
            Err(Error::Unsupported(_))
        ));
        assert!(Partition::new(vec![1, 2]).is_err());
    }

    #[test]
    fn record_roundtrip() {
        for m in [
            compact(3, 1.0),
            ModelSpec::noncompact_a(2, Coupling::Infinite).unwrap(),
            bc(3, 3.5, 4.25, 0.75),
        ] {
            let rec = m.to_record();
            assert_eq!(ModelSpec::from_record(&rec).unwrap(), m);
        }
        let m = ModelSpec::from_record("kind=noncompactA, N=2, kappa=inf").unwrap();
        assert!(m.kappa().is_infinite());
        assert!(ModelSpec::from_record("kind=compactA\nN=3\nk=1\nkappa=2").is_err());
        assert!(ModelSpec::from_record("kind=noncompactBC\nN=2\nkappa=1\np=0.5\nq=1").is_err());
        assert!(ModelSpec::from_record("kind=torus\nN=2\nk=1").is_err());
    }

    #[test]
    fn configuration_validation() {
        let a = ModelSpec::noncompact_a(3, Coupling::Finite(1.0)).unwrap();
        assert!(Configuration::new(&a, vec![1.0, 0.0, -1.0]).is_ok());
        assert!(Configuration::new(&a, vec![0.0, 1.0, -1.0]).is_err());
        assert!(Configuration::new(&a, vec![1.0, 0.0]).is_err());
        let c = compact(3, 1.0);
        assert!(Configuration::new(&c, vec![0.0, 1.0, 7.0]).is_err());
        assert_eq!(
            Configuration::folded(&c, &[7.0, 1.0, 0.0]).as_slice().len(),
            3
        );
    }
}
