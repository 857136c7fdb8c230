//! Freezing-limit ODEs integrated with step-doubling RK4, closed-form
//! trajectories and the compact limit configuration.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::convention::Convention;
use crate::error::{Error, Result};
use crate::generator::CoeffTable;
use crate::models::{drift, eigenvalue_elem, fold_in_place, min_separation, Kind, ModelSpec};
use crate::sde::{regularize_start, signed_min_gap, PathSample};
use crate::symfunc::{circle_elem_sym_all, trig_elem_sym_all};

#[derive(Debug, Clone, PartialEq)]
pub struct OdeConfig {
    /// Componentwise agreement required between successive refinements.
    pub tol: f64,
    /// Size of the offset applied to boundary starts.
    pub epsilon: f64,
    /// Spacing of recorded states; `None` records about 1000 states.
    pub record_step: Option<f64>,
    pub max_refinements: u32,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            epsilon: 1e-8,
            record_step: None,
            max_refinements: 10,
        }
    }
}

/// Result of [`integrate_freezing_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct FreezeRun {
    pub path: PathSample,
    /// Offset used for a boundary start, `None` for interior starts.
    pub epsilon: Option<f64>,
    /// Largest componentwise difference between the `ε` and `ε/2` runs.
    pub sensitivity: Option<f64>,
}

/// Integrates the `κ = ∞` dynamics from `x0` and records the trajectory.
pub fn integrate_freezing(model: &ModelSpec, x0: &[f64], t_end: f64, cfg: &OdeConfig) -> Result<PathSample> {
    integrate_freezing_run(model, x0, t_end, cfg).map(|r| r.path)
}

/// As [`integrate_freezing`], also reporting the boundary-start diagnostics.
///
/// Starting points on a chamber wall are pushed inside by equally spaced
/// offsets of size `ε` and `ε/2`; the recorded states are the extrapolation
/// `2 s(ε/2) - s(ε)`.
pub fn integrate_freezing_run(model: &ModelSpec, x0: &[f64], t_end: f64, cfg: &OdeConfig) -> Result<FreezeRun> {
    if !model.kappa().is_infinite() {
        return Err(Error::Unsupported(
            "the ode module integrates kappa = inf only; use the sde module".into(),
        ));
    }
    if x0.len() != model.n() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("starting point must hold {} finite values", model.n())));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Parameter(format!("t_end must be non-negative, got {t_end}")));
    }
    if !(cfg.tol > 0.0 && cfg.epsilon > 0.0) {
        return Err(Error::Parameter("tol and epsilon must be positive".into()));
    }
    let times = record_times(t_end, cfg.record_step)?;
    let mut start = x0.to_vec();
    fold_in_place(model.kind(), &mut start);
    let (states, epsilon, sensitivity) = if min_separation(model, &start) > cfg.epsilon {
        (solve_refined(model, &start, &times, cfg)?, None, None)
    } else {
        let coarse = solve_refined(model, &regularize_start(model, &start, cfg.epsilon), &times, cfg)?;
        let fine = solve_refined(model, &regularize_start(model, &start, cfg.epsilon / 2.0), &times, cfg)?;
        let mut sens = 0.0f64;
        let states: Vec<Vec<f64>> = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| {
                c.iter()
                    .zip(f)
                    .map(|(c, f)| {
                        sens = sens.max((c - f).abs());
                        2.0 * f - c
                    })
                    .collect()
            })
            .collect();
        (states, Some(cfg.epsilon), Some(sens))
    };
    let dt = if times.len() > 1 { times[1] } else { 0.0 };
    Ok(FreezeRun {
        path: PathSample {
            model: *model,
            times,
            states,
            seed: 0,
            dt,
            stream: 0,
            substeps: 0,
        },
        epsilon,
        sensitivity,
    })
}

fn record_times(t_end: f64, step: Option<f64>) -> Result<Vec<f64>> {
    if t_end == 0.0 {
        return Ok(vec![0.0]);
    }
    let step = step.unwrap_or(t_end / 1000.0);
    if !(step > 0.0) {
        return Err(Error::Parameter("record step must be positive".into()));
    }
    let n = ((t_end / step) - 1e-9).ceil().max(1.0) as usize;
    Ok((0..=n)
        .map(|i| if i == n { t_end } else { i as f64 * step })
        .collect())
}

/// Repeats the adaptive integration with local tolerances divided by 16
/// until two successive runs agree to `cfg.tol`.
fn solve_refined(model: &ModelSpec, x0: &[f64], times: &[f64], cfg: &OdeConfig) -> Result<Vec<Vec<f64>>> {
    let mut local = cfg.tol;
    let mut prev = solve(model, x0, times, local)?;
    let mut diff = f64::INFINITY;
    for _ in 0..cfg.max_refinements {
        local /= 16.0;
        let cur = solve(model, x0, times, local)?;
        diff = prev
            .iter()
            .flatten()
            .zip(cur.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prev = cur;
        if diff < cfg.tol {
            return Ok(prev);
        }
    }
    Err(Error::Conditioning(format!(
        "ode refinement stalled: successive runs differ by {diff:e} > {:e}",
        cfg.tol
    )))
}

fn rk4(model: &ModelSpec, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let shifted = |k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    let k1 = drift(model, x)?;
    let k2 = drift(model, &shifted(&k1, h / 2.0))?;
    let k3 = drift(model, &shifted(&k2, h / 2.0))?;
    let k4 = drift(model, &shifted(&k3, h))?;
    Ok((0..x.len())
        .map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect())
}

/// Time scale `gap / max|drift|` of the field at `x`.
fn time_scale(model: &ModelSpec, x: &[f64]) -> Result<f64> {
    let b = drift(model, x)?;
    let b_max = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = min_separation(model, x);
    Ok(if b_max > 0.0 { gap / b_max } else { f64::INFINITY })
}

/// One adaptive pass; returns the state at each entry of `times`.
fn solve(model: &ModelSpec, x0: &[f64], times: &[f64], local_tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    let mut t = 0.0;
    let mut h = (0.1 * time_scale(model, &x)?).min(times.last().copied().unwrap_or(0.0));
    for &target in &times[1..] {
        while t < target {
            let last = target - t <= h * (1.0 + 1e-12);
            let step = if last { target - t } else { h };
            match try_double_step(model, &x, step, local_tol) {
                Ok(Some((next, err))) => {
                    x = next;
                    t = if last { target } else { t + step };
                    let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 4.0 };
                    h = step * factor.clamp(0.1, 4.0);
                }
                Ok(None) | Err(Error::Singular { .. }) => {
                    h = 0.25 * step;
                    let scale = time_scale(model, &x)?;
                    if h < 1e-12 * scale.min(1.0) {
                        return Err(Error::StepCollapse { time: t, h });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Full step versus two half steps. Returns the extrapolated state and the
/// normalized error, or `None` when the step must be retried smaller.
fn try_double_step(model: &ModelSpec, x: &[f64], h: f64, tol: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let gap = min_separation(model, x);
    let full = rk4(model, x, h)?;
    let mid = rk4(model, x, h / 2.0)?;
    let half = rk4(model, &mid, h / 2.0)?;
    let mut err = 0.0f64;
    for j in 0..x.len() {
        err = err.max((half[j] - full[j]).abs() / 15.0 / (tol * (1.0 + x[j].abs())));
    }
    if !err.is_finite() || err > 1.0 {
        return Ok(None);
    }
    let next: Vec<f64> = (0..x.len()).map(|j| half[j] + (half[j] - full[j]) / 15.0).collect();
    if signed_min_gap(model.kind(), &next) < 0.5 * gap {
        return Ok(None);
    }
    Ok(Some((next, err)))
}

/// Closed-form freezing trajectories from the origin for `N = 2, 3`.
///
/// The `N = 3` solution satisfies `e^{x_1} + e^{-x_1} + 1 = 3 e^{2t}`. The
/// published expression `arcosh(3(e^{2t}-1)/2)` is available through
/// [`Convention::Published`] and is undefined for `t < ln(5/3)/2`.
pub fn closed_form_noncompact_a(n: usize, t: f64, convention: Convention) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be non-negative, got {t}")));
    }
    match n {
        2 => {
            let a = t.exp().acosh();
            Ok(vec![a, -a])
        }
        3 => {
            let arg = match convention {
                Convention::Corrected => (3.0 * (2.0 * t).exp() - 1.0) / 2.0,
                Convention::Published => 3.0 * ((2.0 * t).exp() - 1.0) / 2.0,
            };
            if arg < 1.0 {
                return Err(Error::Domain(format!("arcosh argument {arg} < 1 at t = {t}")));
            }
            let a = arg.acosh();
            Ok(vec![a, 0.0, -a])
        }
        _ => Err(Error::Unsupported(format!("no closed form for N = {n}"))),
    }
}

/// Long-time limit of `e^{i x(t)}` for the compact freezing dynamics:
/// `Z_1 ζ^j`, `ζ = e^{2πi/N}`, with `Z_1 = e^{i(Σx - π(N-1))/N}`.
pub fn limit_configuration_compact_a(x0: &[f64]) -> Vec<Complex64> {
    let n = x0.len() as f64;
    let base = (x0.iter().sum::<f64>() - PI * (n - 1.0)) / n;
    (0..x0.len())
        .map(|j| Complex64::from_polar(1.0, base + 2.0 * PI * j as f64 / n))
        .collect()
}

/// Largest relative deviation of the eigenfunction identities
/// `f_l(x(t)) = e^{λ_l t} f_l(x0)` along the integrated trajectory, over
/// `l = 1..=N` and the requested times. BC models need `table`.
pub fn ode_elem_invariant_check(
    model: &ModelSpec,
    x0: &[f64],
    times: &[f64],
    cfg: &OdeConfig,
    table: Option<&CoeffTable>,
) -> Result<f64> {
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let step = times
        .iter()
        .filter(|&&t| t > 0.0)
        .fold(t_end, |m, &t| m.min(t));
    let run = integrate_freezing_run(model, x0, t_end, &OdeConfig { record_step: Some(step / 64.0), ..cfg.clone() })?;
    let path = &run.path;
    let n = model.n();
    let observe = |x: &[f64]| -> Result<Vec<Complex64>> {
        Ok(match model.kind() {
            Kind::CompactA => circle_elem_sym_all(x),
            Kind::NoncompactA => trig_elem_sym_all(x)?.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            Kind::NoncompactBC => {
                let table = table.ok_or_else(|| Error::Parameter("BC check needs a coefficient table".into()))?;
                (0..=n.min(table.n_max))
                    .map(|l| table.eigenfunction(l, x).map(|v| Complex64::new(v, 0.0)))
                    .collect::<Result<_>>()?
            }
        })
    };
    let eigen = |l: usize| -> Result<f64> {
        match (model.kind(), table) {
            (Kind::NoncompactBC, Some(t)) => Ok(t.eigenvalue(l)),
            _ => eigenvalue_elem(model, l),
        }
    };
    let start = observe(&path.states[0])?;
    let mut worst = 0.0f64;
    for &t in times {
        let i = path
            .times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
            .ok_or_else(|| Error::Parameter(format!("time {t} not on the record grid")))?;
        let now = observe(&path.states[i])?;
        for l in 1..start.len() {
            let predicted = start[l] * (eigen(l)? * t).exp();
            let scale = predicted.norm().max(1e-300);
            worst = worst.max((now[l] - predicted).norm() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{equispaced, Coupling};

    fn frozen(kind: Kind, n: usize) -> ModelSpec {
        match kind {
            Kind::CompactA => ModelSpec::compact_a(n, Coupling::Infinite).unwrap(),
            Kind::NoncompactA => ModelSpec::noncompact_a(n, Coupling::Infinite).unwrap(),
            Kind::NoncompactBC => ModelSpec::noncompact_bc(n, 2.0, 2.0, Coupling::Infinite).unwrap(),
        }
    }

    #[test]
    fn equispaced_compact_state_is_stationary() {
        let m = frozen(Kind::CompactA, 4);
        let x0 = equispaced(4, 0.7);
        let p = integrate_freezing(&m, &x0, 2.0, &OdeConfig::default()).unwrap();
        for x in &p.states {
            for (a, b) in x.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_coupling_is_rejected() {
        let m = ModelSpec::noncompact_a(2, Coupling::Finite(1.0)).unwrap();
        assert!(matches!(
            integrate_freezing(&m, &[1.0, -1.0], 1.0, &OdeConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn two_particles_from_origin() {
        let m = frozen(Kind::NoncompactA, 2);
        let run = integrate_freezing_run(&m, &[0.0, 0.0], 2.0, &OdeConfig::default()).unwrap();
        assert!(run.sensitivity.unwrap() < 1e-7);
        for (t, x) in run.path.times.iter().zip(&run.path.states) {
            if *t >= 0.1 {
                let exact = closed_form_noncompact_a(2, *t, Convention::Published).unwrap();
                assert!((x[0] - exact[0]).abs() < 1e-6 && (x[1] - exact[1]).abs() < 1e-6, "t={t}");
            }
        }
    }

    #[test]
    fn closed_forms() {
        let x = closed_form_noncompact_a(2, 1.0, Convention::Published).unwrap();
        assert!((x[0] - 1.657454454153077).abs() < 1e-12);
        assert_eq!(closed_form_noncompact_a(2, 0.0, Convention::Published).unwrap(), vec![0.0, -0.0]);
        let x = closed_form_noncompact_a(3, 1.0, Convention::Corrected).unwrap();
        assert!((x[0].exp() + (-x[0]).exp() + 1.0 - 3.0 * 2f64.exp()).abs() < 1e-12);
        assert!(matches!(
            closed_form_noncompact_a(3, 0.2, Convention::Published),
            Err(Error::Domain(_))
        ));
        assert!(closed_form_noncompact_a(4, 1.0, Convention::Corrected).is_err());
    }

    #[test]
    fn coordinate_sum_is_conserved() {
        let m = frozen(Kind::NoncompactA, 4);
        let x0 = [1.3, 0.2, -0.4, -2.0];
        let p = integrate_freezing(&m, &x0, 1.0, &OdeConfig::default()).unwrap();
        let s0: f64 = x0.iter().sum();
        for x in &p.states {
            assert!((x.iter().sum::<f64>() - s0).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_configuration() {
        let z = limit_configuration_compact_a(&[0.0, PI, PI]);
        assert!((z[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let e = crate::symfunc::elem_sym_all(&z);
        assert!(e[1].norm() < 1e-14 && e[2].norm() < 1e-14);
        assert!((e[3] - z[0].powu(3)).norm() < 1e-14);
    }

    #[test]
    fn compact_trajectory_approaches_limit() {
        let m = frozen(Kind::CompactA, 3);
        let x0 = [0.1, 0.5, 2.0];
        let p = integrate_freezing(&m, &x0, 20.0, &OdeConfig::default()).unwrap();
        let last = p.states.last().unwrap();
        let limit = limit_configuration_compact_a(&x0);
        for v in last {
            let z = Complex64::from_polar(1.0, *v);
            assert!(limit.iter().any(|w| (w - z).norm() < 1e-6));
        }
    }

    #[test]
    fn type_a_invariants() {
        let a = frozen(Kind::NoncompactA, 3);
        let d = ode_elem_invariant_check(&a, &[2.0, 0.0, -2.0], &[0.25, 0.5, 1.0], &OdeConfig::default(), None).unwrap();
        assert!(d < 1e-6, "{d}");
        let c = frozen(Kind::CompactA, 3);
        let d = ode_elem_invariant_check(&c, &[0.3, 1.1, 4.0], &[0.25, 0.5, 1.0], &OdeConfig::default(), None).unwrap();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn bc_invariants() {
        let m = frozen(Kind::NoncompactBC, 2);
        let table = crate::generator::jacobi_coeffs(2, 2.0, 2.0, Coupling::Finite(1.0), 2).unwrap();
        let d = ode_elem_invariant_check(&m, &[2.0, 1.0], &[0.25, 0.5, 1.0], &OdeConfig::default(), Some(&table)).unwrap();
        assert!(d < 1e-5, "{d}");
    }
}
