//! Euler-Maruyama integration of the renormalized SDEs with reflection by
//! chamber folding, plus deterministic ensemble execution.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::models::{drift_into, fold_in_place, min_separation, Kind, ModelSpec};
use crate::rng::PathNoise;
use crate::stats::{McEstimate, Moments};

/// Paths per reduction chunk. Chunk boundaries do not depend on the worker
/// count, which keeps ensemble output identical for any thread pool.
const CHUNK: usize = 256;

const MAX_RECORDED: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig {
    /// Base step; the effective step is `t_end / ceil(t_end / dt)`.
    pub dt: f64,
    pub t_end: f64,
    /// Number of bridge pieces a rejected step is split into.
    pub substep_factor: usize,
    pub max_substep_depth: u32,
    pub seed: u64,
    pub record_stride: usize,
    /// Forced dyadic refinement levels applied to every base step. Level 1
    /// halves the step while keeping the driving Brownian path fixed.
    pub refine: u32,
    /// A step is split when `max|drift| * h` exceeds this fraction of the
    /// smallest gap.
    pub gap_fraction: f64,
    /// A step is also split when `max|drift| * h` exceeds this multiple of
    /// the square root of the smallest gap. This bounds the weak error near
    /// collisions at a cost that stays finite as the gap shrinks.
    pub drift_accuracy: f64,
    pub separation_floor: f64,
    /// Offset applied to starting points that touch the chamber walls.
    pub boundary_offset: f64,
}

impl SdeConfig {
    pub fn new(dt: f64, t_end: f64, seed: u64) -> Result<Self> {
        let mut cfg = Self {
            dt,
            t_end,
            substep_factor: 2,
            max_substep_depth: 20,
            seed,
            record_stride: 1,
            refine: 0,
            gap_fraction: 0.5,
            drift_accuracy: 5e-3,
            separation_floor: crate::models::DEFAULT_SEPARATION_FLOOR,
            boundary_offset: 1e-2,
        };
        cfg.record_stride = cfg.num_steps().div_ceil(MAX_RECORDED - 1).max(1);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.t_end > 0.0 && self.dt > self.t_end {
            return bad(format!("dt = {} exceeds t_end = {}", self.dt, self.t_end));
        }
        if self.substep_factor < 2 {
            return bad("substep_factor must be at least 2".into());
        }
        if self.max_substep_depth > 40 {
            return bad("max_substep_depth above 40".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive".into());
        }
        if !(self.gap_fraction > 0.0 && self.drift_accuracy > 0.0 && self.boundary_offset > 0.0) {
            return bad("gap_fraction, drift_accuracy and boundary_offset must be positive".into());
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        if self.t_end == 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
        }
    }

    pub fn step_size(&self) -> f64 {
        match self.num_steps() {
            0 => 0.0,
            n => self.t_end / n as f64,
        }
    }

    /// Step index of `t` on the integration grid.
    pub fn grid_index(&self, t: f64) -> Result<usize> {
        let n = self.num_steps();
        if t == 0.0 {
            return Ok(0);
        }
        let h = self.step_size();
        let idx = (t / h).round();
        if n == 0 || (idx * h - t).abs() > 1e-9 * t.max(1.0) || idx as usize > n {
            return Err(Error::Parameter(format!(
                "time {t} is not on the step grid (h = {h}, t_end = {})",
                self.t_end
            )));
        }
        Ok(idx as usize)
    }
}

/// One simulated trajectory. States are stored as produced by the integrator
/// (before folding); apply [`crate::models::chamber_fold`] for chamber coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub model: ModelSpec,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub seed: u64,
    pub dt: f64,
    pub stream: u64,
    /// Extra sub-steps taken by adaptive refinement.
    pub substeps: u64,
}

impl PathSample {
    pub fn to_csv(&self) -> String {
        let n = self.model.n();
        let mut out = String::from("t");
        for j in 1..=n {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&fmt_f64(*t));
            for v in x {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Moves starting points off the chamber walls by equally spaced offsets of
/// size `eps`. Interior points with all gaps at least `eps` are only folded.
pub fn regularize_start(model: &ModelSpec, x0: &[f64], eps: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    fold_in_place(model.kind(), &mut x);
    if min_separation(model, &x) >= eps {
        return x;
    }
    let n = x.len();
    let centre = (n as f64 - 1.0) / 2.0;
    for (j, v) in x.iter_mut().enumerate() {
        let jf = j as f64;
        *v += eps
            * match model.kind() {
                Kind::CompactA => jf - centre,
                Kind::NoncompactA => centre - jf,
                Kind::NoncompactBC => (n - j) as f64,
            };
    }
    x
}

/// Smallest gap of `y` measured in the chamber ordering of the folded state
/// it came from; negative when the step crossed a wall.
pub(crate) fn signed_min_gap(kind: Kind, y: &[f64]) -> f64 {
    let n = y.len();
    match kind {
        Kind::CompactA => {
            let inner = y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            inner.min(y[0] + 2.0 * std::f64::consts::PI - y[n - 1])
        }
        Kind::NoncompactA => y.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min),
        Kind::NoncompactBC => y
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(y[n - 1], f64::min),
    }
}

struct Stepper<'a> {
    model: &'a ModelSpec,
    cfg: &'a SdeConfig,
    scale: f64,
    drift: Vec<f64>,
    trial: Vec<f64>,
    substeps: u64,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a ModelSpec, cfg: &'a SdeConfig) -> Result<Self> {
        let scale = model.noise_scale().ok_or_else(|| {
            Error::Unsupported("kappa = inf is deterministic; integrate it with the ode module".into())
        })?;
        Ok(Self {
            model,
            cfg,
            scale,
            drift: vec![0.0; model.n()],
            trial: vec![0.0; model.n()],
            substeps: 0,
        })
    }

    /// Advances `x` by `h` driven by the Brownian increment `dw`.
    fn advance(
        &mut self,
        x: &mut [f64],
        h: f64,
        dw: &[f64],
        depth: u32,
        noise: &mut PathNoise,
        t: f64,
    ) -> Result<()> {
        fold_in_place(self.model.kind(), x);
        if depth >= self.cfg.refine {
            let at_cap = depth >= self.cfg.refine + self.cfg.max_substep_depth;
            match self.try_step(x, h, dw, at_cap)? {
                Outcome::Accepted => return Ok(()),
                Outcome::Singular if at_cap => {
                    return Err(Error::StepFailure {
                        time: t,
                        state: x.to_vec(),
                    })
                }
                _ => {}
            }
        }
        // Brownian bridge: fresh pieces conditioned on their sum being dw.
        let m = self.cfg.substep_factor;
        let n = x.len();
        let sub_h = h / m as f64;
        let sd = sub_h.sqrt();
        let mut pieces: Vec<f64> = (0..m * n).map(|_| sd * noise.aux_normal()).collect();
        for j in 0..n {
            let total: f64 = (0..m).map(|i| pieces[i * n + j]).sum();
            let shift = (total - dw[j]) / m as f64;
            (0..m).for_each(|i| pieces[i * n + j] -= shift);
        }
        for (i, piece) in pieces.chunks_exact(n).enumerate() {
            self.substeps += 1;
            self.advance(x, sub_h, piece, depth + 1, noise, t + i as f64 * sub_h)?;
        }
        Ok(())
    }

    /// Attempts a single Euler step from the folded state `x`. With `force`
    /// the gap tests are skipped and only a singular drift is refused.
    fn try_step(&mut self, x: &mut [f64], h: f64, dw: &[f64], force: bool) -> Result<Outcome> {
        let gap = min_separation(self.model, x);
        match drift_into(self.model, x, self.cfg.separation_floor, &mut self.drift) {
            Ok(()) => {}
            Err(Error::Singular { .. }) => return Ok(Outcome::Singular),
            Err(e) => return Err(e),
        }
        let b_max = self.drift.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let limit = (self.cfg.gap_fraction * gap).min(self.cfg.drift_accuracy * gap.sqrt());
        if !force && b_max * h > limit {
            return Ok(Outcome::Refine);
        }
        for j in 0..x.len() {
            self.trial[j] = x[j] + self.scale * dw[j] + self.drift[j] * h;
        }
        if !force && signed_min_gap(self.model.kind(), &self.trial) < 0.5 * gap {
            return Ok(Outcome::Refine);
        }
        x.copy_from_slice(&self.trial);
        Ok(Outcome::Accepted)
    }
}

enum Outcome {
    Accepted,
    Refine,
    Singular,
}

/// One Euler-Maruyama step from `x` with standard normal `noise`.
///
/// `aux` supplies the extra noise consumed when the step has to be refined.
pub fn em_step(
    model: &ModelSpec,
    x: &[f64],
    dt: f64,
    noise: &[f64],
    cfg: &SdeConfig,
    aux: &mut PathNoise,
) -> Result<Vec<f64>> {
    let mut stepper = Stepper::new(model, cfg)?;
    let dw: Vec<f64> = noise.iter().map(|z| z * dt.sqrt()).collect();
    let mut state = x.to_vec();
    stepper.advance(&mut state, dt, &dw, 0, aux, 0.0)?;
    Ok(state)
}

/// Runs one path, calling `visit(step_index, state)` after every base step
/// (and once with index 0 for the start). Stops after `last_step`.
fn drive<F>(
    model: &ModelSpec,
    x0: &[f64],
    cfg: &SdeConfig,
    stream: u64,
    last_step: usize,
    mut visit: F,
) -> Result<u64>
where
    F: FnMut(usize, &[f64]),
{
    let mut stepper = Stepper::new(model, cfg)?;
    let n = model.n();
    let h = cfg.step_size();
    let sqrt_h = h.sqrt();
    let mut noise = PathNoise::new(cfg.seed, stream, n);
    let mut x = regularize_start(model, x0, cfg.boundary_offset);
    let mut z = vec![0.0; n];
    visit(0, &x);
    for step in 0..last_step {
        noise.step_normals(step as u64, &mut z);
        z.iter_mut().for_each(|v| *v *= sqrt_h);
        stepper.advance(&mut x, h, &z, 0, &mut noise, step as f64 * h)?;
        visit(step + 1, &x);
    }
    Ok(stepper.substeps)
}

/// Simulates path `stream` on `[0, cfg.t_end]`.
pub fn simulate_path(
    model: &ModelSpec,
    x0: &[f64],
    cfg: &SdeConfig,
    stream: u64,
) -> Result<PathSample> {
    cfg.validate()?;
    check_start(model, x0)?;
    let n_steps = cfg.num_steps();
    let h = cfg.step_size();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let substeps = drive(model, x0, cfg, stream, n_steps, |i, x| {
        if i % cfg.record_stride == 0 || i == n_steps {
            times.push(i as f64 * h);
            states.push(x.to_vec());
        }
    })?;
    if let Some(t) = times.last_mut() {
        if n_steps > 0 {
            *t = cfg.t_end;
        }
    }
    Ok(PathSample {
        model: *model,
        times,
        states,
        seed: cfg.seed,
        dt: h,
        stream,
        substeps,
    })
}

fn check_start(model: &ModelSpec, x0: &[f64]) -> Result<()> {
    if x0.len() != model.n() {
        return Err(Error::Parameter(format!(
            "starting point has {} coordinates, model has N = {}",
            x0.len(),
            model.n()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("starting point must be finite".into()));
    }
    Ok(())
}

/// Monte Carlo estimates of vector-valued observables at the requested times.
///
/// `observable` receives folded states and must always return the same
/// number of values. The result is indexed `[time][observable]` and depends
/// only on `(cfg.seed, n_paths)`, not on the execution mode or worker count.
pub fn simulate_ensemble<F>(
    model: &ModelSpec,
    x0: &[f64],
    cfg: &SdeConfig,
    n_paths: usize,
    times: &[f64],
    exec: Execution,
    observable: F,
) -> Result<Vec<Vec<McEstimate>>>
where
    F: Fn(&[f64]) -> Vec<Complex64> + Sync,
{
    cfg.validate()?;
    check_start(model, x0)?;
    if n_paths == 0 {
        return Err(Error::Parameter("n_paths must be positive".into()));
    }
    let indices = times
        .iter()
        .map(|&t| cfg.grid_index(t))
        .collect::<Result<Vec<_>>>()?;
    let last = indices.iter().copied().max().unwrap_or(0);
    let n_obs = observable(&regularize_start(model, x0, cfg.boundary_offset)).len();

    let run_chunk = |chunk: usize| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); times.len() * n_obs];
        let mut folded = vec![0.0; model.n()];
        let start = chunk * CHUNK;
        for stream in start..(start + CHUNK).min(n_paths) {
            drive(model, x0, cfg, stream as u64, last, |step, x| {
                if !indices.contains(&step) {
                    return;
                }
                folded.copy_from_slice(x);
                fold_in_place(model.kind(), &mut folded);
                let values = observable(&folded);
                assert_eq!(values.len(), n_obs, "observable changed its output length");
                for (ti, _) in indices.iter().enumerate().filter(|(_, &s)| s == step) {
                    for (k, v) in values.iter().enumerate() {
                        acc[ti * n_obs + k].push(*v);
                    }
                }
            })
            .map_err(|e| Error::PathFailure {
                stream: stream as u64,
                source: Box::new(e),
            })?;
        }
        Ok(acc)
    };

    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<Vec<Moments>> = match exec {
        Execution::Sequential => (0..n_chunks).map(run_chunk).collect::<Result<_>>()?,
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n_chunks)
                .into_par_iter()
                .map(run_chunk)
                .collect::<Result<_>>()?
        }
    };

    let mut total = vec![Moments::default(); times.len() * n_obs];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t = t.merge(p);
        }
    }
    Ok(total
        .chunks(n_obs.max(1))
        .take(times.len())
        .map(|row| row.iter().map(Moments::estimate).collect())
        .collect())
}

/// CSV rows `t,observable,mean_re,mean_im,stderr,n_paths`.
pub fn ensemble_csv(times: &[f64], names: &[String], estimates: &[Vec<McEstimate>]) -> String {
    let mut out = String::from("t,observable,mean_re,mean_im,stderr,n_paths\n");
    for (t, row) in times.iter().zip(estimates) {
        for (name, e) in names.iter().zip(row) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(*t),
                name,
                fmt_f64(e.mean.re),
                fmt_f64(e.mean.im),
                fmt_f64(e.stderr),
                e.n_paths
            ));
        }
    }
    out
}
