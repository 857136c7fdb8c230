//! Command-line front end: argument parsing, config files and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hop_core::format::fmt_f64;
use hop_core::generator::jacobi_coeffs;
use hop_core::models::{chamber_fold, Kind};
use hop_core::ode::{integrate_freezing_run, OdeConfig};
use hop_core::sde::{ensemble_csv, simulate_ensemble, simulate_path};
use hop_core::symfunc::{circle_elem_sym_all, cosh_elem_sym_all, elem_sym_all, poly_from_real_roots};
use hop_core::verify::{
    centered_equispaced, check_stationary_compact_a, diff_polynomial_prediction, run_check, CheckReport, CheckRequest,
    McParams, BIAS_BUDGET, CHECKS,
};
use hop_core::{Convention, Coupling, Error, Execution, McEstimate, ModelSpec, SdeConfig};
use num_complex::Complex64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "HOP_SIM_SEED";
const DEFAULT_SEED: u64 = 1;
const SUBCOMMANDS: [&str; 6] = ["simulate", "freeze", "verify", "coeffs", "detpoly", "stationary"];

#[derive(Debug, Parser)]
#[command(name = "hop-sim", version, about = "Simulate and verify Heckman-Opdam processes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// compactA, noncompactA or noncompactBC.
    #[arg(long, global = true, default_value = "compactA")]
    model: String,
    #[arg(long = "N", global = true, default_value_t = 3)]
    n: usize,
    /// Coupling: a positive float or "inf". Defaults to --k for type A.
    #[arg(long, global = true)]
    kappa: Option<String>,
    /// Type A multiplicity.
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Comma separated coordinates, "zero" or "equispaced".
    #[arg(long, global = true, default_value = "zero")]
    x0: String,
    #[arg(long, global = true, default_value_t = 1.0)]
    t: f64,
    /// Comma separated observation times; defaults to --t.
    #[arg(long, global = true)]
    times: Option<String>,
    #[arg(long, global = true, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, global = true, default_value_t = 10_000)]
    paths: usize,
    /// Falls back to HOP_SIM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "published")]
    convention: String,
    /// Comma separated polynomial arguments y.
    #[arg(long, global = true, default_value = "0.5,1,2")]
    y: String,
    /// Line-oriented key=value file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path (--paths 1) or ensemble moments of e_l.
    Simulate {
        /// Forced dyadic refinement levels of every step.
        #[arg(long, default_value_t = 0)]
        refine: u32,
    },
    /// Integrate the kappa = inf dynamics.
    Freeze {
        /// Spacing of recorded states.
        #[arg(long)]
        record_step: Option<f64>,
    },
    /// Run a named check and report predicted against observed values.
    Verify {
        #[arg(long, required_unless_present = "list")]
        check: Option<String>,
        /// List the available checks.
        #[arg(long)]
        list: bool,
        /// Comma separated eigenfunction indices.
        #[arg(long)]
        ls: Option<String>,
        #[arg(long, default_value_t = 10.0)]
        t_long: f64,
        /// Second coupling for checks comparing two couplings.
        #[arg(long, default_value = "4")]
        kappa_other: String,
        #[arg(long, default_value_t = 0)]
        refine: u32,
        #[arg(long, default_value_t = hop_core::generator::DEFAULT_STEP)]
        h: f64,
    },
    /// BC generator coefficients c_{n,l}.
    Coeffs {
        #[arg(long, default_value_t = 3)]
        nmax: usize,
    },
    /// Tabulate P_{t,N,k,x}(y) (type A) or D_{t,x}(y) (BC).
    Detpoly,
    /// Long-run determinant check of a compact model.
    Stationary {
        #[arg(long, default_value_t = 10.0)]
        t_long: f64,
        #[arg(long, default_value_t = BIAS_BUDGET)]
        budget: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Record(_) => Failure::Usage(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Usage(msg.into()))
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Data goes to `out` unless `--out` names a file;
/// tables and diagnostics go to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            return EXIT_USAGE;
        }
        Err(Failure::Internal(m)) => {
            let _ = writeln!(err, "error: {m}");
            return EXIT_INTERNAL;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}\n\n{}", <Cli as clap::CommandFactory>::command().render_usage());
            EXIT_USAGE
        }
        Err(Failure::Internal(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_INTERNAL
        }
    }
}

/// Appends `--key=value` for every config entry whose key is not already on
/// the command line. A `command` entry supplies the subcommand when none is
/// given; `key=true` becomes a bare switch.
fn merge_config(argv: Vec<OsString>) -> Res<Vec<OsString>> {
    let pos = argv.iter().position(|a| a == "--config");
    let path = match pos {
        Some(i) => match argv.get(i + 1) {
            Some(p) => PathBuf::from(p),
            None => return usage("--config needs a file"),
        },
        None => match argv.iter().find_map(|a| a.to_str().and_then(|s| s.strip_prefix("--config="))) {
            Some(p) => PathBuf::from(p),
            None => return Ok(argv),
        },
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let given: Vec<String> = argv
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut merged = argv.clone();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!("{}:{}: expected key=value", path.display(), lineno + 1));
        };
        let key = key.trim();
        let value = value.trim();
        if key == "command" {
            if !argv.iter().skip(1).any(|a| SUBCOMMANDS.iter().any(|c| a == *c)) {
                merged.insert(1.min(merged.len()), value.into());
            }
            continue;
        }
        if given.iter().any(|g| g == key) {
            continue;
        }
        if value.eq_ignore_ascii_case("true") {
            merged.push(format!("--{key}").into());
        } else {
            merged.push(format!("--{key}={value}").into());
        }
    }
    Ok(merged)
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Res<i32> {
    if let Command::Verify { list: true, .. } = cli.command {
        for (name, what) in CHECKS {
            writeln!(out, "{name:<14} {what}")?;
        }
        return Ok(EXIT_OK);
    }
    let threads = match cli.global.threads {
        Some(0) => return usage("--threads must be positive"),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let (code, o, e) = with_pool(threads, || {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = execute(cli, threads, &mut o, &mut e);
        Ok((code, o, e))
    })?;
    err.write_all(&e)?;
    out.write_all(&o)?;
    code
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> Res<R> + Send) -> Res<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Internal(e.to_string()))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_pool<R>(_threads: usize, f: impl FnOnce() -> Res<R>) -> Res<R> {
    f()
}

fn execution(threads: usize) -> Execution {
    #[cfg(feature = "parallel")]
    if threads > 1 {
        return Execution::Parallel;
    }
    let _ = threads;
    Execution::Sequential
}

struct Setup {
    model: ModelSpec,
    x0: Vec<f64>,
    times: Vec<f64>,
    ys: Vec<f64>,
    seed: u64,
    convention: Convention,
}

fn parse_list(s: &str, what: &str) -> Res<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad {what} value '{v}'"))))
        .collect()
}

fn parse_coupling(s: &str) -> Res<Coupling> {
    s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))
}

fn setup(g: &Global) -> Res<Setup> {
    let kind: Kind = g.model.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let coupling = match (kind, &g.kappa, &g.k) {
        (_, Some(_), Some(_)) if kind == Kind::NoncompactBC => return usage("--k applies to type A models only"),
        (_, Some(a), Some(b)) if parse_coupling(a)? != parse_coupling(b)? => {
            return usage("--k and --kappa disagree")
        }
        (_, Some(a), _) | (_, None, Some(a)) => parse_coupling(a)?,
        (_, None, None) => Coupling::Finite(1.0),
    };
    let model = match kind {
        Kind::CompactA => ModelSpec::compact_a(g.n, coupling)?,
        Kind::NoncompactA => ModelSpec::noncompact_a(g.n, coupling)?,
        Kind::NoncompactBC => {
            let (Some(p), Some(q)) = (g.p, g.q) else {
                return usage("noncompactBC needs --p and --q");
            };
            ModelSpec::noncompact_bc(g.n, p, q, coupling)?
        }
    };
    let x0 = match g.x0.trim() {
        "zero" => vec![0.0; g.n],
        "equispaced" => match kind {
            Kind::CompactA => centered_equispaced(g.n),
            Kind::NoncompactA => (0..g.n).map(|j| (g.n as f64 - 1.0) / 2.0 - j as f64).collect(),
            Kind::NoncompactBC => (0..g.n).map(|j| (g.n - j) as f64).collect(),
        },
        list => {
            let v = parse_list(list, "x0")?;
            if v.len() != g.n {
                return usage(format!("--x0 has {} coordinates, expected {}", v.len(), g.n));
            }
            v
        }
    };
    let times = match &g.times {
        Some(s) => parse_list(s, "times")?,
        None => vec![g.t],
    };
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return usage("times must be finite and non-negative");
    }
    let seed = match g.seed {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("{SEED_ENV} is not an unsigned integer: '{v}'")))?,
            Err(_) => DEFAULT_SEED,
        },
    };
    let convention = g.convention.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    Ok(Setup { model, x0, times, ys: parse_list(&g.y, "y")?, seed, convention })
}

fn emit(g: &Global, text: &str, out: &mut dyn Write) -> Res<()> {
    match &g.out {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cli: &Cli, threads: usize, out: &mut dyn Write, err: &mut dyn Write) -> Res<i32> {
    let g = &cli.global;
    let s = setup(g)?;
    let t_end = s.times.iter().copied().fold(0.0, f64::max);
    let mc = McParams { exec: execution(threads), ..McParams::new(g.paths, g.dt, s.seed) };
    match &cli.command {
        Command::Simulate { refine } => {
            let mut cfg: SdeConfig = mc.sde_config(t_end)?;
            cfg.refine = *refine;
            if g.paths == 0 {
                return usage("--paths must be positive");
            }
            if g.paths == 1 {
                let path = simulate_path(&s.model, &s.x0, &cfg, 0)?;
                let text = match g.format.unwrap_or(Format::Csv) {
                    Format::Csv => path.to_csv(),
                    Format::Json => path_json(&path.times, &path.states),
                };
                emit(g, &text, out)?;
                return Ok(EXIT_OK);
            }
            let kind = s.model.kind();
            let n = s.model.n();
            let est = simulate_ensemble(&s.model, &s.x0, &cfg, g.paths, &s.times, mc.exec, |x| elementary(kind, x, n))?;
            let names: Vec<String> = (1..=n).map(|l| format!("e{l}")).collect();
            let text = match g.format.unwrap_or(Format::Csv) {
                Format::Csv => ensemble_csv(&s.times, &names, &est),
                Format::Json => ensemble_json(&s.times, &names, &est),
            };
            emit(g, &text, out)?;
            Ok(EXIT_OK)
        }
        Command::Freeze { record_step } => {
            if !s.model.kappa().is_infinite() && g.kappa.is_some() {
                return usage("freeze integrates kappa = inf; drop --kappa or pass --kappa inf");
            }
            let model = s.model.with_kappa(Coupling::Infinite)?;
            let cfg = OdeConfig { record_step: *record_step, ..OdeConfig::default() };
            let run = integrate_freezing_run(&model, &s.x0, t_end, &cfg)?;
            if let Some(sens) = run.sensitivity {
                writeln!(err, "boundary start: offset {:e}, sensitivity {sens:e}", run.epsilon.unwrap_or(0.0))?;
            }
            let states: Vec<Vec<f64>> = run.path.states.iter().map(|x| chamber_fold(&model, x)).collect();
            let text = match g.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let folded = hop_core::PathSample { states: states.clone(), ..run.path.clone() };
                    folded.to_csv()
                }
                Format::Json => path_json(&run.path.times, &states),
            };
            emit(g, &text, out)?;
            Ok(EXIT_OK)
        }
        Command::Verify { check, ls, t_long, kappa_other, refine, h, .. } => {
            let name = check.as_deref().unwrap_or_default();
            if !CHECKS.iter().any(|(c, _)| *c == name) {
                return usage(format!("unknown check '{name}'; see verify --list"));
            }
            let mut req = CheckRequest::new(s.model, s.x0.clone(), McParams { refine: *refine, ..mc });
            if let Some(ls) = ls {
                req.ls = ls
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| Failure::Usage(format!("bad --ls value '{v}'"))))
                    .collect::<Res<_>>()?;
            }
            req.times = s.times.clone();
            req.y_values = s.ys.clone();
            req.t_long = *t_long;
            req.convention = s.convention;
            req.kappa_other = parse_coupling(kappa_other)?;
            req.h = *h;
            let report = run_check(name, &req)?;
            finish_report(g, &report, out, err)
        }
        Command::Coeffs { nmax } => {
            let (Some(p), Some(q)) = (g.p, g.q) else {
                return usage("coeffs needs --p and --q");
            };
            let kappa = match (&g.kappa, &g.k) {
                (Some(a), _) | (None, Some(a)) => parse_coupling(a)?,
                (None, None) => Coupling::Finite(1.0),
            };
            let table = jacobi_coeffs(g.n, p, q, kappa, *nmax)?;
            emit(g, &(table.to_json() + "\n"), out)?;
            Ok(EXIT_OK)
        }
        Command::Detpoly => {
            let text = detpoly(&s, g.format.unwrap_or(Format::Csv))?;
            emit(g, &text, out)?;
            Ok(EXIT_OK)
        }
        Command::Stationary { t_long, budget } => {
            if s.model.kind() != Kind::CompactA {
                return usage("stationary needs --model compactA");
            }
            let report = check_stationary_compact_a(&s.model, &s.x0, &s.ys, *t_long, &mc, s.convention, *budget)?;
            finish_report(g, &report, out, err)
        }
    }
}

fn finish_report(g: &Global, report: &CheckReport, out: &mut dyn Write, err: &mut dyn Write) -> Res<i32> {
    write!(err, "{}", report.table())?;
    match g.format.unwrap_or(Format::Json) {
        Format::Json => emit(g, &(report.to_json() + "\n"), out)?,
        Format::Csv => emit(g, &report_csv(report), out)?,
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn report_csv(r: &CheckReport) -> String {
    let mut s = String::from("label,t,predicted_re,predicted_im,mean_re,mean_im,stderr,n_paths,z\n");
    for row in &r.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.label,
            fmt_f64(row.t),
            fmt_f64(row.predicted.re),
            fmt_f64(row.predicted.im),
            fmt_f64(row.mean.re),
            fmt_f64(row.mean.im),
            fmt_f64(row.stderr),
            row.n_paths,
            fmt_f64(row.z)
        ));
    }
    s
}

fn elementary(kind: Kind, x: &[f64], n: usize) -> Vec<Complex64> {
    let e = match kind {
        Kind::CompactA => circle_elem_sym_all(x),
        Kind::NoncompactA => {
            let z: Vec<Complex64> = x.iter().map(|v| Complex64::new(v.exp(), 0.0)).collect();
            elem_sym_all(&z)
        }
        Kind::NoncompactBC => match cosh_elem_sym_all(x) {
            Ok(v) => v.into_iter().map(|c| Complex64::new(c, 0.0)).collect(),
            Err(_) => vec![Complex64::new(f64::NAN, 0.0); n + 1],
        },
    };
    e[1..].to_vec()
}

fn detpoly(s: &Setup, format: Format) -> Res<String> {
    let mut rows: Vec<(f64, f64, Complex64)> = Vec::new();
    match s.model.kind() {
        Kind::NoncompactBC => {
            let model = s.model.with_kappa(Coupling::Infinite)?;
            for &t in &s.times {
                let end = if t == 0.0 {
                    s.x0.clone()
                } else {
                    let cfg = OdeConfig { record_step: Some(t), ..OdeConfig::default() };
                    let run = integrate_freezing_run(&model, &s.x0, t, &cfg)?;
                    run.path.states.last().cloned().unwrap_or_default()
                };
                let roots: Vec<f64> = end.iter().map(|v| v.cosh()).collect();
                let poly = poly_from_real_roots(&roots);
                for &y in &s.ys {
                    rows.push((t, y, poly.eval(Complex64::new(y, 0.0))));
                }
            }
        }
        _ => {
            for &t in &s.times {
                for &y in &s.ys {
                    rows.push((t, y, diff_polynomial_prediction(&s.model, &s.x0, t, y, s.convention)?));
                }
            }
        }
    }
    Ok(match format {
        Format::Csv => {
            let mut text = String::from("t,y,value_re,value_im\n");
            for (t, y, v) in rows {
                text.push_str(&format!("{},{},{},{}\n", fmt_f64(t), fmt_f64(y), fmt_f64(v.re), fmt_f64(v.im)));
            }
            text
        }
        Format::Json => {
            let value = serde_json::json!({
                "t": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "y": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "value_re": rows.iter().map(|r| r.2.re).collect::<Vec<_>>(),
                "value_im": rows.iter().map(|r| r.2.im).collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&value).expect("json") + "\n"
        }
    })
}

fn path_json(times: &[f64], states: &[Vec<f64>]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "times": times, "states": states })).expect("json") + "\n"
}

fn ensemble_json(times: &[f64], names: &[String], est: &[Vec<McEstimate>]) -> String {
    let obs: Vec<serde_json::Value> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            serde_json::json!({
                "name": name,
                "mean_re": est.iter().map(|e| e[k].mean.re).collect::<Vec<_>>(),
                "mean_im": est.iter().map(|e| e[k].mean.im).collect::<Vec<_>>(),
                "stderr": est.iter().map(|e| e[k].stderr).collect::<Vec<_>>(),
            })
        })
        .collect();
    let n_paths = est.first().and_then(|e| e.first()).map_or(0, |e| e.n_paths);
    serde_json::to_string_pretty(&serde_json::json!({ "times": times, "n_paths": n_paths, "observables": obs }))
        .expect("json")
        + "\n"
}
