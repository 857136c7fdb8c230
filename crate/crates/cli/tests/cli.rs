use std::path::Path;
use std::process::{Command, Output};

use hop_sim::{run, EXIT_CHECK_FAILED, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hop-sim"));
    c.env_remove(hop_sim::SEED_ENV);
    c
}

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("hop-sim").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn floats(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn freeze_two_particles_from_origin() {
    let (code, out, _) = call(&["freeze", "--model", "noncompactA", "--N", "2", "--x0", "zero", "--t", "2"]);
    assert_eq!(code, EXIT_OK);
    let last: Vec<f64> = out.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let expected = (2.0f64).exp().acosh();
    assert!((last[0] - 2.0).abs() < 1e-12);
    assert!((last[1] - expected).abs() < 1e-6, "{}", last[1]);
    assert!((last[2] + expected).abs() < 1e-6, "{}", last[2]);
}

#[test]
fn coeffs_do_not_depend_on_kappa() {
    let args = |k: &'static str| ["coeffs", "--N", "3", "--p", "3", "--q", "4", "--nmax", "3", "--kappa", k];
    let (c1, a, _) = call(&args("1"));
    let (c3, b, _) = call(&args("3"));
    assert_eq!((c1, c3), (EXIT_OK, EXIT_OK));
    let (a, b) = (json(&a), json(&b));
    assert_eq!(a["N"], 3);
    let rows_a = a["c"].as_array().unwrap();
    let rows_b = b["c"].as_array().unwrap();
    assert_eq!(rows_a.len(), 4);
    for (ra, rb) in rows_a.iter().zip(rows_b) {
        for (x, y) in floats(ra).iter().zip(floats(rb)) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn determinant_check_reports_published_prediction() {
    let base = [
        "verify", "--model", "compactA", "--N", "3", "--k", "1", "--x0", "equispaced", "--check", "compact-determinant",
        "--t", "0.3", "--paths", "4000", "--seed", "7",
    ];
    let (code, out, err) = call(&base);
    let report = json(&out);
    let predicted = floats(&report["predicted_re"]);
    for (p, y) in predicted.iter().zip([0.5f64, 1.0, 2.0]) {
        assert!((p - (y.powi(3) - (-1.8f64).exp())).abs() < 1e-12);
    }
    // The simulated values follow y^3 - 1, so the published rate fails.
    assert_eq!(code, EXIT_CHECK_FAILED, "{err}");
    assert!(err.contains("FAIL"));

    let mut corrected = base.to_vec();
    corrected.extend(["--convention", "corrected"]);
    let (code, out, err) = call(&corrected);
    assert_eq!(code, EXIT_OK, "{err}");
    let predicted = floats(&json(&out)["predicted_re"]);
    for (p, y) in predicted.iter().zip([0.5f64, 1.0, 2.0]) {
        assert!((p - (y.powi(3) - 1.0)).abs() < 1e-12);
    }
}

#[test]
fn verify_list_names_every_check() {
    let (code, out, _) = call(&["verify", "--list"]);
    assert_eq!(code, EXIT_OK);
    for (name, _) in hop_core::verify::CHECKS {
        assert!(out.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
    assert_eq!(out.lines().count(), hop_core::verify::CHECKS.len());
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["bogus"][..],
        &["simulate", "--frobnicate"],
        &["verify", "--check", "no-such-check"],
        &["simulate", "--model", "torus"],
        &["simulate", "--N", "3", "--x0", "1,2"],
        &["simulate", "--kappa", "-1"],
        &["coeffs", "--N", "3"],
        &[],
    ] {
        let (code, _, err) = call(args);
        assert_eq!(code, EXIT_USAGE, "{args:?}: {err}");
        assert!(err.to_lowercase().contains("usage"), "{args:?}: {err}");
    }
}

#[test]
fn internal_errors_exit_three() {
    let (code, _, err) = call(&[
        "verify", "--check", "compact-determinant", "--model", "compactA", "--kappa", "inf", "--x0", "equispaced",
    ]);
    assert_eq!(code, EXIT_INTERNAL, "{err}");
}

#[test]
fn help_exits_zero() {
    let (code, _, err) = call(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("simulate"));
}

#[test]
fn output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("t{threads}.csv"));
        let (code, _, err) = call(&[
            "simulate", "--model", "compactA", "--N", "3", "--k", "2", "--x0", "0.1,2,4", "--times", "0.05,0.1",
            "--paths", "1500", "--dt", "0.005", "--seed", "3", "--threads", threads, "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert!(String::from_utf8(files[0].clone()).unwrap().starts_with("t,observable,"));
}

#[test]
fn seed_falls_back_to_environment() {
    let args = ["simulate", "--N", "2", "--paths", "1", "--t", "0.05", "--dt", "0.01"];
    let run_with = |seed_env: Option<&str>, extra: &[&str]| -> Output {
        let mut c = bin();
        c.args(args).args(extra);
        if let Some(s) = seed_env {
            c.env(hop_sim::SEED_ENV, s);
        }
        c.output().unwrap()
    };
    let from_env = run_with(Some("42"), &[]);
    let from_flag = run_with(None, &["--seed", "42"]);
    let other = run_with(Some("43"), &[]);
    assert!(from_env.status.success());
    assert_eq!(from_env.stdout, from_flag.stdout);
    assert_ne!(from_env.stdout, other.stdout);
    let flag_wins = run_with(Some("43"), &["--seed", "42"]);
    assert_eq!(flag_wins.stdout, from_flag.stdout);
    let bad = run_with(Some("not-a-seed"), &[]);
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}

#[test]
fn binary_exit_codes() {
    assert_eq!(bin().arg("bogus").output().unwrap().status.code(), Some(EXIT_USAGE));
    let ok = bin().args(["verify", "--list"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
}

#[test]
fn identical_arguments_give_identical_bytes() {
    let args = ["simulate", "--model", "noncompactA", "--N", "2", "--x0", "1,-1", "--paths", "1", "--t", "0.1", "--seed", "9"];
    let (_, a, _) = call(&args);
    let (_, b, _) = call(&args);
    assert_eq!(a, b);
    let rows: Vec<&str> = a.lines().collect();
    assert_eq!(rows[0], "t,x1,x2");
    let first: Vec<f64> = rows[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 1.0, -1.0]);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "# freeze from the origin\ncommand = freeze\nmodel = noncompactA\nN = 2\nx0 = zero\nt = 2\n",
    )
    .unwrap();
    let (code, from_cfg, err) = call(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (_, direct, _) = call(&["freeze", "--model", "noncompactA", "--N", "2", "--x0", "zero", "--t", "2"]);
    assert_eq!(from_cfg, direct);
    let (code, shorter, _) = call(&["--config", cfg.to_str().unwrap(), "--t", "1"]);
    assert_eq!(code, EXIT_OK);
    assert!(shorter.lines().last().unwrap().starts_with("1.0000000000000000e0,"));

    std::fs::write(&cfg, "command = freeze\nno equals sign\n").unwrap();
    let (code, _, _) = call(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn shipped_configs_parse() {
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let expected: Vec<String> = (1..=12).map(|i| format!("criterion-{i:02}.conf")).collect();
    assert_eq!(names, expected);
    for name in ["criterion-02.conf", "criterion-07.conf", "criterion-08.conf", "criterion-09.conf"] {
        let path = configs_dir().join(name);
        let (code, out, err) = call(&["--config", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{name}: {err}");
        assert_eq!(json(&out)["pass"], true, "{name}");
    }
}

#[test]
fn detpoly_matches_freezing_at_infinite_kappa() {
    let (code, out, err) = call(&[
        "detpoly", "--model", "noncompactA", "--N", "3", "--kappa", "inf", "--x0", "zero", "--times", "0.5,1", "--y",
        "2,3",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rows: Vec<Vec<f64>> = out.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let (t, y, value) = (row[0], row[1], row[2]);
        let (code, path, _) = call(&["freeze", "--model", "noncompactA", "--N", "3", "--x0", "zero", "--t", &t.to_string()]);
        assert_eq!(code, EXIT_OK);
        let end: Vec<f64> = path.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        let det: f64 = end.iter().map(|x| y - x.exp()).product();
        assert!((det - value).abs() < 1e-5 * (1.0 + value.abs()), "t {t} y {y}: {det} vs {value}");
    }
}

#[test]
fn detpoly_bc_at_time_zero_is_the_initial_polynomial() {
    let (code, out, err) = call(&[
        "detpoly", "--model", "noncompactBC", "--N", "2", "--p", "2", "--q", "2", "--x0", "2,1", "--t", "0", "--y", "5",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let value: f64 = out.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((value - (5.0 - 2f64.cosh()) * (5.0 - 1f64.cosh())).abs() < 1e-12);
}
