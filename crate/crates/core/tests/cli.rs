use std::fs;
use std::process::Command;

use learnability::config::{emit_config, parse_config};
use learnability::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_learnability"))
}

fn run(args: &[&str], cwd: &std::path::Path) -> (i32, String, String) {
    let out = bin().args(args).current_dir(cwd).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn construct_then_sparsify_finds_l0_56() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["construct", "--task", "fft", "--n", "8", "--out", "net.txt"], dir.path());
    assert_eq!(code, 0, "{err}");
    let (code, stdout, err) = run(&["sparsify", "--net", "net.txt", "--out", "curve"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("minimum-error L0 56 "), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("curve/sparsity_curve.csv")).unwrap();
    assert!(csv.starts_with("threshold,l0,rel_error\n0,56,"));
}

#[test]
fn gradcheck_parity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, err) = run(&["gradcheck", "--task", "parity", "--n", "8"], dir.path());
    assert_eq!(code, 0, "{err}");
    let value: f64 = stdout
        .split("max relative error ")
        .nth(1)
        .and_then(|s| s.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(value < 1e-5);
}

#[test]
fn missing_config_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["train", "--config", "missing.toml", "--out", "run"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("missing.toml") && err.contains("No such file"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).0, 2);
    assert_eq!(run(&["construct", "--task", "fft"], dir.path()).0, 2);
    assert_eq!(run(&["construct", "--task", "fft", "--n", "12"], dir.path()).0, 1);
    assert_eq!(run(&["--help"], dir.path()).0, 0);
}

#[test]
fn bad_config_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "task = \"parity\"\nn = 8\nbatchsize = 10\n").unwrap();
    let (code, _, err) = run(&["train", "--config", "c.toml", "--out", "run"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("line 3") && err.contains("batchsize"), "{err}");
}

#[test]
fn train_run_directory_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "task = \"parity\"\nn = 8\nsteps = 50\nbatch_size = 100\neval_every = 10\ntest_samples = 500\n",
    )
    .unwrap();
    let (code, _, err) = run(&["train", "--config", "c.toml", "--scale", "0.2", "--seed", "3", "--out", "a"], dir.path());
    assert_eq!(code, 0, "{err}");
    for f in ["config.toml", "record.json", "metrics.csv", "net.json"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    let echo = fs::read_to_string(dir.path().join("a/config.toml")).unwrap();
    assert!(echo.contains("seed = 3"));
    let metrics = fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,test_error,grad_norm\n"));
    assert_eq!(metrics.lines().count(), 1 + 6);

    let (code, _, err) = run(&["train", "--config", "a/config.toml", "--scale", "0.2", "--out", "b"], dir.path());
    assert_eq!(code, 0, "{err}");
    let a = fs::read(dir.path().join("a/record.json")).unwrap();
    let b = fs::read(dir.path().join("b/record.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn basin_sweep_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "task = \"parity\"\nn = 4\nsteps = 20\nbatch_size = 50\neval_every = 10\ntest_samples = 200\nscales = [0.0, 1.0]\nseeds = [0, 1]\n",
    )
    .unwrap();
    let (code, stdout, err) = run(&["basin-sweep", "--config", "c.toml", "--masked", "--out", "s", "--threads", "2"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("scale 0: median final error 0"), "{stdout}");
    let s = dir.path().join("s");
    for f in ["config.toml", "record.json", "metrics.csv", "fig1_basin.csv", "fig1_basin.svg"] {
        assert!(s.join(f).exists(), "{f}");
    }
    let fig = fs::read_to_string(s.join("fig1_basin.csv")).unwrap();
    assert_eq!(fig.lines().count(), 5);
    assert!(fig.starts_with("noise_scale,final_error\n0,"));
    let echo = parse_config(&fs::read_to_string(s.join("config.toml")).unwrap()).unwrap();
    assert!(echo.masked);
}

#[test]
fn scaling_study_writes_three_series() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["scaling-study", "--sizes", "2,4", "--steps", "200", "--out", "sc"], dir.path());
    assert_eq!(code, 0, "{err}");
    let scaling = fs::read_to_string(dir.path().join("sc/scaling.csv")).unwrap();
    let lines: Vec<&str> = scaling.lines().collect();
    assert_eq!(lines[0], "n,condition,l0,scaling_factor");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("2,handcoded,6,"));
    assert!(lines[4].starts_with("4,handcoded,20,2.5"));
    let fig = fs::read_to_string(dir.path().join("sc/fig2_scaling.csv")).unwrap();
    for cond in ["handcoded", "near", "far"] {
        assert_eq!(fig.matches(&format!(",{cond},")).count(), 2);
    }
    assert!(dir.path().join("sc/sparsity_curve.csv").exists());
}

#[test]
fn config_round_trip_and_errors() {
    let cfg = parse_config("task = \"parity\"\nn = 16\n").unwrap();
    assert_eq!(cfg.train.learning_rate, 1e-4);
    assert_eq!(cfg.train.batch_size, 1000);
    assert_eq!(parse_config(&emit_config(&cfg).unwrap()).unwrap(), cfg);
    assert!(matches!(parse_config("task = \"parity\"\nmystery = 1"), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_config("task = \"tsp\""), Err(Error::Parse { .. })));
}
