use std::path::Path;
use std::process::Command;

fn drikit(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_drikit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn report(dir: &Path, out: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(out).join("report.json")).unwrap()).unwrap()
}

#[test]
fn log_counterexample_is_verified() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.json",
        r#"{"schema": 1, "density": {"name": "log_counterexample"}}"#,
    );
    let o = drikit(&["dri-check", "--config", "c.json", "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "o");
    assert_eq!(r["result"]["report"]["verdict"], "DRI_verified");
    assert_eq!(r["config"]["grid"]["window"][1], 64.0);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    let ladder = std::fs::read_to_string(d.path().join("o/ladder.csv")).unwrap();
    assert!(ladder.starts_with("delta,upper,lower,gap,tail_bound\n1.0000000000000000e0,"));
}

#[test]
fn constant_tail_diverges() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,f\n");
    for i in 0..=100 {
        let v = if i == 0 || i == 100 { 0.5 } else { 1.0 };
        csv.push_str(&format!("{},{v}\n", i as f64 / 100.0));
    }
    write(d.path(), "tab.csv", &csv);
    write(
        d.path(),
        "env.json",
        r#"{"cutoff": 1.0, "constant": 1.0, "exponent": 0.0, "decay": "power_law", "cap": null, "exact": false}"#,
    );
    write(
        d.path(),
        "c.json",
        r#"{"schema": 1, "density": {"name": "tabulated", "csv": "tab.csv", "envelope": "env.json"}}"#,
    );
    let o = drikit(&["dri-check", "--config", "c.json", "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn coarse_pareto_is_inconclusive() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.json",
        r#"{"schema": 1, "density": {"name": "pareto", "params": {"alpha": 0.6}}, "grid": {"window": [1, 64], "spacing": 0.25}}"#,
    );
    let o = drikit(&["dri-check", "--config", "c.json", "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("refine the grid"));
}

#[test]
fn config_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "bad.json",
        r#"{"schema": 1, "density": {"name": "exponential"}, "extra": true}"#,
    );
    let o = drikit(&["renewal", "--config", "bad.json"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
    assert_eq!(
        drikit(&["renewal", "--config", "missing.json"], d.path()).status.code(),
        Some(1)
    );
    assert_eq!(drikit(&["no-such-command"], d.path()).status.code(), Some(1));
    assert_eq!(drikit(&["--help"], d.path()).status.code(), Some(0));
}

#[test]
fn renewal_writes_flat_poisson_density() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.json",
        r#"{"schema": 1, "density": {"name": "exponential"}}"#,
    );
    let o = drikit(&["renewal", "--config", "c.json", "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(d.path().join("o/u.csv")).unwrap();
    let mut worst: f64 = 0.0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let u: f64 = rec[1].parse().unwrap();
        if x >= 2.0 {
            worst = worst.max((u - 1.0).abs());
        }
    }
    assert!(worst <= 1e-3, "{worst}");
    assert!(
        report(d.path(), "o")["result"]["series"]["remainder_bound"]
            .as_f64()
            .unwrap()
            <= 1e-4
    );
}

#[test]
fn simulate_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.json",
        r#"{"schema": 1, "density": {"name": "exponential"}, "simulate": {"windows": [[10, 0.5]], "paths": 20000}}"#,
    );
    for (out, threads) in [("a", "1"), ("b", "4")] {
        let o = drikit(
            &[
                "simulate",
                "--config",
                "c.json",
                "--out",
                out,
                "--seed",
                "5",
                "--threads",
                threads,
            ],
            d.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(d.path().join("a/report.json")).unwrap();
    let b = std::fs::read(d.path().join("b/report.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(report(d.path(), "a")["config"]["seed"], 5);
    assert!(d.path().join("a/metadata.json").exists());
}

#[test]
fn heavy_tail_reports_half_target() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.json",
        r#"{"schema": 1, "density": {"name": "pareto", "params": {"alpha": 0.5}}, "heavy_tail": {"kbar": 4, "probes": [200]}}"#,
    );
    let o = drikit(&["heavy-tail", "--config", "c.json", "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "o");
    let target = r["result"]["target"].as_f64().unwrap();
    assert_eq!(format!("{target:.5}"), "0.63662");
    assert_eq!(r["result"]["limit_claimed"], false);
}

#[test]
fn other_commands_run() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "u.json",
        r#"{"schema": 1, "density": {"name": "uniform"}, "chain": {"n_max": 3}}"#,
    );
    for (cmd, file) in [
        ("conv-power", "f_2.csv"),
        ("local-clt", "errors.csv"),
        ("envelope-chain", "h_bar_1.csv"),
    ] {
        let o = drikit(&[cmd, "--config", "u.json", "--out", cmd], d.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(d.path().join(cmd).join(file).exists(), "{cmd}");
    }
}
