use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn brox(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brox"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn brox")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Temp dir holding `env.json` with `n` segments.
fn with_env(n: usize, seed: u64) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let out = brox(
        dir.path(),
        &["gen-env", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", "env.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("env.json");
    (dir, path)
}

#[test]
fn gen_env_writes_full_grid() {
    let dir = TempDir::new().unwrap();
    let out = brox(dir.path(), &["gen-env", "--a", "0", "--b", "1", "--n", "10000", "--seed", "42", "--out", "e.json"]);
    assert_eq!(code(&out), 0);
    let doc = json(dir.path().join("e.json"));
    assert_eq!(doc["w"].as_array().unwrap().len(), 10_001);
    assert_eq!(doc["seed"], 42);
    assert_eq!(doc["w"][doc["anchor_index"].as_u64().unwrap() as usize], 0.0);
}

#[test]
fn gen_env_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for name in ["x.json", "y.json"] {
        assert_eq!(code(&brox(dir.path(), &["gen-env", "--n", "500", "--seed", "9", "--out", name])), 0);
    }
    assert_eq!(read(dir.path().join("x.json")), read(dir.path().join("y.json")));
}

#[test]
fn eigen_reruns_are_byte_identical() {
    let (dir, _) = with_env(2000, 7);
    for (name, threads) in [("a.csv", "1"), ("b.csv", "3")] {
        let out = brox(dir.path(), &["--threads", threads, "eigen", "--env", "env.json", "--n", "5", "--out", name]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = read(dir.path().join("a.csv"));
    assert_eq!(a, read(dir.path().join("b.csv")));
    assert_eq!(read(dir.path().join("a.phi.csv")), read(dir.path().join("b.phi.csv")));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "n,lambda,zeros_interior");
    assert_eq!(lines.len(), 6);
    assert!(!a.contains('\r'));

    let side = json(dir.path().join("a.csv.run.json"));
    assert_eq!(side["version"], 1);
    assert_eq!(side["command"], "eigen");
    assert_eq!(side["results"]["lambda"].as_array().unwrap().len(), 5);
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let (dir, _) = with_env(1000, 3);
    let args = |threads: &'static str, out: &'static str| {
        vec!["--threads", threads, "simulate", "--env", "env.json", "--x0", "0.4", "--t", "0.02", "--paths", "2000", "--dt", "1e-5", "--out", out]
    };
    assert_eq!(code(&brox(dir.path(), &args("1", "s1.csv"))), 0);
    assert_eq!(code(&brox(dir.path(), &args("4", "s4.csv"))), 0);
    let s1 = read(dir.path().join("s1.csv"));
    assert_eq!(s1, read(dir.path().join("s4.csv")));
    assert!(s1.starts_with("bin_lo,bin_hi,count,density,stderr\n"));
    assert_eq!(s1.lines().count(), 21);
}

#[test]
fn config_values_yield_to_flags() {
    let (dir, _) = with_env(1000, 5);
    std::fs::write(dir.path().join("cfg.json"), r#"{"version": 1, "env": "env.json", "n": 4, "out": "cfg.csv"}"#).unwrap();
    assert_eq!(code(&brox(dir.path(), &["--config", "cfg.json", "eigen"])), 0);
    assert_eq!(read(dir.path().join("cfg.csv")).lines().count(), 5);

    assert_eq!(code(&brox(dir.path(), &["--config", "cfg.json", "eigen", "--n", "2", "--out", "flag.csv"])), 0);
    assert_eq!(read(dir.path().join("flag.csv")).lines().count(), 3);
    assert!(dir.path().join("flag.phi.csv").exists());
}

#[test]
fn usage_errors_exit_1() {
    let (dir, _) = with_env(200, 1);
    assert_eq!(code(&brox(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&brox(dir.path(), &["eigen", "--env", "env.json", "--n", "many"])), 1);
    assert_eq!(code(&brox(dir.path(), &["simulate", "--env", "env.json", "--x0", "1.5", "--t", "0.1", "--paths", "10", "--out", "s.csv"])), 1);
    assert_eq!(code(&brox(dir.path(), &["gen-env", "--a", "1", "--b", "0", "--out", "bad.json"])), 1);
    assert_eq!(code(&brox(dir.path(), &["density", "--env", "env.json", "--t", "0.1", "--out", "d.csv"])), 1);
}

#[test]
fn io_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&brox(dir.path(), &["eigen", "--env", "missing.json", "--out", "o.csv"])), 3);

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    assert_eq!(code(&brox(dir.path(), &["plot", "--in", "empty.csv", "--kind", "density", "--out", "p.svg"])), 3);

    std::fs::write(dir.path().join("broken.json"), "{\"a\": 0,").unwrap();
    assert_eq!(code(&brox(dir.path(), &["eigen", "--env", "broken.json", "--out", "o.csv"])), 3);

    std::fs::write(dir.path().join("cfg.json"), "[1, 2]").unwrap();
    assert_eq!(code(&brox(dir.path(), &["--config", "cfg.json", "gen-env", "--out", "e.json"])), 3);
}

#[test]
fn tampered_environment_is_rejected() {
    let (dir, path) = with_env(300, 2);
    let mut doc = json(&path);
    doc["w"][10] = serde_json::json!(doc["w"][10].as_f64().unwrap() + 0.5);
    std::fs::write(&path, doc.to_string()).unwrap();
    assert_eq!(code(&brox(dir.path(), &["eigen", "--env", "env.json", "--out", "o.csv"])), 3);
}

#[test]
fn verify_all_passes() {
    let (dir, _) = with_env(2000, 11);
    let out = brox(dir.path(), &["verify", "--env", "env.json", "--n", "4", "--out", "v.csv"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert_eq!(stdout, read(dir.path().join("v.csv")));
    assert!(stdout.lines().skip(1).all(|l| l.ends_with(",true")));
    for name in ["green_T_of_Lf", "count_mismatch_riccati", "detailed_balance"] {
        assert!(stdout.contains(name), "missing {name}");
    }
    assert_eq!(json(dir.path().join("v.csv.run.json"))["command"], "verify");
}

#[test]
fn outputs_feed_the_plotter() {
    let (dir, _) = with_env(1000, 4);
    let steps: [&[&str]; 6] = [
        &["eigen", "--env", "env.json", "--n", "3", "--out", "eig.csv"],
        &["density", "--env", "env.json", "--t", "0.05", "--x0", "0.5", "--out", "dens.csv"],
        &["plot", "--in", "env.json", "--kind", "env", "--out", "env.svg"],
        &["plot", "--in", "eig.phi.csv", "--kind", "eigenfunctions", "--out", "eig.svg"],
        &["plot", "--in", "dens.csv", "--kind", "density", "--out", "dens.svg"],
        &["riccati", "--env", "env.json", "--lambda", "30", "--out", "ric.csv"],
    ];
    for args in steps {
        let out = brox(dir.path(), args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for svg in ["env.svg", "eig.svg", "dens.svg"] {
        let text = read(dir.path().join(svg));
        assert!(text.starts_with("<?xml") || text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
    assert!(read(dir.path().join("ric.csv")).starts_with("x,P\n"));
}
