//! Runs the built binary on a small configuration.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[problem]\nnx = 32\nny = 16\nsteps = 20\n";

fn mfopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfopt")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_writes_the_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = mfopt(&[
        "run", "--config", &config, "--out", out.to_str().unwrap(), "--seed", "3", "--variant", "RelaxedTrRbOpt",
        "--starts", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        first_line(&out.join("runs.csv")),
        "variant,start_index,mu0_1,mu0_2,mu_1,mu_2,J,outer_iters,fom_evals,rb_evals,ml_evals,fom_time_s,rb_time_s,ml_time_s,total_time_s,status"
    );
    assert_eq!(first_line(&out.join("evals.csv")), "variant,start_index,query_index,fidelity,time_s");
    assert_eq!(
        first_line(&out.join("table.csv")),
        "variant,mean_time_s,speedup,mean_fom_evals,mean_rb_evals,mean_ml_evals"
    );
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3);
    assert!(runs.lines().skip(1).all(|l| l.starts_with("RelaxedTrRbOpt,") && l.ends_with(",converged")));
}

#[test]
fn gradient_check_and_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = mfopt(&["gradient-check", "--config", &config, "--points", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = mfopt(&["single", "--config", &config, "--out", out.to_str().unwrap(), "--mu0", "0.03,0.07"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = out.join("single_RelaxedTrRbMlOpt");
    for file in ["history.csv", "outer.csv", "summary.txt"] {
        assert!(run.join(file).exists(), "{file} missing");
    }
}

#[test]
fn bad_input_exits_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    assert_eq!(mfopt(&["run", "--config", &config, "--variant", "Newton"]).status.code(), Some(2));
    assert_eq!(mfopt(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(mfopt(&["run", "--scale", "huge"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[problem]\nnxx = 3\n").unwrap();
    assert_eq!(mfopt(&["validate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn injected_fault_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("v.toml");
    std::fs::write(&config, format!("{SMALL}[validation]\nestimator_pairs = 4\n")).unwrap();
    let o = mfopt(&["validate", "--config", config.to_str().unwrap(), "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL rb-reproduction"));
}
