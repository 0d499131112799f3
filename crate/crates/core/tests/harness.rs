mod common;

use mfopt::harness::bench::{
    read_csv, table_rows, EvalRow, RunRow, TableRow, EVALS_HEADER, RUNS_HEADER, TABLE_HEADER,
};
use mfopt::harness::{run_benchmark, sample_starts, validate, write_outputs, ExperimentConfig, Fault, Scale};
use mfopt::tr_opt::Variant;

fn header(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn overrides_merge_into_the_preset() {
    let c = ExperimentConfig::from_toml("[problem]\nnx = 40\n[optimizer]\ntau = 1e-4\n", Scale::Desk).unwrap();
    assert_eq!(c.problem.nx, 40);
    assert_eq!(c.problem.ny, 32);
    assert_eq!(c.optimizer.tau, 1e-4);
    assert_eq!(c.optimizer.beta1, 0.95);
    let paper = ExperimentConfig::from_toml("", Scale::Paper).unwrap();
    assert_eq!((paper.problem.nx, paper.problem.ny, paper.problem.steps), (256, 128, 10_000));
    let again = ExperimentConfig::from_toml(&c.to_toml(), Scale::Paper).unwrap();
    assert_eq!(again, c);
}

#[test]
fn bad_configs_are_rejected() {
    for text in [
        "[problem]\nnxx = 3\n",
        "[nonsense]\na = 1\n",
        "[problem]\nnx = 1\n",
        "[problem]\ndt = -0.1\n",
        "[optimizer]\nkappa = 2.0\n",
        "[experiment]\nstarts = 0\n",
        "[problem]\nlower = [0.01]\n",
        "not = toml = at all",
    ] {
        assert!(ExperimentConfig::from_toml(text, Scale::Desk).is_err(), "{text}");
    }
    assert!("huge".parse::<Scale>().is_err());
}

#[test]
fn starts_are_shared_and_reproducible() {
    let b = common::unit_box();
    let a = sample_starts(&b, 10, 42);
    assert_eq!(a, sample_starts(&b, 10, 42));
    assert_ne!(a, sample_starts(&b, 10, 43));
    assert!(a.iter().all(|m| b.contains(m)));
}

#[test]
fn benchmark_files_have_the_documented_schema() {
    let config = common::small_config();
    let p = config.build_problem().unwrap();
    let starts = sample_starts(&p.fom.bounds, 2, 9);
    let outcomes = run_benchmark(&p, &config.optimizer, &Variant::ALL, &starts, 2, |_| {});
    assert_eq!(outcomes.len(), 8);
    // Variant-major order regardless of the thread count.
    for (i, o) in outcomes.iter().enumerate() {
        assert_eq!(o.variant, Variant::ALL[i / 2]);
        assert_eq!(o.start_index, i % 2);
        assert_eq!(o.mu0, starts[i % 2]);
        assert!(o.converged(), "{} {}", o.variant, o.status);
    }

    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(dir.path(), &outcomes).unwrap();
    assert_eq!(header(&dir.path().join("runs.csv")), RUNS_HEADER.join(","));
    assert_eq!(header(&dir.path().join("evals.csv")), EVALS_HEADER.join(","));
    assert_eq!(header(&dir.path().join("table.csv")), TABLE_HEADER.join(","));
    assert_eq!(
        RUNS_HEADER.join(","),
        "variant,start_index,mu0_1,mu0_2,mu_1,mu_2,J,outer_iters,fom_evals,rb_evals,ml_evals,fom_time_s,rb_time_s,ml_time_s,total_time_s,status"
    );
    assert_eq!(EVALS_HEADER.join(","), "variant,start_index,query_index,fidelity,time_s");
    assert_eq!(TABLE_HEADER.join(","), "variant,mean_time_s,speedup,mean_fom_evals,mean_rb_evals,mean_ml_evals");

    let runs: Vec<RunRow> = read_csv(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs, files.runs);
    let evals: Vec<EvalRow> = read_csv(&dir.path().join("evals.csv")).unwrap();
    let table: Vec<TableRow> = read_csv(&dir.path().join("table.csv")).unwrap();

    // The table is reproducible from runs.csv alone.
    for (a, b) in table.iter().zip(table_rows(&runs)) {
        assert_eq!(a.variant, b.variant);
        for (x, y) in [(a.mean_time_s, b.mean_time_s), (a.speedup, b.speedup), (a.mean_rb_evals, b.mean_rb_evals)] {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
    assert_eq!(table[0].variant, "FomOpt");
    assert!((table[0].speedup - 1.0).abs() < 1e-12);

    for run in &runs {
        let mine: Vec<&EvalRow> =
            evals.iter().filter(|e| e.variant == run.variant && e.start_index == run.start_index).collect();
        let count = |f: &str| mine.iter().filter(|e| e.fidelity == f).count();
        assert_eq!((count("FOM"), count("RB"), count("ML")), (run.fom_evals, run.rb_evals, run.ml_evals));
        let spent: f64 = mine.iter().map(|e| e.time_s).sum();
        assert!(spent <= run.total_time_s, "{spent} > {}", run.total_time_s);
        assert!(mine.iter().enumerate().all(|(i, e)| e.query_index == i));
    }
}

#[test]
fn validation_catches_a_corrupted_basis() {
    let mut config = common::small_config();
    config.validation.estimator_pairs = 4;
    let p = config.build_problem().unwrap();
    let clean = validate(&config, &p, None).unwrap();
    assert!(clean.passed(), "{clean}");
    let broken = validate(&config, &p, Some(Fault::CorruptBasis)).unwrap();
    assert!(!broken.passed());
    let repro = broken.checks.iter().find(|c| c.name == "rb-reproduction").unwrap();
    assert!(!repro.passed);
    assert!(broken.to_string().contains("FAIL rb-reproduction"));
}
