use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::ParameterBox;
use crate::tr_opt::{criticality, run_variant, Fidelity, Problem, RunRecord, TrConfig, Variant};

/// `n` points drawn uniformly from the box; the same seed gives the same points.
pub fn sample_starts(bounds: &ParameterBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| bounds.lower.iter().zip(&bounds.upper).map(|(l, u)| rng.random_range(*l..=*u)).collect())
        .collect()
}

/// One `(variant, start)` run as reported in the output files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub variant: Variant,
    pub start_index: usize,
    pub mu0: Vec<f64>,
    /// `None` when the run aborted with an error.
    pub record: Option<RunRecord>,
    /// Objective and criticality from a separate high-fidelity solve at the
    /// final iterate.
    pub verified_j: f64,
    pub verified_criticality: f64,
    pub status: String,
    pub total_time_s: f64,
}

impl RunOutcome {
    pub fn evals(&self, fidelity: Fidelity) -> usize {
        self.record.as_ref().map_or(0, |r| r.evals(fidelity))
    }

    /// Final iterate (the start if the run failed).
    pub fn mu(&self) -> &[f64] {
        self.record.as_ref().map_or(&self.mu0, |r| &r.mu)
    }

    pub fn converged(&self) -> bool {
        self.status == "converged"
    }
}

fn execute(problem: &Problem, config: &TrConfig, variant: Variant, start_index: usize, mu0: &[f64]) -> RunOutcome {
    let t = Instant::now();
    let result = run_variant(problem, config, variant, mu0);
    let total_time_s = t.elapsed().as_secs_f64();
    let mut outcome = RunOutcome {
        variant,
        start_index,
        mu0: mu0.to_vec(),
        record: None,
        verified_j: f64::NAN,
        verified_criticality: f64::NAN,
        status: String::new(),
        total_time_s,
    };
    match result {
        Ok(record) => {
            outcome.total_time_s = record.total_time_s;
            outcome.status = record.status.to_string();
            match problem.fom.eval_output(&record.mu) {
                Ok(check) => {
                    outcome.verified_j = check.j;
                    outcome.verified_criticality = criticality(&record.mu, &check.grad, &problem.fom.bounds);
                    if record.converged() && !(outcome.verified_criticality <= config.tau) {
                        outcome.status = "unverified".into();
                    }
                }
                Err(e) => outcome.status = format!("failed: verification: {e}"),
            }
            outcome.record = Some(record);
        }
        Err(e) => outcome.status = format!("failed: {e}"),
    }
    outcome
}

/// Runs every variant from every start. Runs are distributed over `jobs`
/// threads; the result order is variant-major regardless.
pub fn run_benchmark(
    problem: &Problem,
    config: &TrConfig,
    variants: &[Variant],
    starts: &[Vec<f64>],
    jobs: usize,
    progress: impl Fn(&RunOutcome) + Sync,
) -> Vec<RunOutcome> {
    let tasks: Vec<(Variant, usize)> =
        variants.iter().flat_map(|&v| (0..starts.len()).map(move |i| (v, i))).collect();
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                let index = {
                    let mut n = next.lock().expect("task counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&(variant, start)) = tasks.get(index) else { break };
                let outcome = execute(problem, config, variant, start, &starts[start]);
                progress(&outcome);
                results.lock().expect("result slots")[index] = Some(outcome);
            });
        }
    });
    results.into_inner().expect("result slots").into_iter().map(|r| r.expect("every task ran")).collect()
}

/// Row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: String,
    pub start_index: usize,
    pub mu0_1: f64,
    pub mu0_2: f64,
    pub mu_1: f64,
    pub mu_2: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub outer_iters: usize,
    pub fom_evals: usize,
    pub rb_evals: usize,
    pub ml_evals: usize,
    pub fom_time_s: f64,
    pub rb_time_s: f64,
    pub ml_time_s: f64,
    pub total_time_s: f64,
    pub status: String,
}

/// Row of `evals.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub variant: String,
    pub start_index: usize,
    pub query_index: usize,
    pub fidelity: String,
    pub time_s: f64,
}

/// Row of `table.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub variant: String,
    pub mean_time_s: f64,
    /// Mean FomOpt time over mean time of this variant; NaN without FomOpt runs.
    pub speedup: f64,
    pub mean_fom_evals: f64,
    pub mean_rb_evals: f64,
    pub mean_ml_evals: f64,
}

/// Row of `breakdown.csv`: shares of the mean total time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub variant: String,
    pub fom_share: f64,
    pub rb_share: f64,
    pub extension_share: f64,
    pub ml_share: f64,
    pub other_share: f64,
}

pub fn run_rows(outcomes: &[RunOutcome]) -> Vec<RunRow> {
    outcomes
        .iter()
        .map(|o| {
            let rec = o.record.as_ref();
            let mu = o.mu();
            RunRow {
                variant: o.variant.to_string(),
                start_index: o.start_index,
                mu0_1: o.mu0[0],
                mu0_2: o.mu0.get(1).copied().unwrap_or(f64::NAN),
                mu_1: mu[0],
                mu_2: mu.get(1).copied().unwrap_or(f64::NAN),
                j: o.verified_j,
                outer_iters: rec.map_or(0, |r| r.outer_iters),
                fom_evals: o.evals(Fidelity::Fom),
                rb_evals: o.evals(Fidelity::Rb),
                ml_evals: o.evals(Fidelity::Ml),
                fom_time_s: rec.map_or(0.0, |r| r.eval_time(Fidelity::Fom)),
                rb_time_s: rec.map_or(0.0, |r| r.rb_time()),
                ml_time_s: rec.map_or(0.0, |r| r.ml_time()),
                total_time_s: o.total_time_s,
                status: o.status.clone(),
            }
        })
        .collect()
}

pub fn eval_rows(outcomes: &[RunOutcome]) -> Vec<EvalRow> {
    outcomes
        .iter()
        .filter_map(|o| o.record.as_ref().map(|r| (o, r)))
        .flat_map(|(o, r)| {
            r.queries.iter().enumerate().map(move |(i, q)| EvalRow {
                variant: o.variant.to_string(),
                start_index: o.start_index,
                query_index: i,
                fidelity: q.fidelity.to_string(),
                time_s: q.time_s,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-variant means over the rows of `runs.csv`, in first-appearance order.
pub fn table_rows(runs: &[RunRow]) -> Vec<TableRow> {
    let mut variants: Vec<&str> = Vec::new();
    for r in runs {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }
    fn of<'a>(runs: &'a [RunRow], v: &'a str) -> impl Iterator<Item = &'a RunRow> + 'a {
        runs.iter().filter(move |r| r.variant == v)
    }
    let reference = mean(of(runs, Variant::FomOpt.name()).map(|r| r.total_time_s));
    variants
        .into_iter()
        .map(|v| {
            let mean_time_s = mean(of(runs, v).map(|r| r.total_time_s));
            TableRow {
                variant: v.to_string(),
                mean_time_s,
                speedup: reference / mean_time_s,
                mean_fom_evals: mean(of(runs, v).map(|r| r.fom_evals as f64)),
                mean_rb_evals: mean(of(runs, v).map(|r| r.rb_evals as f64)),
                mean_ml_evals: mean(of(runs, v).map(|r| r.ml_evals as f64)),
            }
        })
        .collect()
}

pub fn breakdown_rows(outcomes: &[RunOutcome]) -> Vec<BreakdownRow> {
    let mut variants: Vec<Variant> = Vec::new();
    for o in outcomes {
        if !variants.contains(&o.variant) {
            variants.push(o.variant);
        }
    }
    variants
        .into_iter()
        .map(|v| {
            let records: Vec<&RunRecord> =
                outcomes.iter().filter(|o| o.variant == v).filter_map(|o| o.record.as_ref()).collect();
            let total: f64 = records.iter().map(|r| r.total_time_s).sum();
            let share = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / total;
            let fom_share = share(&|r| r.eval_time(Fidelity::Fom));
            let rb_share = share(&|r| r.rb_time());
            let extension_share = share(&|r| r.extension_time_s);
            let ml_share = share(&|r| r.ml_time());
            BreakdownRow {
                variant: v.to_string(),
                fom_share,
                rb_share,
                extension_share,
                ml_share,
                other_share: 1.0 - fom_share - rb_share - extension_share - ml_share,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header-only file when `rows` is empty, so every schema is present.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        w.flush()?;
        return Ok(());
    }
    write_csv(path, rows)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const RUNS_HEADER: &[&str] = &[
    "variant",
    "start_index",
    "mu0_1",
    "mu0_2",
    "mu_1",
    "mu_2",
    "J",
    "outer_iters",
    "fom_evals",
    "rb_evals",
    "ml_evals",
    "fom_time_s",
    "rb_time_s",
    "ml_time_s",
    "total_time_s",
    "status",
];
pub const EVALS_HEADER: &[&str] = &["variant", "start_index", "query_index", "fidelity", "time_s"];
pub const TABLE_HEADER: &[&str] =
    &["variant", "mean_time_s", "speedup", "mean_fom_evals", "mean_rb_evals", "mean_ml_evals"];

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct BenchmarkFiles {
    pub runs: Vec<RunRow>,
    pub table: Vec<TableRow>,
    pub breakdown: Vec<BreakdownRow>,
}

/// Writes `runs.csv`, `evals.csv`, `table.csv` and `breakdown.csv` into `dir`.
pub fn write_outputs(dir: &Path, outcomes: &[RunOutcome]) -> Result<BenchmarkFiles> {
    std::fs::create_dir_all(dir)?;
    let runs = run_rows(outcomes);
    let table = table_rows(&runs);
    let breakdown = breakdown_rows(outcomes);
    write_csv_with_header(&dir.join("runs.csv"), RUNS_HEADER, &runs)?;
    write_csv_with_header(&dir.join("evals.csv"), EVALS_HEADER, &eval_rows(outcomes))?;
    write_csv_with_header(&dir.join("table.csv"), TABLE_HEADER, &table)?;
    write_csv(&dir.join("breakdown.csv"), &breakdown)?;
    Ok(BenchmarkFiles { runs, table, breakdown })
}
