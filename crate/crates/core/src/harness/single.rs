//! One optimization run with its full convergence history.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::bench::write_csv;
use crate::error::Result;
use crate::tr_opt::{run_variant, Fidelity, HistoryEvent, InnerExit, OuterDecision, Problem, RunRecord, TrConfig, Variant};

/// Row of `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub outer: usize,
    pub inner: usize,
    pub fidelity: String,
    #[serde(rename = "J")]
    pub j: f64,
    pub criticality: f64,
    pub eps_l: Option<f64>,
    pub alpha_l: Option<f64>,
}

impl From<&HistoryEvent> for HistoryRow {
    fn from(e: &HistoryEvent) -> Self {
        HistoryRow {
            outer: e.outer,
            inner: e.inner,
            fidelity: e.fidelity.to_string(),
            j: e.j,
            criticality: e.criticality,
            eps_l: e.eps_l,
            alpha_l: e.alpha_l,
        }
    }
}

/// Row of `outer.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRow {
    pub iteration: usize,
    pub mu_1: f64,
    pub mu_2: f64,
    pub inner_steps: usize,
    pub inner_exit: &'static str,
    pub decision: &'static str,
    pub eps_l: f64,
    pub basis_dim: usize,
}

fn exit_name(e: InnerExit) -> &'static str {
    match e {
        InnerExit::Converged => "converged",
        InnerExit::TrustRegion => "trust_region",
        InnerExit::NoProgress => "no_progress",
        InnerExit::Budget => "budget",
    }
}

fn decision_name(d: OuterDecision) -> &'static str {
    match d {
        OuterDecision::Accepted => "accepted",
        OuterDecision::AcceptedAfterEnrichment => "accepted_after_enrichment",
        OuterDecision::Rejected => "rejected",
        OuterDecision::RejectedAfterEnrichment => "rejected_after_enrichment",
    }
}

/// Runs `variant` from `mu0` and writes `history.csv`, `outer.csv` and
/// `summary.txt` into `dir`.
pub fn single_run(problem: &Problem, config: &TrConfig, variant: Variant, mu0: &[f64], dir: &Path) -> Result<RunRecord> {
    let record = run_variant(problem, config, variant, mu0)?;
    std::fs::create_dir_all(dir)?;
    let history: Vec<HistoryRow> = record.history.iter().map(HistoryRow::from).collect();
    write_csv(&dir.join("history.csv"), &history)?;
    let outer: Vec<OuterRow> = record
        .outer_steps
        .iter()
        .map(|s| OuterRow {
            iteration: s.iteration,
            mu_1: s.mu[0],
            mu_2: s.mu.get(1).copied().unwrap_or(f64::NAN),
            inner_steps: s.inner_steps,
            inner_exit: exit_name(s.inner_exit),
            decision: decision_name(s.decision),
            eps_l: s.eps_l,
            basis_dim: s.basis_dim,
        })
        .collect();
    write_csv(&dir.join("outer.csv"), &outer)?;
    std::fs::write(dir.join("summary.txt"), summary(&record))?;
    Ok(record)
}

/// Human-readable digest of a run.
pub fn summary(r: &RunRecord) -> String {
    let mut s = String::new();
    let (inner, outer) = r.decay_violations();
    let _ = writeln!(s, "variant            {}", r.variant);
    let _ = writeln!(s, "start              {:?}", r.mu0);
    let _ = writeln!(s, "final              {:?}", r.mu);
    let _ = writeln!(s, "J                  {:.6e}", r.j);
    let _ = writeln!(s, "criticality        {:.3e}", r.criticality);
    let _ = writeln!(s, "status             {}", r.status);
    let _ = writeln!(s, "outer iterations   {}", r.outer_iters);
    for f in [Fidelity::Fom, Fidelity::Rb, Fidelity::Ml] {
        let _ = writeln!(s, "{:<18} {} ({:.3} s)", format!("{f} evals"), r.evals(f), r.eval_time(f));
    }
    let _ = writeln!(s, "estimates          {} ({:.3} s)", r.estimates, r.estimate_time_s);
    let _ = writeln!(s, "extension time     {:.3} s", r.extension_time_s);
    let _ = writeln!(s, "trainings          {} ({:.3} s)", r.trainings.len(), r.training_time());
    if let Some(worst) = r.trainings.iter().map(|t| t.error).reduce(f64::max) {
        let _ = writeln!(s, "max training error {worst:.2e}");
    }
    let _ = writeln!(s, "decay violations   inner {inner}, outer {outer}");
    let _ = writeln!(s, "total time         {:.3} s", r.total_time_s);
    s
}
