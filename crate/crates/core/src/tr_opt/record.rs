use std::fmt;

/// Model used to answer one objective/gradient query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fidelity {
    Fom,
    Rb,
    Ml,
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Fom => "FOM",
            Fidelity::Rb => "RB",
            Fidelity::Ml => "ML",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub fidelity: Fidelity,
    pub time_s: f64,
}

/// One kernel training call.
#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub centers: usize,
    /// Maximum relative interpolation error on the training set.
    pub error: f64,
    /// Derivative check against central differences, if requested.
    pub derivative_error: Option<f64>,
    pub time_s: f64,
}

/// How an inner loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerExit {
    Converged,
    TrustRegion,
    NoProgress,
    Budget,
}

/// Outcome of an outer trust-region iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterDecision {
    /// Sufficient condition held.
    Accepted,
    /// Accepted after enrichment by the a-posteriori test.
    AcceptedAfterEnrichment,
    /// Necessary condition failed.
    Rejected,
    /// Enriched, then the a-posteriori test failed.
    RejectedAfterEnrichment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterStep {
    pub iteration: usize,
    pub mu: Vec<f64>,
    pub inner_steps: usize,
    pub inner_exit: InnerExit,
    pub decision: OuterDecision,
    pub eps_l: f64,
    pub basis_dim: usize,
}

/// One line of the convergence history: an accepted step, or an outer
/// iterate with its high-fidelity values.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEvent {
    pub outer: usize,
    pub inner: usize,
    pub fidelity: Fidelity,
    pub j: f64,
    /// Criticality measured with the gradient of `fidelity`.
    pub criticality: f64,
    /// Trust-region radius and step cap; absent without a trust region.
    pub eps_l: Option<f64>,
    pub alpha_l: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    Stalled,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::Stalled => "stalled",
        })
    }
}

/// Everything measured during one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub variant: super::Variant,
    pub mu0: Vec<f64>,
    pub mu: Vec<f64>,
    /// Objective at `mu` from the last high-fidelity evaluation there.
    pub j: f64,
    /// High-fidelity criticality at `mu`.
    pub criticality: f64,
    pub status: Status,
    pub outer_iters: usize,
    pub queries: Vec<Query>,
    /// Estimator evaluations and their time (charged to the RB budget).
    pub estimates: usize,
    pub estimate_time_s: f64,
    /// Basis enrichment time excluding the high-fidelity solves.
    pub extension_time_s: f64,
    pub trainings: Vec<Training>,
    pub outer_steps: Vec<OuterStep>,
    pub history: Vec<HistoryEvent>,
    /// `(J(μ_l), J(μ_{l+1}))` for every accepted inner step, values as used
    /// by the acceptance test.
    pub inner_decay: Vec<(f64, f64)>,
    /// `(J^(i)(μ^(i)), J^(i+1)(μ^(i+1)))` for every accepted outer step.
    pub outer_decay: Vec<(f64, f64)>,
    pub total_time_s: f64,
}

impl RunRecord {
    pub(crate) fn new(variant: super::Variant, mu0: &[f64]) -> Self {
        RunRecord {
            variant,
            mu0: mu0.to_vec(),
            mu: mu0.to_vec(),
            j: f64::NAN,
            criticality: f64::INFINITY,
            status: Status::MaxIterations,
            outer_iters: 0,
            queries: Vec::new(),
            estimates: 0,
            estimate_time_s: 0.0,
            extension_time_s: 0.0,
            trainings: Vec::new(),
            outer_steps: Vec::new(),
            history: Vec::new(),
            inner_decay: Vec::new(),
            outer_decay: Vec::new(),
            total_time_s: 0.0,
        }
    }

    pub fn evals(&self, fidelity: Fidelity) -> usize {
        self.queries.iter().filter(|q| q.fidelity == fidelity).count()
    }

    pub fn eval_time(&self, fidelity: Fidelity) -> f64 {
        // `+ 0.0` turns the empty sum (-0.0) into 0.0.
        self.queries.iter().filter(|q| q.fidelity == fidelity).map(|q| q.time_s).sum::<f64>() + 0.0
    }

    pub fn training_time(&self) -> f64 {
        self.trainings.iter().map(|t| t.time_s).sum::<f64>() + 0.0
    }

    /// Time reported for the RB level: solves plus error estimation.
    pub fn rb_time(&self) -> f64 {
        self.eval_time(Fidelity::Rb) + self.estimate_time_s
    }

    /// Time reported for the ML level: predictions plus training.
    pub fn ml_time(&self) -> f64 {
        self.eval_time(Fidelity::Ml) + self.training_time()
    }

    /// Number of recorded pairs violating `J_before ≥ J_after`.
    pub fn decay_violations(&self) -> (usize, usize) {
        let count = |pairs: &[(f64, f64)]| pairs.iter().filter(|(a, b)| !(a >= b)).count();
        (count(&self.inner_decay), count(&self.outer_decay))
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}
