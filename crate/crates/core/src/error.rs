use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("iterative solver did not converge after {iters} iterations (relative residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time step {step}: {source}")]
    TimeStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("layout: {0}")]
    Layout(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::TimeStep { step, source: Box::new(self) }
    }
}
