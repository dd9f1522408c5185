use alloc::string::String;

/// Errors raised by the fitting core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("baseline argument {0} overflows the cumulative hazard")]
    Overflow(f64),

    #[error("non-finite value while evaluating record {record}")]
    Evaluation { record: usize },

    #[error("linear predictor {value} for record {record} diverged; damp the step")]
    Diverged { record: usize, value: f64 },

    #[error("information matrix is not positive definite")]
    Curvature,

    #[error("Newton iterations did not converge after {iterations} steps (max |score| = {max_score:e})")]
    NonConvergence { iterations: usize, max_score: f64 },

    #[error("dispersion optimizer did not converge after {iterations} iterations")]
    OptimizerNonConvergence { iterations: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frailty structure error: {0}")]
    Structure(String),

    #[error("covariate `{0}` is not binary")]
    UnsupportedCovariate(String),

    #[error("likelihood-ratio statistic {0} is negative; the fits look inconsistent")]
    InconsistentFits(f64),

    #[error("censoring rate {target} is unreachable (achievable range {low}..{high})")]
    Calibration { target: f64, low: f64, high: f64 },

    #[error("{failed} of {total} replicates failed")]
    Scenario { failed: usize, total: usize },

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
