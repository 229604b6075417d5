use thiserror::Error;

#[derive(Debug, Error)]
pub enum WgError {
    #[error("ensembles are not comparable: ({n_a} particles, dim {d_a}) vs ({n_b} particles, dim {d_b})")]
    Comparability {
        n_a: usize,
        d_a: usize,
        n_b: usize,
        d_b: usize,
    },
    #[error("ensemble size {n} exceeds assignment solver cap {cap}")]
    Capacity { n: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("energy evaluation failed at particle {index}: {reason}")]
    Evaluation { index: usize, reason: String },
    #[error("direction field is not aligned with the ensemble")]
    Alignment,
    #[error("perturbation sampling produced {0} consecutive degenerate pairs")]
    Sampling(usize),
    #[error("inner solver did not converge after {iterations} iterations (best residual {residual:e})")]
    InnerSolver { iterations: usize, residual: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("check not applicable: {0}")]
    Applicability(String),
    #[error("invalid sweep plan: {0}")]
    Plan(String),
    #[error("order fit failed: {0}")]
    Fit(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WgError>;
