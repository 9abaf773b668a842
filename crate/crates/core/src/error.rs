use thiserror::Error;

pub type Result<T, E = McrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum McrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric: {0}")]
    Asymmetric(String),

    #[error("design row requested at t = 0, which has no lagged values")]
    NoLag,

    #[error("design row requested on the diagonal (i = j = {0})")]
    Diagonal(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("normal equations are rank deficient (condition number {condition:.3e}); near-collinear columns: {}", .columns.join(", "))]
    RankDeficient { condition: f64, columns: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simulation became unstable at t = {t} (|value| > 1e8)")]
    Unstable { t: usize },

    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<McrError>,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl McrError {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ McrError::AtIteration { .. } => e,
            e => McrError::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            McrError::RankDeficient { .. }
            | McrError::Numerical(_)
            | McrError::Unstable { .. }
            | McrError::Consistency(_) => true,
            McrError::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
