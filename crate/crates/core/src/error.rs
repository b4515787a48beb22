use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected width {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unknown level {level:?} for variable {variable}")]
    Encoding { variable: String, level: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("class weight error: {0}")]
    Weight(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("split criterion error: {0}")]
    Criterion(String),

    #[error("solver did not converge after {iterations} iterations (last objective {last_objective})")]
    Convergence { iterations: usize, last_objective: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("relevance propagation failed: {0}")]
    Propagation(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("fit failed at lambda {lambda}: {source}")]
    PathCell {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("trainer failed in repetition {repetition}, fold {fold}: {source}")]
    Fold {
        repetition: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid search failed: every one of {cells} cells failed")]
    Search { cells: usize },

    #[error("generator spec error: {0}")]
    Spec(String),

    #[error("unknown model strategy {0:?}")]
    UnknownStrategy(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by caller input rather than by computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Validation(_)
                | Error::Parameter(_)
                | Error::Dimension { .. }
                | Error::Encoding { .. }
                | Error::Split(_)
                | Error::Weight(_)
                | Error::Policy(_)
                | Error::Spec(_)
                | Error::UnknownStrategy(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
