use thiserror::Error;

use crate::matcher::MatchResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Raw spectral data does not cover the requested grid.
    #[error("range error: {0}")]
    Range(String),

    /// Malformed input: non-monotone wavelengths, bad CSV header, wrong lengths.
    #[error("format error: {0}")]
    Format(String),

    /// A least-squares system that must have full column rank does not.
    #[error("rank error: {0}")]
    Rank(String),

    /// Argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A model or manifest failed validation; one entry per violation.
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// The bounded least-squares solver hit its iteration cap.
    #[error("bvls did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, best: Vec<f64> },

    /// The complex matcher's objective rose for too many consecutive
    /// iterations. Carries the best iterate seen.
    #[error("objective increased for {streak} consecutive iterations (best objective {:.6e})", .best.objective)]
    Oscillation {
        streak: usize,
        best: Box<MatchResult>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
