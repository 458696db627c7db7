use std::fmt;

use thiserror::Error;

use crate::market::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

/// One violated inequality inside an infeasibility certificate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ViolatedInequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for ViolatedInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (lhs {:.6e} > rhs {:.6e})", self.name, self.lhs, self.rhs)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid market specification:\n{0}")]
    Validation(ValidationReport),

    #[error("domain error at good {good}: {message}")]
    Domain { good: usize, message: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("unsupported utility: {0}")]
    UnsupportedUtility(String),

    #[error("degenerate quantity: {0}")]
    Degenerate(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: u64, residual: f64, history: Vec<f64> },

    #[error("infeasible parameter plan: {}", .violated.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Infeasible { violated: Vec<ViolatedInequality> },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("simulation failure at t={t}: {message}")]
    Simulation { t: f64, message: String },

    #[error("trace schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
