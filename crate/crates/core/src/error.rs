use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator, the learners and the experiment tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("offload of {bits} bits is infeasible at channel gain {gain} (required power is not finite)")]
    InfeasibleOffload { bits: f64, gain: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{learner} diverged at block {block}: {reason}")]
    Divergence {
        learner: String,
        block: usize,
        reason: String,
    },

    #[error("value iteration did not converge within {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
