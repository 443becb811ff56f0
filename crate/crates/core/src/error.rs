use thiserror::Error;

use crate::optimizer::InfeasibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty heap")]
    EmptyHeap,

    #[error("incomplete pilot assignment: UE {0} has no pilot")]
    IncompleteAssignment(usize),

    #[error("instance too large for exhaustive search: {0} assignments")]
    InstanceTooLarge(f64),

    #[error("rank-deficient matrix (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("infeasible: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("convex solver failed: {0}")]
    Solver(String),

    #[error("unbounded subproblem")]
    Unbounded,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
