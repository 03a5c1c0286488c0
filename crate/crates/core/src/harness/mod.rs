//! Network-utility benchmark: instance generation, consensus driver,
//! reference solver and bound-verification tables.

pub mod admm;
pub mod num;
pub mod oracle;
pub mod table;

use thiserror::Error;

use crate::designer::DesignError;
use crate::inner::SolverError;
use crate::problem::ProblemError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}
