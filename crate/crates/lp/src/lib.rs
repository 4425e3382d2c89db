//! Sparse linear and mixed-binary programming: a bounded revised simplex,
//! depth-first or best-bound branch-and-bound, and fixed-format MPS
//! interchange with external solvers.

pub mod backend;
pub mod branch;
mod lu;
pub mod model;
pub mod mps;
pub mod simplex;
pub mod sparse;

pub use backend::{read_solution_file, write_solution_file, ExternalSolver, SolutionFile};
pub use branch::{solve_mip, BranchRule, MipOptions, MipSolution, MipStatus, NodeOrder, TraceEntry};
pub use mps::{read_mps, to_mps_string, write_mps};
pub use model::{Column, LinearProgram, ProblemBuilder, Row, RowKind, Sense};
pub use simplex::{solve, solve_from, Algorithm, Basis, LpSolution, LpStatus, SimplexOptions, VarStatus};
pub use sparse::CscMatrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("MPS parse error at line {line}: {message}")]
    MpsParse { line: usize, message: String },
    #[error("solution file error: {0}")]
    SolutionParse(String),
    #[error("external solver failed: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
