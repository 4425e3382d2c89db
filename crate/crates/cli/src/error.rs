use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_DISAGREEMENT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Market(#[from] sdarb::market_data::MarketError),
    #[error(transparent)]
    State(#[from] sdarb::state_probability::StateError),
    #[error(transparent)]
    Formulation(#[from] sdarb::formulation::FormulationError),
    #[error(transparent)]
    Backtest(#[from] sdarb::backtest::BacktestError),
    #[error(transparent)]
    Diagnostics(#[from] sdarb::diagnostics::DiagnosticsError),
    #[error(transparent)]
    Oracle(#[from] sdarb::dominance_oracle::OracleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{count} task(s) failed validation")]
    TaskFailures { count: usize },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("oracle disagreement: {0}")]
    Disagreement(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Disagreement(_) => EXIT_DISAGREEMENT,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<sdarb::solver::SolverError> for CliError {
    fn from(e: sdarb::solver::SolverError) -> Self {
        CliError::Solver(e.to_string())
    }
}
