//! Stochastic-arbitrage layover portfolios on index options: market data,
//! state distributions, dominance-constrained programs, an independent
//! dominance oracle, backtest statistics and diagnostics.

pub mod backtest;
pub mod diagnostics;
pub mod dominance_oracle;
pub mod formulation;
pub mod market_data;
pub mod quad;
pub mod solver;
pub mod state_probability;
pub mod synthetic;

pub use formulation::{FormulationTag, LayoverProblem, Portfolio};
pub use market_data::{MarketSnapshot, MoneynessFilter, OptionKind, OptionQuote};
pub use solver::{SolveResult, SolveStatus, SolverConfig};
pub use state_probability::{CalibrationParams, SgtParams, StateGrid};
