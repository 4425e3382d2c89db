//! Solving layover programs with the in-house simplex and branch-and-bound
//! engines, MPS export, and an external backend behind a file boundary.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use sdarb_lp::{
    solve_from, solve_mip, write_mps, BranchRule, ExternalSolver, LpError, LpStatus, MipOptions, MipStatus, NodeOrder,
    SimplexOptions,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{FormulationTag, LayoverProblem};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("{operation} does not accept formulation {tag:?}")]
    WrongFormulation { operation: &'static str, tag: FormulationTag },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal premium {internal} and external premium {external} differ by more than {tolerance}")]
    CrossCheck { internal: f64, external: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn has_portfolio(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelection {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    MostFractional,
    FirstFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub time_limit_secs: f64,
    pub anti_cycling: bool,
    pub node_selection: NodeSelection,
    pub branching: Branching,
    /// Absolute premium gap at which branch-and-bound stops.
    pub mip_gap: f64,
    /// Recorded for reproducibility; the engines are deterministic and draw
    /// no random numbers.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            time_limit_secs: 14_400.0,
            anti_cycling: true,
            node_selection: NodeSelection::BestBound,
            branching: Branching::MostFractional,
            mip_gap: 1e-10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.feasibility_tol > 0.0 && self.optimality_tol > 0.0 && self.mip_gap >= 0.0) {
            return Err(SolverError::Config("tolerances must be positive".into()));
        }
        if !(self.time_limit_secs >= 0.0) {
            return Err(SolverError::Config("time limit must be nonnegative".into()));
        }
        Ok(())
    }

    fn simplex_options(&self, deadline: Option<Instant>) -> SimplexOptions {
        SimplexOptions {
            primal_tol: self.feasibility_tol,
            dual_tol: self.optimality_tol,
            anti_cycling: self.anti_cycling,
            deadline,
            ..SimplexOptions::default()
        }
    }

    fn time_limit(&self) -> Duration {
        Duration::try_from_secs_f64(self.time_limit_secs).unwrap_or(Duration::MAX)
    }
}

/// One incumbent improvement. `elapsed_secs` is wall-clock and therefore kept
/// out of serialized results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    #[serde(skip)]
    pub elapsed_secs: f64,
    pub nodes: usize,
    pub premium: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub formulation: FormulationTag,
    pub status: SolveStatus,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub premium: f64,
    pub incumbent_trace: Vec<TracePoint>,
    /// Best upper bound on the premium.
    pub bound: f64,
    pub iterations: usize,
    pub nodes: usize,
}

impl SolveResult {
    fn empty(problem: &LayoverProblem, status: SolveStatus) -> Self {
        Self {
            formulation: problem.tag,
            status,
            alpha: vec![0.0; problem.m],
            beta: vec![0.0; problem.m],
            premium: f64::NAN,
            incumbent_trace: Vec::new(),
            bound: f64::NAN,
            iterations: 0,
            nodes: 0,
        }
    }

    pub fn portfolio(&self) -> crate::formulation::Portfolio {
        crate::formulation::Portfolio {
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
        }
    }
}

/// Fills positions (clamped at zero) and the premium recomputed from the
/// clamped positions.
fn fill_portfolio(problem: &LayoverProblem, x: &[f64], out: &mut SolveResult) {
    let pf = problem.portfolio(x);
    let cols = &problem.program.columns;
    out.premium = pf
        .alpha
        .iter()
        .zip(problem.layout.alpha.clone())
        .chain(pf.beta.iter().zip(problem.layout.beta.clone()))
        .map(|(v, j)| v * cols[j].cost)
        .sum();
    out.alpha = pf.alpha;
    out.beta = pf.beta;
}

pub fn solve_lp(problem: &LayoverProblem, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    if problem.tag.is_integer() {
        return Err(SolverError::WrongFormulation {
            operation: "solve_lp",
            tag: problem.tag,
        });
    }
    config.validate()?;
    let deadline = Instant::now().checked_add(config.time_limit());
    let sol = solve_from(&problem.program, &config.simplex_options(deadline), problem.crash_basis().as_ref());
    let status = match sol.status {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
        LpStatus::TimeLimit | LpStatus::IterationLimit | LpStatus::NumericalFailure => SolveStatus::Error,
    };
    if status == SolveStatus::Error {
        log::error!("{} solve ended with {:?}", problem.tag.as_str(), sol.status);
    }
    let mut out = SolveResult::empty(problem, status);
    out.iterations = sol.iterations;
    if status == SolveStatus::Optimal {
        fill_portfolio(problem, &sol.x, &mut out);
        out.bound = sol.objective;
    }
    Ok(out)
}

/// Branch-and-bound over the binary transport matrix. Without an explicit
/// warm start the zero portfolio with identity matrix is used.
pub fn solve_milp(
    problem: &LayoverProblem,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<SolveResult, SolverError> {
    if problem.tag != FormulationTag::Milp {
        return Err(SolverError::WrongFormulation {
            operation: "solve_milp",
            tag: problem.tag,
        });
    }
    config.validate()?;
    let opts = MipOptions {
        simplex: config.simplex_options(None),
        time_limit: Some(config.time_limit()),
        node_limit: None,
        node_order: match config.node_selection {
            NodeSelection::BestBound => NodeOrder::BestBound,
            NodeSelection::DepthFirst => NodeOrder::DepthFirst,
        },
        branch_rule: match config.branching {
            Branching::MostFractional => BranchRule::MostFractional,
            Branching::FirstFractional => BranchRule::FirstFractional,
        },
        mip_gap: config.mip_gap,
        integrality_tol: 1e-7,
        warm_start: Some(warm_start.map_or_else(|| problem.warm_start(), <[f64]>::to_vec)),
    };
    let sol = solve_mip(&problem.program, &opts);
    let status = match (sol.status, sol.x.is_some()) {
        (MipStatus::Optimal, _) => SolveStatus::Optimal,
        (MipStatus::TimeLimit | MipStatus::NodeLimit, true) => SolveStatus::FeasibleTimeLimit,
        (MipStatus::Infeasible, _) => SolveStatus::Infeasible,
        (MipStatus::Unbounded, _) => SolveStatus::Unbounded,
        _ => SolveStatus::Error,
    };
    let mut out = SolveResult::empty(problem, status);
    out.iterations = sol.lp_iterations;
    out.nodes = sol.nodes;
    out.bound = sol.bound;
    out.incumbent_trace = sol
        .trace
        .iter()
        .map(|t| TracePoint {
            elapsed_secs: t.elapsed,
            nodes: t.nodes,
            premium: t.incumbent,
            bound: t.bound,
        })
        .collect();
    for t in &out.incumbent_trace {
        log::debug!(
            "milp trace: {:.3}s nodes={} premium={:e} bound={:e}",
            t.elapsed_secs,
            t.nodes,
            t.premium,
            t.bound
        );
    }
    if let Some(x) = &sol.x {
        fill_portfolio(problem, x, &mut out);
    }
    Ok(out)
}

/// Dispatches on the formulation tag.
pub fn solve_problem(problem: &LayoverProblem, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    match problem.tag {
        FormulationTag::Milp => solve_milp(problem, config, None),
        _ => solve_lp(problem, config),
    }
}

pub fn write_problem_mps<W: Write>(problem: &LayoverProblem, out: W) -> Result<(), SolverError> {
    write_mps(&problem.program, out)?;
    Ok(())
}

/// Writes the MPS file and, next to it, the sidecar JSON with the same stem.
pub fn export_mps(problem: &LayoverProblem, path: &Path) -> Result<(), SolverError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_problem_mps(problem, &mut w)?;
    w.flush()?;
    let sidecar = serde_json::to_string_pretty(&problem.sidecar()).expect("sidecar serializes");
    std::fs::write(path.with_extension("json"), sidecar + "\n")?;
    Ok(())
}

/// Solves through an external process. The status reported by the backend
/// is trusted only for optimality; the portfolio is re-checked against the
/// program's rows.
pub fn solve_external(
    problem: &LayoverProblem,
    backend: &ExternalSolver,
    config: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    let sol = backend.solve(&problem.program)?;
    let status = match sol.status.to_ascii_lowercase().as_str() {
        "optimal" => SolveStatus::Optimal,
        "feasible_time_limit" | "time_limit" => SolveStatus::FeasibleTimeLimit,
        "infeasible" => SolveStatus::Infeasible,
        "unbounded" => SolveStatus::Unbounded,
        _ => SolveStatus::Error,
    };
    let mut out = SolveResult::empty(problem, status);
    if status.has_portfolio() {
        let viol = problem.program.max_violation(&sol.x);
        if viol > config.feasibility_tol.max(1e-7) {
            log::error!("external solution violates rows by {viol:e}");
            out.status = SolveStatus::Error;
            return Ok(out);
        }
        fill_portfolio(problem, &sol.x, &mut out);
        out.bound = sol.objective;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub internal: SolveResult,
    pub external: SolveResult,
    pub difference: f64,
}

/// Solves internally and externally and requires premiums within `tolerance`.
pub fn cross_check(
    problem: &LayoverProblem,
    backend: &ExternalSolver,
    config: &SolverConfig,
    tolerance: f64,
) -> Result<CrossCheck, SolverError> {
    let internal = solve_problem(problem, config)?;
    let external = solve_external(problem, backend, config)?;
    let difference = if internal.status == external.status && !internal.status.has_portfolio() {
        0.0
    } else {
        (internal.premium - external.premium).abs()
    };
    if !(difference < tolerance) {
        return Err(SolverError::CrossCheck {
            internal: internal.premium,
            external: external.premium,
            tolerance,
        });
    }
    Ok(CrossCheck {
        internal,
        external,
        difference,
    })
}
