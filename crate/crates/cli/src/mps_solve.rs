//! `mps-solve`: a standalone MPS backend speaking the external solver file
//! contract. It runs the primal simplex only, so a cross-check through it
//! exercises a different pivoting route than the in-process solve.

use std::io::BufReader;
use std::path::Path;

use sdarb_lp::{read_mps, solve, solve_mip, write_solution_file, Algorithm, LpStatus, MipOptions, MipStatus, SimplexOptions, SolutionFile};

use crate::error::CliError;

pub fn run(model: &Path, solution: &Path) -> Result<String, CliError> {
    let file = std::fs::File::open(model).map_err(|e| CliError::io(model, e))?;
    let lp = read_mps(BufReader::new(file)).map_err(|e| CliError::Input {
        path: model.to_path_buf(),
        message: e.to_string(),
    })?;
    let simplex = SimplexOptions {
        algorithm: Algorithm::Primal,
        ..SimplexOptions::default()
    };
    let (status, x, objective) = if lp.has_integers() {
        let sol = solve_mip(
            &lp,
            &MipOptions {
                simplex,
                ..MipOptions::default()
            },
        );
        let status = match sol.status {
            MipStatus::Optimal => "optimal",
            MipStatus::Infeasible => "infeasible",
            MipStatus::Unbounded => "unbounded",
            MipStatus::TimeLimit | MipStatus::NodeLimit if sol.x.is_some() => "feasible_time_limit",
            _ => "error",
        };
        (status, sol.x, sol.objective)
    } else {
        let sol = solve(&lp, &simplex);
        let status = match sol.status {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            _ => "error",
        };
        (status, Some(sol.x), sol.objective)
    };
    let x = x.unwrap_or_else(|| vec![0.0; lp.num_columns()]);
    let out = SolutionFile {
        status: status.to_string(),
        objective: if objective.is_finite() { objective } else { 0.0 },
        x,
    };
    let mut bytes = Vec::new();
    write_solution_file(&lp, &out, &mut bytes).map_err(|e| CliError::Solver(e.to_string()))?;
    crate::io::write_atomic(solution, &bytes)?;
    Ok(out.status)
}
