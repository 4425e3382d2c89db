//! External solver processes exchanging MPS and solution files.
//!
//! A backend is invoked as `<command> <args...> <model.mps> <solution.txt>`
//! and must write one `name value` pair per line for every column, plus the
//! reserved keys `STATUS` and `OBJECTIVE`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::model::LinearProgram;
use crate::mps::write_mps;
use crate::LpError;

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub status: String,
    pub objective: f64,
    /// Column values in the program's column order.
    pub x: Vec<f64>,
}

pub fn write_solution_file<W: Write>(
    lp: &LinearProgram,
    sol: &SolutionFile,
    out: W,
) -> Result<(), LpError> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "STATUS {}", sol.status)?;
    writeln!(w, "OBJECTIVE {:e}", sol.objective)?;
    for (c, v) in lp.columns.iter().zip(&sol.x) {
        writeln!(w, "{} {:e}", c.name, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a solution file against `lp`. Every column must appear exactly
/// once and no unknown names are allowed.
pub fn read_solution_file<R: BufRead>(lp: &LinearProgram, input: R) -> Result<SolutionFile, LpError> {
    let bad = |m: String| LpError::SolutionParse(m);
    let index: HashMap<&str, usize> = lp
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| (c.name.as_str(), j))
        .collect();
    let mut x = vec![f64::NAN; lp.num_columns()];
    let mut seen = vec![false; lp.num_columns()];
    let mut status = None;
    let mut objective = None;
    let mut count = 0usize;
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (key, val) = match (it.next(), it.next(), it.next()) {
            (Some(k), Some(v), None) => (k, v),
            _ => return Err(bad(format!("line {}: expected `name value`", ln + 1))),
        };
        match key {
            "STATUS" => status = Some(val.to_string()),
            "OBJECTIVE" => {
                objective = Some(
                    val.parse::<f64>()
                        .map_err(|_| bad(format!("line {}: bad objective {val:?}", ln + 1)))?,
                )
            }
            name => {
                let j = *index
                    .get(name)
                    .ok_or_else(|| bad(format!("line {}: unknown variable {name}", ln + 1)))?;
                if seen[j] {
                    return Err(bad(format!("line {}: duplicate variable {name}", ln + 1)));
                }
                seen[j] = true;
                count += 1;
                x[j] = val
                    .parse::<f64>()
                    .map_err(|_| bad(format!("line {}: bad value {val:?}", ln + 1)))?;
            }
        }
    }
    if count != lp.num_columns() {
        return Err(bad(format!(
            "expected {} variables, found {count}",
            lp.num_columns()
        )));
    }
    Ok(SolutionFile {
        status: status.ok_or_else(|| bad("missing STATUS".into()))?,
        objective: objective.ok_or_else(|| bad("missing OBJECTIVE".into()))?,
        x,
    })
}

#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub command: PathBuf,
    pub args: Vec<String>,
    /// Directory for the exchanged files; a temporary one when `None`.
    pub workdir: Option<PathBuf>,
}

impl ExternalSolver {
    pub fn new(command: impl Into<PathBuf>) -> Self {
        Self {
            command: command.into(),
            args: Vec::new(),
            workdir: None,
        }
    }

    /// Writes `lp`, runs the backend and reads its solution. The objective is
    /// recomputed from the returned point in the program's own sense.
    pub fn solve(&self, lp: &LinearProgram) -> Result<SolutionFile, LpError> {
        let tmp;
        let dir: &Path = match &self.workdir {
            Some(d) => d,
            None => {
                tmp = std::env::temp_dir().join(format!(
                    "sdarb-backend-{}-{}",
                    std::process::id(),
                    unique_suffix()
                ));
                std::fs::create_dir_all(&tmp)?;
                &tmp
            }
        };
        let mps_path = dir.join(format!("{}.mps", sanitize(&lp.name)));
        let sol_path = dir.join(format!("{}.sol", sanitize(&lp.name)));
        write_mps(lp, std::fs::File::create(&mps_path)?)?;
        let out = Command::new(&self.command)
            .args(&self.args)
            .arg(&mps_path)
            .arg(&sol_path)
            .output()
            .map_err(|e| LpError::External(format!("{}: {e}", self.command.display())))?;
        if !out.status.success() {
            return Err(LpError::External(format!(
                "{} exited with {}: {}",
                self.command.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let file = std::fs::File::open(&sol_path)
            .map_err(|e| LpError::External(format!("no solution file: {e}")))?;
        let mut sol = read_solution_file(lp, BufReader::new(file))?;
        sol.objective = lp.objective_value(&sol.x);
        if self.workdir.is_none() {
            let _ = std::fs::remove_dir_all(dir);
        }
        Ok(sol)
    }
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

fn unique_suffix() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    COUNTER.fetch_add(1, Ordering::Relaxed)
}
