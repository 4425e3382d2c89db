//! Problem representation shared by the simplex, branch-and-bound and MPS code.

use serde::{Deserialize, Serialize};

use crate::sparse::CscMatrix;
use crate::LpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Constraint row type: `activity <= rhs`, `activity >= rhs` or `activity == rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub kind: RowKind,
    pub rhs: f64,
}

impl Row {
    /// Bounds on the row activity implied by the row kind.
    pub fn activity_bounds(&self) -> (f64, f64) {
        match self.kind {
            RowKind::Le => (f64::NEG_INFINITY, self.rhs),
            RowKind::Ge => (self.rhs, f64::INFINITY),
            RowKind::Eq => (self.rhs, self.rhs),
        }
    }
}

/// A linear (or mixed-integer linear) program in column-wise sparse form.
///
/// Rows are stored without their coefficients; coefficients live in the
/// column-compressed `matrix`, whose column `j` belongs to `columns[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub name: String,
    pub sense: Sense,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    pub matrix: CscMatrix,
}

impl LinearProgram {
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn has_integers(&self) -> bool {
        self.columns.iter().any(|c| c.integer)
    }

    /// Objective value of `x` in the program's own sense.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Row activities `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.rows.len()];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, a) in self.matrix.column(j) {
                act[i] += a * xj;
            }
        }
        act
    }

    /// Largest bound or row violation of `x`, each measured relative to
    /// `max(1, |bound|)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rel = |viol: f64, bound: f64| viol / bound.abs().max(1.0);
        let mut worst: f64 = 0.0;
        for (c, &v) in self.columns.iter().zip(x) {
            if v < c.lower {
                worst = worst.max(rel(c.lower - v, c.lower));
            }
            if v > c.upper {
                worst = worst.max(rel(v - c.upper, c.upper));
            }
        }
        for (row, a) in self.rows.iter().zip(self.row_activity(x)) {
            let (lo, hi) = row.activity_bounds();
            if a < lo {
                worst = worst.max(rel(lo - a, lo));
            }
            if a > hi {
                worst = worst.max(rel(a - hi, hi));
            }
        }
        worst
    }

    /// Largest integrality violation over integer columns.
    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.columns
            .iter()
            .zip(x)
            .filter(|(c, _)| c.integer)
            .map(|(_, v)| (v - v.round()).abs())
            .fold(0.0, f64::max)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Incremental builder collecting rows as coefficient lists.
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    name: String,
    sense: Sense,
    columns: Vec<Column>,
    rows: Vec<Row>,
    // (row, col, value) triplets in insertion order
    triplets: Vec<(usize, usize, f64)>,
}

impl ProblemBuilder {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Self {
            name: name.into(),
            sense,
            columns: Vec::new(),
            rows: Vec::new(),
            triplets: Vec::new(),
        }
    }

    pub fn add_column(
        &mut self,
        name: impl Into<String>,
        cost: f64,
        lower: f64,
        upper: f64,
        integer: bool,
    ) -> usize {
        self.columns.push(Column {
            name: name.into(),
            cost,
            lower,
            upper,
            integer,
        });
        self.columns.len() - 1
    }

    /// Adds a row; zero coefficients are dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        kind: RowKind,
        rhs: f64,
        entries: impl IntoIterator<Item = (usize, f64)>,
    ) -> usize {
        let r = self.rows.len();
        self.rows.push(Row {
            name: name.into(),
            kind,
            rhs,
        });
        self.triplets.extend(
            entries
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|(c, v)| (r, c, v)),
        );
        r
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn build(self) -> Result<LinearProgram, LpError> {
        let ncols = self.columns.len();
        let nrows = self.rows.len();
        for &(r, c, v) in &self.triplets {
            if c >= ncols {
                return Err(LpError::InvalidModel(format!(
                    "row {} references column {} of {}",
                    self.rows[r].name, c, ncols
                )));
            }
            if !v.is_finite() {
                return Err(LpError::InvalidModel(format!(
                    "non-finite coefficient in row {}",
                    self.rows[r].name
                )));
            }
        }
        for c in &self.columns {
            if c.lower > c.upper || c.lower.is_nan() || c.upper.is_nan() {
                return Err(LpError::InvalidModel(format!(
                    "column {} has bounds [{}, {}]",
                    c.name, c.lower, c.upper
                )));
            }
        }
        let matrix = CscMatrix::from_triplets(nrows, ncols, &self.triplets);
        Ok(LinearProgram {
            name: self.name,
            sense: self.sense,
            columns: self.columns,
            rows: self.rows,
            matrix,
        })
    }
}
