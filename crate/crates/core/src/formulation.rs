//! Assembly of the dominance-constrained layover programs.
//!
//! Variables are laid out as `alpha` (long positions, m), `beta` (short
//! positions, m), `xi` (n, absent from LP_STAR and LP_COMBINED) and `psi`
//! (n x n, row-major: `psi[j * n + k]`). Plain position caps are stored as
//! variable bounds but still counted as polytope rows.

use std::ops::Range;

use sdarb_lp::{Basis, LinearProgram, ProblemBuilder, RowKind, Sense, VarStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::MarketSnapshot;
use crate::state_probability::StateGrid;

#[derive(Debug, Error, PartialEq)]
pub enum FormulationError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty snapshot or grid")]
    Empty,
    #[error("unknown formulation {0:?}")]
    UnknownTag(String),
    #[error("model error: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulationTag {
    Lp,
    LpStar,
    LpCombined,
    Milp,
}

impl FormulationTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FormulationTag::Lp => "lp",
            FormulationTag::LpStar => "lp_star",
            FormulationTag::LpCombined => "lp_combined",
            FormulationTag::Milp => "milp",
        }
    }

    pub fn is_integer(self) -> bool {
        self == FormulationTag::Milp
    }
}

impl std::str::FromStr for FormulationTag {
    type Err = FormulationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(FormulationTag::Lp),
            "lp_star" | "lp*" => Ok(FormulationTag::LpStar),
            "lp_combined" => Ok(FormulationTag::LpCombined),
            "milp" => Ok(FormulationTag::Milp),
            other => Err(FormulationError::UnknownTag(other.to_string())),
        }
    }
}

/// Option payoffs at the grid atoms, `m x n`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub m: usize,
    pub n: usize,
    pub theta: Vec<f64>,
}

impl PayoffMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.theta[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.n..(i + 1) * self.n]
    }
}

pub fn build_payoff_matrix(snapshot: &MarketSnapshot, grid: &StateGrid) -> Result<PayoffMatrix, FormulationError> {
    if snapshot.quotes.is_empty() || grid.is_empty() {
        return Err(FormulationError::Empty);
    }
    let n = grid.len();
    let mut theta = Vec::with_capacity(snapshot.quotes.len() * n);
    for q in &snapshot.quotes {
        theta.extend(grid.atoms.iter().map(|&x| q.payoff(x)));
    }
    Ok(PayoffMatrix {
        m: snapshot.quotes.len(),
        n,
        theta,
    })
}

/// Strictly lower triangular `T[j][k] = x_j - x_k` for `j > k`.
pub fn build_t(atoms: &[f64]) -> Vec<Vec<f64>> {
    let n = atoms.len();
    (0..n)
        .map(|j| (0..n).map(|k| if j > k { atoms[j] - atoms[k] } else { 0.0 }).collect())
        .collect()
}

/// Strictly lower triangular matrix of ones.
pub fn build_s(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| (0..n).map(|k| if j > k { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `A alpha + B beta (<= or =) c`. The first `2m` rows are the plain caps
/// `alpha_i <= v_i` and `beta_i <= w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub equality: Vec<bool>,
    pub plain_rows: usize,
}

impl Polytope {
    pub fn num_rows(&self) -> usize {
        self.c.len()
    }

    pub fn long_caps(&self) -> &[f64] {
        &self.c[..self.plain_rows / 2]
    }

    pub fn short_caps(&self) -> &[f64] {
        &self.c[self.plain_rows / 2..self.plain_rows]
    }

    /// Membership with absolute tolerance `tol`, including nonnegativity.
    pub fn contains(&self, alpha: &[f64], beta: &[f64], tol: f64) -> bool {
        if alpha.iter().chain(beta).any(|&x| x < -tol) {
            return false;
        }
        (0..self.num_rows()).all(|r| {
            let lhs: f64 = self.a[r].iter().zip(alpha).map(|(a, x)| a * x).sum::<f64>()
                + self.b[r].iter().zip(beta).map(|(b, x)| b * x).sum::<f64>();
            if self.equality[r] {
                (lhs - self.c[r]).abs() <= tol
            } else {
                lhs <= self.c[r] + tol
            }
        })
    }
}

/// Plain caps, plus (when `zero_payoff_outside`) the four equalities that
/// force zero net call and put positions weighted by one and by strike, so
/// that the layover pays nothing below the lowest or above the highest
/// strike.
pub fn build_polytope(
    snapshot: &MarketSnapshot,
    v: &[f64],
    w: &[f64],
    zero_payoff_outside: bool,
) -> Result<Polytope, FormulationError> {
    let m = snapshot.quotes.len();
    if v.len() != m || w.len() != m {
        return Err(FormulationError::Dimension(format!(
            "{m} options but {} long caps and {} short caps",
            v.len(),
            w.len()
        )));
    }
    let mut p = Polytope {
        a: Vec::new(),
        b: Vec::new(),
        c: Vec::new(),
        equality: Vec::new(),
        plain_rows: 2 * m,
    };
    let unit = |i: usize| {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        e
    };
    for (i, &cap) in v.iter().enumerate() {
        p.a.push(unit(i));
        p.b.push(vec![0.0; m]);
        p.c.push(cap);
        p.equality.push(false);
    }
    for (i, &cap) in w.iter().enumerate() {
        p.a.push(vec![0.0; m]);
        p.b.push(unit(i));
        p.c.push(cap);
        p.equality.push(false);
    }
    if zero_payoff_outside {
        let d: Vec<f64> = snapshot.quotes.iter().map(|q| q.kind.call_indicator()).collect();
        let s: Vec<f64> = snapshot.quotes.iter().map(|q| q.strike).collect();
        let rows: [Vec<f64>; 4] = [
            (0..m).map(|i| d[i] * s[i]).collect(),
            d.clone(),
            (0..m).map(|i| (1.0 - d[i]) * s[i]).collect(),
            (0..m).map(|i| 1.0 - d[i]).collect(),
        ];
        for row in rows {
            p.b.push(row.iter().map(|x| -x).collect());
            p.a.push(row);
            p.c.push(0.0);
            p.equality.push(true);
        }
    }
    Ok(p)
}

/// Long and short option positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Portfolio {
    pub fn zero(m: usize) -> Self {
        Self {
            alpha: vec![0.0; m],
            beta: vec![0.0; m],
        }
    }

    pub fn net(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a - b).collect()
    }

    /// `-ask . alpha + bid . beta`.
    pub fn premium(&self, snapshot: &MarketSnapshot) -> f64 {
        snapshot
            .quotes
            .iter()
            .zip(self.alpha.iter().zip(&self.beta))
            .map(|(q, (a, b))| -q.ask * a + q.bid * b)
            .sum()
    }

    pub fn payoff_at(&self, snapshot: &MarketSnapshot, level: f64) -> f64 {
        snapshot
            .quotes
            .iter()
            .zip(self.alpha.iter().zip(&self.beta))
            .map(|(q, (a, b))| (a - b) * q.payoff(level))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub alpha: Range<usize>,
    pub beta: Range<usize>,
    pub xi: Option<Range<usize>>,
    pub psi: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowBlock {
    /// Rows of psi sum to one.
    PsiRowSums,
    /// `xi - psi^T mu = 0`.
    XiDefinition,
    /// `T xi <= T mu` (LP) or `S xi <= S mu` (MILP).
    Dominance,
    /// `psi x - theta^T (alpha - beta) <= x`.
    Majorization,
    /// `psi mu <= T mu` (LP_STAR).
    ShortfallBudget,
    /// `-psi_kj - theta_j^T (alpha - beta) <= x_j - x_k` (LP_STAR).
    Shortfall,
    /// `T psi^T mu <= T mu` (LP_COMBINED).
    CombinedDominance,
    /// Polytope rows that are not plain caps.
    Polytope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoverProblem {
    pub tag: FormulationTag,
    pub n: usize,
    pub m: usize,
    /// Polytope row count, plain caps included.
    pub ell: usize,
    /// Plain caps stored as variable bounds.
    pub bound_rows: usize,
    pub program: LinearProgram,
    pub layout: VariableLayout,
    pub grid: StateGrid,
    pub row_blocks: Vec<(RowBlock, Range<usize>)>,
}

impl LayoverProblem {
    pub fn portfolio(&self, x: &[f64]) -> Portfolio {
        Portfolio {
            alpha: x[self.layout.alpha.clone()].iter().map(|v| v.max(0.0)).collect(),
            beta: x[self.layout.beta.clone()].iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn block(&self, block: RowBlock) -> Option<Range<usize>> {
        self.row_blocks.iter().find(|(b, _)| *b == block).map(|(_, r)| r.clone())
    }

    /// The feasible starting point `alpha = beta = 0, xi = mu, psi = I`.
    /// LP_STAR instead uses `psi_kj = (x_k - x_j)^+`.
    pub fn warm_start(&self) -> Vec<f64> {
        let n = self.n;
        let grid = &self.grid;
        let mut x = vec![0.0; self.program.num_columns()];
        if let Some(xi) = &self.layout.xi {
            for (j, col) in xi.clone().enumerate() {
                x[col] = grid.probs[j];
            }
        }
        for j in 0..n {
            for k in 0..n {
                let col = self.layout.psi.start + j * n + k;
                x[col] = match self.tag {
                    FormulationTag::LpStar => (grid.atoms[j] - grid.atoms[k]).max(0.0),
                    _ => f64::from(u8::from(j == k)),
                };
            }
        }
        x
    }

    /// Starting basis for LP_STAR: each `psi_kj` with `x_k > x_j` is basic in
    /// its own shortfall row, which makes that row tight at the zero
    /// portfolio. Other formulations start from the slack basis.
    pub fn crash_basis(&self) -> Option<Basis> {
        if self.tag != FormulationTag::LpStar {
            return None;
        }
        let rows = self.block(RowBlock::Shortfall)?;
        let ncols = self.program.num_columns();
        let mut status: Vec<VarStatus> = self
            .program
            .columns
            .iter()
            .map(|c| {
                if c.lower.is_finite() && c.upper.is_finite() && c.cost > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                }
            })
            .collect();
        status.extend(std::iter::repeat_n(VarStatus::Basic, self.program.num_rows()));
        let n = self.n;
        for j in 0..n {
            for k in j + 1..n {
                status[self.layout.psi.start + k * n + j] = VarStatus::Basic;
                status[ncols + rows.start + j * n + k] = VarStatus::AtUpper;
            }
        }
        Some(Basis { status })
    }

    /// JSON map from MPS names to variable blocks and indices.
    pub fn sidecar(&self) -> serde_json::Value {
        use serde_json::json;
        let n = self.n;
        let mut columns = serde_json::Map::new();
        for (idx, c) in self.program.columns.iter().enumerate() {
            let v = if self.layout.alpha.contains(&idx) {
                json!({"block": "alpha", "option": idx - self.layout.alpha.start})
            } else if self.layout.beta.contains(&idx) {
                json!({"block": "beta", "option": idx - self.layout.beta.start})
            } else if self.layout.xi.as_ref().is_some_and(|r| r.contains(&idx)) {
                json!({"block": "xi", "state": idx - self.layout.xi.as_ref().unwrap().start})
            } else {
                let f = idx - self.layout.psi.start;
                json!({"block": "psi", "state_row": f / n, "state_col": f % n})
            };
            columns.insert(c.name.clone(), v);
        }
        let blocks: Vec<_> = self
            .row_blocks
            .iter()
            .map(|(b, r)| {
                json!({"block": b, "first": self.program.rows.get(r.start).map(|x| x.name.clone()), "count": r.len()})
            })
            .collect();
        json!({
            "formulation": self.tag,
            "n": self.n,
            "m": self.m,
            "ell": self.ell,
            "objective_sense": "max",
            "columns": columns,
            "row_blocks": blocks,
        })
    }
}

/// Builds the program for `tag`. `ask` and `bid` are the long and short
/// prices of the options.
pub fn assemble(
    tag: FormulationTag,
    payoff: &PayoffMatrix,
    grid: &StateGrid,
    polytope: &Polytope,
    ask: &[f64],
    bid: &[f64],
) -> Result<LayoverProblem, FormulationError> {
    let (m, n) = (payoff.m, payoff.n);
    if grid.len() != n || ask.len() != m || bid.len() != m {
        return Err(FormulationError::Dimension(format!(
            "payoff {m}x{n}, grid {}, prices {}/{}",
            grid.len(),
            ask.len(),
            bid.len()
        )));
    }
    if polytope.a.iter().chain(&polytope.b).any(|r| r.len() != m) || polytope.plain_rows != 2 * m {
        return Err(FormulationError::Dimension("polytope does not match option count".into()));
    }
    let x = &grid.atoms;
    let mu = &grid.probs;
    let mut b = ProblemBuilder::new(tag.as_str(), Sense::Maximize);
    let long_caps = polytope.long_caps();
    let short_caps = polytope.short_caps();
    let alpha0 = b.num_columns();
    for i in 0..m {
        b.add_column(format!("A{i}"), -ask[i], 0.0, long_caps[i], false);
    }
    let beta0 = b.num_columns();
    for i in 0..m {
        b.add_column(format!("B{i}"), bid[i], 0.0, short_caps[i], false);
    }
    let has_xi = matches!(tag, FormulationTag::Lp | FormulationTag::Milp);
    let xi0 = b.num_columns();
    if has_xi {
        for j in 0..n {
            b.add_column(format!("X{j}"), 0.0, 0.0, f64::INFINITY, false);
        }
    }
    let psi0 = b.num_columns();
    let psi_upper = if tag.is_integer() { 1.0 } else { f64::INFINITY };
    for f in 0..n * n {
        b.add_column(format!("P{f}"), 0.0, 0.0, psi_upper, tag.is_integer());
    }
    let psi = |j: usize, k: usize| psi0 + j * n + k;
    let mut blocks = Vec::new();
    let mut row_name = 0usize;
    let mut next_name = || {
        let s = format!("C{row_name}");
        row_name += 1;
        s
    };
    let open = |b: &ProblemBuilder, blocks: &mut Vec<(RowBlock, Range<usize>)>, blk: RowBlock| {
        let r = b.num_rows();
        blocks.push((blk, r..r));
    };
    let close = |b: &ProblemBuilder, blocks: &mut Vec<(RowBlock, Range<usize>)>| {
        let last = blocks.last_mut().expect("open block");
        last.1.end = b.num_rows();
    };
    // theta^T (alpha - beta) entries for state j, with a given sign
    let payoff_entries = |j: usize, sign: f64| -> Vec<(usize, f64)> {
        let mut e = Vec::with_capacity(2 * m);
        for i in 0..m {
            let t = payoff.get(i, j);
            if t != 0.0 {
                e.push((alpha0 + i, sign * t));
                e.push((beta0 + i, -sign * t));
            }
        }
        e
    };
    let t_mu: Vec<f64> = (0..n)
        .map(|j| (0..j).map(|k| (x[j] - x[k]) * mu[k]).sum())
        .collect();

    match tag {
        FormulationTag::Lp | FormulationTag::Milp | FormulationTag::LpCombined => {
            open(&b, &mut blocks, RowBlock::PsiRowSums);
            for j in 0..n {
                b.add_row(next_name(), RowKind::Eq, 1.0, (0..n).map(|k| (psi(j, k), 1.0)).collect::<Vec<_>>());
            }
            close(&b, &mut blocks);
            if has_xi {
                open(&b, &mut blocks, RowBlock::XiDefinition);
                for k in 0..n {
                    let mut e = vec![(xi0 + k, 1.0)];
                    e.extend((0..n).map(|j| (psi(j, k), -mu[j])));
                    b.add_row(next_name(), RowKind::Eq, 0.0, e);
                }
                close(&b, &mut blocks);
                open(&b, &mut blocks, RowBlock::Dominance);
                for j in 0..n {
                    let (e, rhs): (Vec<(usize, f64)>, f64) = if tag == FormulationTag::Milp {
                        ((0..j).map(|k| (xi0 + k, 1.0)).collect(), (0..j).map(|k| mu[k]).sum())
                    } else {
                        ((0..j).map(|k| (xi0 + k, x[j] - x[k])).collect(), t_mu[j])
                    };
                    b.add_row(next_name(), RowKind::Le, rhs, e);
                }
                close(&b, &mut blocks);
            } else {
                open(&b, &mut blocks, RowBlock::CombinedDominance);
                for j in 0..n {
                    let mut e = Vec::with_capacity(j * n);
                    for k in 0..j {
                        for l in 0..n {
                            e.push((psi(l, k), (x[j] - x[k]) * mu[l]));
                        }
                    }
                    b.add_row(next_name(), RowKind::Le, t_mu[j], e);
                }
                close(&b, &mut blocks);
            }
            open(&b, &mut blocks, RowBlock::Majorization);
            for j in 0..n {
                let mut e: Vec<(usize, f64)> = (0..n).map(|k| (psi(j, k), x[k])).collect();
                e.extend(payoff_entries(j, -1.0));
                b.add_row(next_name(), RowKind::Le, x[j], e);
            }
            close(&b, &mut blocks);
        }
        FormulationTag::LpStar => {
            open(&b, &mut blocks, RowBlock::ShortfallBudget);
            for k in 0..n {
                b.add_row(next_name(), RowKind::Le, t_mu[k], (0..n).map(|j| (psi(k, j), mu[j])).collect::<Vec<_>>());
            }
            close(&b, &mut blocks);
            open(&b, &mut blocks, RowBlock::Shortfall);
            for j in 0..n {
                let base = payoff_entries(j, -1.0);
                for k in 0..n {
                    let mut e = Vec::with_capacity(base.len() + 1);
                    e.push((psi(k, j), -1.0));
                    e.extend_from_slice(&base);
                    b.add_row(next_name(), RowKind::Le, x[j] - x[k], e);
                }
            }
            close(&b, &mut blocks);
        }
    }
    open(&b, &mut blocks, RowBlock::Polytope);
    for r in polytope.plain_rows..polytope.num_rows() {
        let mut e = Vec::with_capacity(2 * m);
        for i in 0..m {
            e.push((alpha0 + i, polytope.a[r][i]));
            e.push((beta0 + i, polytope.b[r][i]));
        }
        let kind = if polytope.equality[r] { RowKind::Eq } else { RowKind::Le };
        b.add_row(next_name(), kind, polytope.c[r], e);
    }
    close(&b, &mut blocks);

    let ncols = b.num_columns();
    let program = b.build().map_err(|e| FormulationError::Model(e.to_string()))?;
    Ok(LayoverProblem {
        tag,
        n,
        m,
        ell: polytope.num_rows(),
        bound_rows: polytope.plain_rows,
        program,
        layout: VariableLayout {
            alpha: alpha0..beta0,
            beta: beta0..beta0 + m,
            xi: has_xi.then_some(xi0..xi0 + n),
            psi: psi0..ncols,
        },
        grid: grid.clone(),
        row_blocks: blocks,
    })
}

/// Snapshot-level convenience: payoff matrix, caps at depth `scale`,
/// polytope and program.
pub fn build_problem(
    snapshot: &MarketSnapshot,
    grid: &StateGrid,
    scale: i64,
    zero_payoff_outside: bool,
    tag: FormulationTag,
) -> Result<LayoverProblem, FormulationError> {
    let payoff = build_payoff_matrix(snapshot, grid)?;
    let (v, w) = crate::market_data::apply_depth_constraint(snapshot, scale)
        .map_err(|e| FormulationError::Dimension(e.to_string()))?;
    let poly = build_polytope(snapshot, &v, &w, zero_payoff_outside)?;
    let ask: Vec<f64> = snapshot.quotes.iter().map(|q| q.ask).collect();
    let bid: Vec<f64> = snapshot.quotes.iter().map(|q| q.bid).collect();
    assemble(tag, &payoff, grid, &poly, &ask, &bid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulationStats {
    /// Constraint rows including plain caps stored as bounds.
    pub rows: usize,
    pub variables: usize,
    /// Matrix nonzeros including one per plain cap.
    pub nonzeros: usize,
    /// Nonzeros in the blocks that encode the dominance relation: the
    /// `xi` definition and `T xi <= T mu` rows for LP and MILP, the combined
    /// rows for LP_COMBINED and the budget rows for LP_STAR.
    pub dominance_nonzeros: usize,
}

pub fn formulation_stats(problem: &LayoverProblem) -> FormulationStats {
    let p = &problem.program;
    let mut row_nnz = vec![0usize; p.num_rows()];
    for j in 0..p.num_columns() {
        for (i, _) in p.matrix.column(j) {
            row_nnz[i] += 1;
        }
    }
    let in_blocks = |blocks: &[RowBlock]| -> usize {
        problem
            .row_blocks
            .iter()
            .filter(|(b, _)| blocks.contains(b))
            .map(|(_, r)| row_nnz[r.clone()].iter().sum::<usize>())
            .sum()
    };
    let dominance_nonzeros = in_blocks(&[
        RowBlock::XiDefinition,
        RowBlock::Dominance,
        RowBlock::CombinedDominance,
        RowBlock::ShortfallBudget,
    ]);
    FormulationStats {
        rows: p.num_rows() + problem.bound_rows,
        variables: p.num_columns(),
        nonzeros: p.num_nonzeros() + problem.bound_rows,
        dominance_nonzeros,
    }
}
