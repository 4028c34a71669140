//! Zero-sum matrix games solved through the maximin linear program.
//!
//! The row player maximizes. After shifting the payoffs so every entry is
//! at least 1, the column player's program
//!
//! ```text
//! maximize Σ_b w_b   subject to   M' w ≤ 1,  w ≥ 0
//! ```
//!
//! starts from a feasible slack basis and is solved with a dense tableau
//! simplex under Bland's rule. The optimum `z` gives the value `1/z`, the
//! column strategy `w/z`, and the row strategy from the slack duals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;

/// Borrowed row-major `rows × cols` payoff matrix (row player maximizes).
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
}

impl<'a> MatrixView<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix game needs at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(MatrixView { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// `Σ_b y[b]·M[a][b]` for every row `a`.
    pub fn row_payoffs(&self, y: &[f64]) -> Vec<f64> {
        self.data.chunks(self.cols).map(|row| row.iter().zip(y).map(|(m, p)| m * p).sum()).collect()
    }

    /// `Σ_a x[a]·M[a][b]` for every column `b`.
    pub fn col_payoffs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &p) in self.data.chunks(self.cols).zip(x) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += p * m;
            }
        }
        out
    }
}

/// Owned payoff matrix, serialized as a JSON array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PayoffMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl PayoffMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension("ragged payoff matrix".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        MatrixView::new(&data, n_rows, n_cols)?;
        Ok(PayoffMatrix { data, rows: n_rows, cols: n_cols })
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView { data: &self.data, rows: self.rows, cols: self.cols }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PayoffMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        PayoffMatrix::from_rows(rows)
    }
}

impl From<PayoffMatrix> for Vec<Vec<f64>> {
    fn from(m: PayoffMatrix) -> Self {
        m.to_rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub max_policy: Vec<f64>,
    pub min_policy: Vec<f64>,
    /// Upper guarantee of `min_policy` minus lower guarantee of `max_policy`.
    pub duality_gap: f64,
}

/// Solves the zero-sum game `m`, returning its value and a Nash pair whose
/// duality gap is at most `tol`. The equilibrium returned is the first
/// optimal basis reached under Bland's rule, so it is a deterministic
/// function of `m`.
pub fn solve_matrix_game(m: MatrixView<'_>, tol: f64) -> Result<MatrixGameSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    if let Some(i) = m.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("payoff entry ({}, {})", i / m.cols, i % m.cols)));
    }
    let (rows, cols) = (m.rows, m.cols);
    let lo = m.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo == 0.0 {
        // Constant matrix: every strategy pair is optimal, and the tableau
        // below would return the first pure pair, so do that directly.
        let mut max_policy = vec![0.0; rows];
        let mut min_policy = vec![0.0; cols];
        max_policy[0] = 1.0;
        min_policy[0] = 1.0;
        return Ok(MatrixGameSolution { value: lo, max_policy, min_policy, duality_gap: 0.0 });
    }
    let shift = lo - 1.0;

    let mut tableau = Tableau::new(m, shift);
    tableau.run()?;

    let z = tableau.objective();
    let mut min_policy: Vec<f64> = (0..cols).map(|j| tableau.primal(j)).collect();
    let mut max_policy: Vec<f64> = (0..rows).map(|i| tableau.dual(i)).collect();
    normalize(&mut min_policy);
    normalize(&mut max_policy);

    let lower = m.col_payoffs(&max_policy).into_iter().fold(f64::INFINITY, f64::min);
    let upper = m.row_payoffs(&min_policy).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let duality_gap = (upper - lower).max(0.0);
    if duality_gap > tol {
        return Err(Error::SolverGap { gap: duality_gap, tol });
    }
    let value = (1.0 / z + shift).clamp(lower.min(upper), upper.max(lower));
    Ok(MatrixGameSolution { value, max_policy, min_policy, duality_gap })
}

fn normalize(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}

/// Returns the lowest-index row maximizing `Σ_b y[b]·M[a][b]`, with its payoff.
pub fn best_response_value(m: MatrixView<'_>, y: &[f64]) -> Result<(usize, f64)> {
    if y.len() != m.cols {
        return Err(Error::Dimension(format!(
            "column strategy has {} entries, matrix has {} columns",
            y.len(),
            m.cols
        )));
    }
    let payoffs = m.row_payoffs(y);
    let mut best = (0, payoffs[0]);
    for (a, &v) in payoffs.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (a, v);
        }
    }
    Ok(best)
}

/// Dense simplex tableau for `max 1ᵀw s.t. M'w + slack = 1`.
///
/// Columns `0..cols` are the structural variables `w`, columns
/// `cols..cols+rows` the slacks. `cost[j]` holds the reduced cost of column
/// `j`; a positive entry can still improve the objective.
struct Tableau {
    rows: usize,
    cols: usize,
    width: usize,
    body: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    value: f64,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(m: MatrixView<'_>, shift: f64) -> Self {
        let (rows, cols) = (m.rows, m.cols);
        let width = cols + rows;
        let mut body = vec![0.0; rows * width];
        for i in 0..rows {
            for j in 0..cols {
                body[i * width + j] = m.get(i, j) - shift;
            }
            body[i * width + cols + i] = 1.0;
        }
        let mut cost = vec![0.0; width];
        cost[..cols].iter_mut().for_each(|c| *c = 1.0);
        Tableau {
            rows,
            cols,
            width,
            body,
            rhs: vec![1.0; rows],
            cost,
            value: 0.0,
            basis: (cols..cols + rows).collect(),
        }
    }

    fn run(&mut self) -> Result<()> {
        // Bland's rule cannot cycle; the cap only guards against a numerical
        // breakdown.
        let max_pivots = 50 * (self.rows + self.width) + 1000;
        for _ in 0..max_pivots {
            let Some(enter) = (0..self.width).find(|&j| self.cost[j] > PIVOT_TOL) else {
                return Ok(());
            };
            let leave = self.ratio_test(enter).ok_or_else(|| {
                Error::InvalidArgument("unbounded maximin program (payoff shift failed)".into())
            })?;
            self.pivot(leave, enter);
        }
        Err(Error::NotConverged {
            what: "simplex",
            iterations: max_pivots,
            residual: self.cost.iter().cloned().fold(0.0, f64::max),
        })
    }

    /// Minimum-ratio row for entering column `enter`; ties go to the row
    /// whose basic variable has the lowest index.
    fn ratio_test(&self, enter: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let coef = self.body[i * self.width + enter];
            if coef <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs[i] / coef;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1.0);
                    if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.body[row * w + col];
        for j in 0..w {
            self.body[row * w + j] /= p;
        }
        self.rhs[row] /= p;
        self.body[row * w + col] = 1.0;

        let (before, rest) = self.body.split_at_mut(row * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for (i, other) in before.chunks_mut(w).chain(after.chunks_mut(w)).enumerate() {
            let i = if i < row { i } else { i + 1 };
            let f = other[col];
            if f != 0.0 {
                for (o, pr) in other.iter_mut().zip(pivot_row.iter()) {
                    *o -= f * pr;
                }
                other[col] = 0.0;
                self.rhs[i] -= f * self.rhs[row];
            }
        }
        let f = self.cost[col];
        for (c, pr) in self.cost.iter_mut().zip(pivot_row.iter()) {
            *c -= f * pr;
        }
        self.cost[col] = 0.0;
        self.value += f * self.rhs[row];
        self.basis[row] = col;
    }

    fn objective(&self) -> f64 {
        self.value
    }

    fn primal(&self, j: usize) -> f64 {
        self.basis.iter().position(|&b| b == j).map_or(0.0, |i| self.rhs[i])
    }

    /// Dual price of row constraint `i`, read off its slack's reduced cost.
    fn dual(&self, i: usize) -> f64 {
        -self.cost[self.cols + i]
    }
}
