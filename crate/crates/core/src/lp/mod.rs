//! Linear programming: problem description and a dense bounded revised
//! simplex solver.
//!
//! Problems are `minimize c^T x` subject to rows `a_i^T x {<=, >=, =} b_i`
//! and per-variable bounds `l <= x <= u` (either side may be infinite).
//!
//! Dual multipliers follow the Lagrangian `c^T x + sum_i lambda_i (a_i^T x - b_i)`,
//! so at an optimum `c + A^T lambda` equals the reduced costs, `lambda_i >= 0`
//! on `<=` rows, `lambda_i <= 0` on `>=` rows and free on equalities.

mod simplex;

pub use simplex::{simplex_solve, simplex_solve_warm, Basis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.activity(x);
        match self.sense {
            RowSense::Le => (v - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - v).max(0.0),
            RowSense::Eq => (v - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// `n` variables, zero objective, all variables non-negative.
    pub fn new(n: usize) -> Self {
        LpProblem { objective: vec![0.0; n], rows: Vec::new(), lower: vec![0.0; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn free(&mut self, j: usize) {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        let coeffs = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(coeffs, RowSense::Le, rhs)
    }

    pub fn add_ge(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(coeffs, RowSense::Ge, rhs)
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(coeffs, RowSense::Eq, rhs)
    }

    /// Builds from dense `A x <= b`.
    pub fn from_dense_le(objective: Vec<f64>, a: &[Vec<f64>], b: &[f64], lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let mut lp = LpProblem { objective, rows: Vec::new(), lower, upper };
        for (row, &rhs) in a.iter().zip(b) {
            lp.add_le(row.iter().copied().enumerate().collect(), rhs);
        }
        lp
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::InvalidData("bound vectors do not match objective length".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::InvalidData("non-finite objective coefficient".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::InvalidData(format!("variable {j} has invalid bounds")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() || r.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(LpError::InvalidData(format!("row {i} has non-finite data or a bad index")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers, see the module docs for the sign convention.
    pub duals: Vec<f64>,
    /// `c + A^T lambda`, the bound multipliers.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Final basis, reusable as a warm start after bound changes.
    pub basis: Option<Basis>,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("invalid problem data: {0}")]
    InvalidData(String),
}
