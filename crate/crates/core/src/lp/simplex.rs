//! Dense bounded revised simplex.
//!
//! Every row gets a logical variable `r_i` with `a_i^T x - r_i = 0`, the row
//! sense turning into bounds on `r_i`. The basis inverse is kept explicitly
//! and updated by elementary row operations, with a fresh LU inversion every
//! [`REFACTOR_EVERY`] pivots. Phase 1 uses one artificial column per row.
//! The ratio test is Harris's two-pass rule; after a run of degenerate pivots
//! the solver falls back to Bland's rule until progress resumes.

use nalgebra::DMatrix;

use super::{LpError, LpProblem, LpSolution, LpStatus, RowSense};

const REFACTOR_EVERY: usize = 100;
const FEAS_TOL: f64 = 1e-9;
const PIV_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

/// Warm start information: which columns are basic and which nonbasic
/// columns sit at their upper bound. Columns `0..n` are the structural
/// variables and `n..n+m` the row logicals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub head: Vec<usize>,
    pub at_upper: Vec<bool>,
}

/// Solves `lp` from scratch.
pub fn simplex_solve(lp: &LpProblem) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut e = Engine::new(lp);
    e.cold_start()?;
    e.finish(lp)
}

/// Solves `lp` starting from `basis`, typically the optimal basis of the same
/// problem with different variable bounds. Uses the dual simplex when the
/// basis is still dual feasible and falls back to a cold start otherwise.
pub fn simplex_solve_warm(lp: &LpProblem, basis: &Basis) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut e = Engine::new(lp);
    if basis.head.len() != e.m || basis.at_upper.len() != e.n + e.m || !e.install(basis) {
        e = Engine::new(lp);
        e.cold_start()?;
        return e.finish(lp);
    }
    if e.make_dual_feasible() {
        match e.dual()? {
            DualOutcome::Feasible => {}
            DualOutcome::Infeasible => return Ok(e.infeasible(lp)),
        }
        if let PrimalOutcome::Unbounded = e.primal()? {
            return Ok(e.unbounded(lp));
        }
        return e.finish_optimal(lp);
    }
    if e.primal_feasible() {
        if let PrimalOutcome::Unbounded = e.primal()? {
            return Ok(e.unbounded(lp));
        }
        return e.finish_optimal(lp);
    }
    let mut e = Engine::new(lp);
    e.cold_start()?;
    e.finish(lp)
}

enum PrimalOutcome {
    Optimal,
    Unbounded,
}

enum DualOutcome {
    Feasible,
    Infeasible,
}

enum Phase {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Engine {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
    opt_tol: f64,
    phase: Phase,
}

const NONBASIC: usize = usize::MAX;

impl Engine {
    fn new(lp: &LpProblem) -> Self {
        let n = lp.n_vars();
        let m = lp.rows.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 2 * m];
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j].push((i, a));
            }
            cols[n + i].push((i, -1.0));
            cols[n + m + i].push((i, 1.0));
            let (l, u) = match row.sense {
                RowSense::Le => (f64::NEG_INFINITY, row.rhs),
                RowSense::Ge => (row.rhs, f64::INFINITY),
                RowSense::Eq => (row.rhs, row.rhs),
            };
            lo.push(l);
            hi.push(u);
        }
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(0.0, m));
        let cmax = lp.objective.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let mut cost = lp.objective.clone();
        cost.extend(std::iter::repeat_n(0.0, 2 * m));
        Engine {
            m,
            n,
            cols,
            cost,
            lo,
            hi,
            x: vec![0.0; n + 2 * m],
            head: Vec::new(),
            pos: vec![NONBASIC; n + 2 * m],
            binv: Vec::new(),
            pivots_since_refactor: 0,
            iterations: 0,
            max_iterations: 20_000 + 50 * (n + m),
            opt_tol: 1e-9 * cmax,
            phase: Phase::Optimal,
        }
    }

    fn resting_value(&self, j: usize, upper: bool) -> f64 {
        let (l, u) = (self.lo[j], self.hi[j]);
        if upper && u.is_finite() {
            u
        } else if l.is_finite() {
            l
        } else if u.is_finite() {
            u
        } else {
            0.0
        }
    }

    fn cold_start(&mut self) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        for j in 0..n {
            self.x[j] = self.resting_value(j, false);
        }
        let mut activity = vec![0.0; m];
        for j in 0..n {
            if self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    activity[i] += a * self.x[j];
                }
            }
        }
        self.head = Vec::with_capacity(m);
        self.binv = vec![0.0; m * m];
        let mut any_artificial = false;
        for i in 0..m {
            let r = n + i;
            let a = n + m + i;
            let v = activity[i];
            if v >= self.lo[r] && v <= self.hi[r] {
                self.x[r] = v;
                self.head.push(r);
                self.pos[r] = i;
                self.binv[i * m + i] = -1.0;
            } else {
                let b = if v < self.lo[r] { self.lo[r] } else { self.hi[r] };
                self.x[r] = b;
                let s = if b > v { 1.0 } else { -1.0 };
                self.cols[a][0].1 = s;
                self.hi[a] = f64::INFINITY;
                self.x[a] = (b - v).abs();
                self.head.push(a);
                self.pos[a] = i;
                self.binv[i * m + i] = s;
                any_artificial = true;
            }
        }
        if any_artificial {
            let real_cost = std::mem::take(&mut self.cost);
            self.cost = vec![0.0; n + 2 * m];
            for i in 0..m {
                self.cost[n + m + i] = 1.0;
            }
            let saved_tol = self.opt_tol;
            self.opt_tol = 1e-11;
            self.primal()?;
            self.opt_tol = saved_tol;
            let infeas: f64 = (0..m).map(|i| self.x[n + m + i]).sum();
            let scale = activity.iter().fold(1.0f64, |a, v| a.max(v.abs()))
                + (n..n + m).map(|r| self.x[r].abs()).fold(0.0, f64::max);
            self.cost = real_cost;
            if infeas > 1e-7 * scale {
                self.phase = Phase::Infeasible;
                return Ok(());
            }
            for i in 0..m {
                let a = n + m + i;
                self.hi[a] = 0.0;
                if self.pos[a] == NONBASIC {
                    self.x[a] = 0.0;
                }
            }
            self.drive_out_artificials()?;
        }
        match self.primal()? {
            PrimalOutcome::Optimal => self.phase = Phase::Optimal,
            PrimalOutcome::Unbounded => self.phase = Phase::Unbounded,
        }
        Ok(())
    }

    /// Replaces basic artificials (now at zero) by structural or logical
    /// columns where the basis allows it.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        for r in 0..m {
            let a = self.head[r];
            if a < n + m {
                continue;
            }
            self.x[a] = 0.0;
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best = None;
            let mut best_val = 1e-7;
            for j in 0..n + m {
                if self.pos[j] != NONBASIC {
                    continue;
                }
                let v: f64 = self.cols[j].iter().map(|&(k, c)| row[k] * c).sum();
                if v.abs() > best_val {
                    best_val = v.abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                let alpha = self.ftran(j);
                self.pivot(r, j, &alpha);
            }
        }
        self.refactor()
    }

    fn install(&mut self, basis: &Basis) -> bool {
        let (n, m) = (self.n, self.m);
        let mut seen = vec![false; n + m];
        for &j in &basis.head {
            if j >= n + m || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        self.head = basis.head.clone();
        for (i, &j) in self.head.iter().enumerate() {
            self.pos[j] = i;
        }
        for j in 0..n + m {
            if self.pos[j] == NONBASIC {
                self.x[j] = self.resting_value(j, basis.at_upper[j]);
            }
        }
        self.refactor().is_ok()
    }

    fn basis(&self) -> Option<Basis> {
        let (n, m) = (self.n, self.m);
        if self.head.iter().any(|&j| j >= n + m) {
            return None;
        }
        let at_upper =
            (0..n + m).map(|j| self.pos[j] == NONBASIC && self.hi[j].is_finite() && self.x[j] == self.hi[j]).collect();
        Some(Basis { head: self.head.clone(), at_upper })
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.pivots_since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        self.binv.resize(m * m, 0.0);
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (i, &j) in self.head.iter().enumerate() {
            for &(k, a) in &self.cols[j] {
                b[(k, i)] = a;
            }
        }
        let inv = b.lu().try_inverse().ok_or_else(|| LpError::Numerical("singular basis".into()))?;
        if !inv.iter().all(|v| v.is_finite()) || inv.amax() > 1e14 {
            return Err(LpError::Numerical("ill-conditioned basis".into()));
        }
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inv[(i, k)];
            }
        }
        self.recompute_basics();
        Ok(())
    }

    /// `x_B = -B^-1 N x_N`
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.cols.len() {
            if self.pos[j] == NONBASIC && self.x[j] != 0.0 {
                for &(k, a) in &self.cols[j] {
                    rhs[k] -= a * self.x[j];
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(b, r)| b * r).sum();
            let j = self.head[i];
            self.x[j] = v;
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(k, a) in &self.cols[j] {
            for (i, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[i * m + k] * a;
            }
        }
        alpha
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let c = self.cost[self.head[i]];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(k, a)| y[k] * a).sum::<f64>()
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        for v in row_r.iter_mut() {
            *v /= piv;
        }
        for (i, chunk) in before.chunks_mut(m).enumerate() {
            let f = alpha[i];
            if f != 0.0 {
                for (v, rr) in chunk.iter_mut().zip(row_r.iter()) {
                    *v -= f * rr;
                }
            }
        }
        for (i, chunk) in after.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + i];
            if f != 0.0 {
                for (v, rr) in chunk.iter_mut().zip(row_r.iter()) {
                    *v -= f * rr;
                }
            }
        }
        let leaving = self.head[r];
        self.pos[leaving] = NONBASIC;
        self.head[r] = q;
        self.pos[q] = r;
        self.pivots_since_refactor += 1;
    }

    fn tick(&mut self) -> Result<(), LpError> {
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(LpError::IterationLimit(self.max_iterations));
        }
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn primal(&mut self) -> Result<PrimalOutcome, LpError> {
        let ncols = self.cols.len();
        let mut degenerate = 0usize;
        loop {
            self.tick()?;
            let bland = degenerate >= DEGENERATE_RUN;
            let y = self.duals();
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..ncols {
                if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let dir = if d < -self.opt_tol && self.x[j] < self.hi[j] {
                    1.0
                } else if d > self.opt_tol && self.x[j] > self.lo[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return Ok(PrimalOutcome::Optimal);
            };
            let alpha = self.ftran(q);
            // Basic variable i changes at rate delta_i = -dir * alpha_i.
            let mut t_max = self.hi[q] - self.lo[q];
            for (i, &a) in alpha.iter().enumerate() {
                let delta = -dir * a;
                let j = self.head[i];
                if delta < -PIV_TOL && self.lo[j].is_finite() {
                    t_max = t_max.min((self.x[j] - self.lo[j] + FEAS_TOL) / -delta);
                } else if delta > PIV_TOL && self.hi[j].is_finite() {
                    t_max = t_max.min((self.hi[j] - self.x[j] + FEAS_TOL) / delta);
                }
            }
            if t_max == f64::INFINITY {
                return Ok(PrimalOutcome::Unbounded);
            }
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_key = f64::NEG_INFINITY;
            let mut bland_key = (f64::INFINITY, usize::MAX);
            for (i, &a) in alpha.iter().enumerate() {
                let delta = -dir * a;
                let j = self.head[i];
                let ratio = if delta < -PIV_TOL && self.lo[j].is_finite() {
                    (self.x[j] - self.lo[j]) / -delta
                } else if delta > PIV_TOL && self.hi[j].is_finite() {
                    (self.hi[j] - self.x[j]) / delta
                } else {
                    continue;
                };
                if ratio > t_max {
                    continue;
                }
                if bland {
                    let key = (ratio.max(0.0), j);
                    if key.0 < bland_key.0 - 1e-12 || (key.0 <= bland_key.0 + 1e-12 && j < bland_key.1) {
                        bland_key = key;
                        leave = Some((i, key.0));
                    }
                } else if delta.abs() > leave_key {
                    leave_key = delta.abs();
                    leave = Some((i, ratio.max(0.0)));
                }
            }
            let range = self.hi[q] - self.lo[q];
            match leave {
                Some((r, t)) if t < range || !range.is_finite() => {
                    self.step(q, dir, t, &alpha);
                    let j = self.head[r];
                    self.x[j] = if -dir * alpha[r] < 0.0 { self.lo[j] } else { self.hi[j] };
                    self.pivot(r, q, &alpha);
                    degenerate = if t <= 1e-12 { degenerate + 1 } else { 0 };
                }
                _ => {
                    self.step(q, dir, range, &alpha);
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    degenerate = 0;
                }
            }
        }
    }

    fn step(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for (i, &a) in alpha.iter().enumerate() {
            let j = self.head[i];
            self.x[j] -= dir * a * t;
        }
    }

    fn primal_feasible(&self) -> bool {
        self.head.iter().all(|&j| self.x[j] >= self.lo[j] - FEAS_TOL && self.x[j] <= self.hi[j] + FEAS_TOL)
    }

    /// Moves boxed nonbasics to the bound matching their reduced cost sign.
    /// Returns false if some nonbasic cannot be made dual feasible.
    fn make_dual_feasible(&mut self) -> bool {
        let y = self.duals();
        let mut moved = false;
        for j in 0..self.cols.len() {
            if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            let at_lo = self.x[j] == self.lo[j];
            let at_hi = self.x[j] == self.hi[j];
            if d < -self.opt_tol && !at_hi {
                if !self.hi[j].is_finite() {
                    return false;
                }
                self.x[j] = self.hi[j];
                moved = true;
            } else if d > self.opt_tol && !at_lo {
                if !self.lo[j].is_finite() {
                    return false;
                }
                self.x[j] = self.lo[j];
                moved = true;
            }
        }
        if moved {
            self.recompute_basics();
        }
        true
    }

    fn dual(&mut self) -> Result<DualOutcome, LpError> {
        let m = self.m;
        let ncols = self.cols.len();
        loop {
            self.tick()?;
            let mut leave = None;
            let mut worst = FEAS_TOL;
            for (i, &j) in self.head.iter().enumerate() {
                let below = self.lo[j] - self.x[j];
                let above = self.x[j] - self.hi[j];
                if below > worst {
                    worst = below;
                    leave = Some((i, true));
                } else if above > worst {
                    worst = above;
                    leave = Some((i, false));
                }
            }
            let Some((r, to_lower)) = leave else {
                return Ok(DualOutcome::Feasible);
            };
            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            let y = self.duals();
            // x_Br must rise (to_lower) or fall; moving nonbasic j by dir*t
            // changes x_Br by -alpha_rj*dir*t.
            let need = if to_lower { 1.0 } else { -1.0 };
            let mut cands = Vec::new();
            let mut theta_max = f64::INFINITY;
            for j in 0..ncols {
                if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(k, c)| rho[k] * c).sum();
                if a.abs() <= PIV_TOL {
                    continue;
                }
                let dir = -need * a.signum();
                if (dir > 0.0 && self.x[j] >= self.hi[j]) || (dir < 0.0 && self.x[j] <= self.lo[j]) {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let dabs = (d * dir).max(0.0);
                theta_max = theta_max.min((dabs + self.opt_tol) / a.abs());
                cands.push((j, dir, a, dabs));
            }
            if cands.is_empty() {
                return Ok(DualOutcome::Infeasible);
            }
            let mut pick = None;
            let mut pick_a = 0.0;
            for &(j, dir, a, dabs) in &cands {
                if dabs / a.abs() <= theta_max && a.abs() > pick_a {
                    pick_a = a.abs();
                    pick = Some((j, dir));
                }
            }
            let (q, dir) = pick.expect("a candidate attains the Harris bound");
            let alpha = self.ftran(q);
            if (alpha[r].abs() - pick_a).abs() > 1e-6 * pick_a.max(1.0) {
                self.refactor()?;
                continue;
            }
            let jr = self.head[r];
            let target = if to_lower { self.lo[jr] } else { self.hi[jr] };
            let t = ((target - self.x[jr]) / (-alpha[r] * dir)).max(0.0);
            self.step(q, dir, t, &alpha);
            self.x[jr] = target;
            self.pivot(r, q, &alpha);
        }
    }

    fn infeasible(&self, lp: &LpProblem) -> LpSolution {
        LpSolution {
            status: LpStatus::Infeasible,
            x: self.x[..self.n].to_vec(),
            objective: f64::NAN,
            duals: vec![0.0; self.m],
            reduced_costs: vec![0.0; lp.n_vars()],
            iterations: self.iterations,
            basis: None,
        }
    }

    fn unbounded(&self, lp: &LpProblem) -> LpSolution {
        LpSolution { status: LpStatus::Unbounded, objective: f64::NEG_INFINITY, ..self.infeasible(lp) }
    }

    fn finish(mut self, lp: &LpProblem) -> Result<LpSolution, LpError> {
        match self.phase {
            Phase::Infeasible => Ok(self.infeasible(lp)),
            Phase::Unbounded => Ok(self.unbounded(lp)),
            Phase::Optimal => {
                self.refactor()?;
                self.finish_optimal(lp)
            }
        }
    }

    fn finish_optimal(&self, lp: &LpProblem) -> Result<LpSolution, LpError> {
        let y = self.duals();
        let x: Vec<f64> = (0..self.n).map(|j| self.x[j].clamp(self.lo[j], self.hi[j])).collect();
        let reduced_costs = (0..self.n).map(|j| self.reduced_cost(j, &y)).collect();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: lp.objective_value(&x),
            x,
            duals: y.iter().map(|v| -v).collect(),
            reduced_costs,
            iterations: self.iterations,
            basis: self.basis(),
        })
    }
}
