//! Mixed integer linear programming by LP-based branch and bound.
//!
//! The search dives depth first (toward the nearer integer) and, when a dive
//! ends, restarts from the open node with the smallest bound. Branching is on
//! the most fractional variable, ties going to the lowest index. Each child
//! LP is warm started from its parent's basis with the dual simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::lp::{simplex_solve, simplex_solve_warm, Basis, LpError, LpProblem, LpSolution, LpStatus};

#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub lp: LpProblem,
    /// Indices of variables restricted to integer values.
    pub integer: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct BnbOptions {
    pub node_limit: usize,
    /// The search stops once `incumbent - bound <= abs_gap`.
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub int_tol: f64,
    /// Largest row or bound violation accepted for a heuristic solution.
    pub feas_tol: f64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { node_limit: 100_000, abs_gap: 1e-9, rel_gap: 1e-9, int_tol: 1e-6, feas_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node budget exhausted; `x` holds the incumbent if one was found.
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub best_bound: f64,
    pub nodes: usize,
}

impl MilpSolution {
    /// `objective - best_bound`, infinite without an incumbent.
    pub fn gap(&self) -> f64 {
        if self.x.is_some() {
            (self.objective - self.best_bound).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Turns a node relaxation into a candidate integer solution. Candidates are
/// checked for feasibility before they are accepted.
pub trait IncumbentHeuristic {
    /// Candidates offered before the root is solved.
    fn initial(&mut self, _problem: &MilpProblem) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn propose(&mut self, problem: &MilpProblem, relaxation: &[f64]) -> Option<Vec<f64>>;
}

pub fn branch_and_bound(problem: &MilpProblem) -> Result<MilpSolution, LpError> {
    branch_and_bound_with(problem, &BnbOptions::default(), None)
}

struct Node {
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap on the reversed key: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

pub fn branch_and_bound_with(
    problem: &MilpProblem,
    opts: &BnbOptions,
    mut heuristic: Option<&mut dyn IncumbentHeuristic>,
) -> Result<MilpSolution, LpError> {
    let mut lp = problem.lp.clone();
    for &j in &problem.integer {
        lp.lower[j] = lp.lower[j].ceil();
        lp.upper[j] = lp.upper[j].floor();
    }
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut open = BinaryHeap::new();
    let mut seq = 0usize;
    open.push(Node { bound: f64::NEG_INFINITY, seq, lower: lp.lower.clone(), upper: lp.upper.clone(), basis: None });
    let mut nodes = 0usize;
    let mut dive: Option<Node> = None;
    let mut saw_unbounded = false;
    if let Some(h) = heuristic.as_deref_mut() {
        for cand in h.initial(problem) {
            offer(problem, opts, &mut incumbent, cand);
        }
    }

    let prunable = |bound: f64, inc: &Option<(f64, Vec<f64>)>| match inc {
        Some((v, _)) => bound >= *v - opts.abs_gap.max(opts.rel_gap * v.abs()),
        None => false,
    };

    loop {
        let node = match dive.take() {
            Some(n) => n,
            None => match open.pop() {
                Some(n) => n,
                None => break,
            },
        };
        if prunable(node.bound, &incumbent) {
            continue;
        }
        if nodes >= opts.node_limit {
            open.push(node);
            break;
        }
        nodes += 1;
        lp.lower.clone_from(&node.lower);
        lp.upper.clone_from(&node.upper);
        let sol = solve_node(&lp, node.basis.as_ref())?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                saw_unbounded = true;
                continue;
            }
            LpStatus::Optimal => {}
        }
        let bound = sol.objective.max(node.bound);
        if prunable(bound, &incumbent) {
            continue;
        }
        if let Some(h) = heuristic.as_deref_mut() {
            if let Some(cand) = h.propose(problem, &sol.x) {
                offer(problem, opts, &mut incumbent, cand);
            }
        }
        let mut branch = most_fractional(&problem.integer, &sol.x, opts.int_tol);
        if branch.is_none() {
            // Integral within tolerance: fix the integers exactly and re-solve,
            // since a binary at 1e-7 can still carry a big-M term.
            for &k in &problem.integer {
                let r = sol.x[k].round();
                lp.lower[k] = r;
                lp.upper[k] = r;
            }
            let fixed = solve_node(&lp, sol.basis.as_ref())?;
            if fixed.status == LpStatus::Optimal {
                offer(problem, opts, &mut incumbent, fixed.x);
                continue;
            }
            branch = most_fractional(&problem.integer, &sol.x, 0.0);
        }
        let Some(j) = branch else {
            continue;
        };
        if prunable(bound, &incumbent) {
            continue;
        }
        let v = sol.x[j];
        let mut down = Node { bound, seq: 0, lower: node.lower.clone(), upper: node.upper.clone(), basis: sol.basis.clone() };
        down.upper[j] = v.floor();
        let mut up = Node { bound, seq: 0, lower: node.lower, upper: node.upper, basis: sol.basis };
        up.lower[j] = v.ceil();
        seq += 1;
        down.seq = seq;
        seq += 1;
        up.seq = seq;
        let (first, second) = if v - v.floor() < 0.5 { (down, up) } else { (up, down) };
        open.push(second);
        dive = Some(first);
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let exhausted = open.is_empty() || open.iter().all(|n| prunable(n.bound, &incumbent));
    match incumbent {
        Some((obj, x)) => {
            let best_bound = if exhausted { obj } else { open_bound.min(obj) };
            Ok(MilpSolution {
                status: if exhausted { MilpStatus::Optimal } else { MilpStatus::NodeLimit },
                x: Some(x),
                objective: obj,
                best_bound,
                nodes,
            })
        }
        None => Ok(MilpSolution {
            status: if !exhausted {
                MilpStatus::NodeLimit
            } else if saw_unbounded {
                MilpStatus::Unbounded
            } else {
                MilpStatus::Infeasible
            },
            x: None,
            objective: f64::INFINITY,
            best_bound: open_bound,
            nodes,
        }),
    }
}

fn solve_node(lp: &LpProblem, basis: Option<&Basis>) -> Result<LpSolution, LpError> {
    match basis {
        Some(b) => match simplex_solve_warm(lp, b) {
            Ok(s) => Ok(s),
            Err(LpError::Numerical(_)) => simplex_solve(lp),
            Err(e) => Err(e),
        },
        None => simplex_solve(lp),
    }
}

fn most_fractional(integer: &[usize], x: &[f64], tol: f64) -> Option<usize> {
    let mut best = None;
    let mut best_score = tol;
    for &j in integer {
        let f = x[j] - x[j].floor();
        let score = f.min(1.0 - f);
        if score > best_score || (score == best_score && best.is_some_and(|b| j < b)) {
            best_score = score;
            best = Some(j);
        }
    }
    best
}

fn offer(problem: &MilpProblem, opts: &BnbOptions, incumbent: &mut Option<(f64, Vec<f64>)>, x: Vec<f64>) {
    if x.len() != problem.lp.n_vars() {
        return;
    }
    if problem.integer.iter().any(|&j| (x[j] - x[j].round()).abs() > opts.int_tol) {
        return;
    }
    if problem.lp.max_violation(&x) > opts.feas_tol {
        return;
    }
    let obj = problem.lp.objective_value(&x);
    if incumbent.as_ref().is_none_or(|(v, _)| obj < *v) {
        *incumbent = Some((obj, x));
    }
}
