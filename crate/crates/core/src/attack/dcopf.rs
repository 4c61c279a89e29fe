use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{injection_shift, AttackError};
use crate::grid::{DcMatrices, NetworkCase};
use crate::lp::{simplex_solve, LpProblem, LpStatus};

/// Cost-minimal dispatch of the case generators against `loads`, with
/// PTDF line limits.
#[derive(Debug, Clone)]
pub struct DcopfProblem {
    pub cost: Vec<f64>,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    /// Bus position of every generator.
    pub gen_bus: Vec<usize>,
    /// MW per bus position.
    pub loads: Vec<f64>,
    /// MW per branch.
    pub limits: Vec<f64>,
    pub ptdf: DMatrix<f64>,
}

impl DcopfProblem {
    pub fn from_case(case: &NetworkCase, dc: &DcMatrices) -> Self {
        DcopfProblem {
            cost: case.generators.iter().map(|g| g.cost_per_mwh).collect(),
            p_min: case.generators.iter().map(|g| g.p_min_mw).collect(),
            p_max: case.generators.iter().map(|g| g.p_max_mw).collect(),
            gen_bus: case.generators.iter().map(|g| case.pos(g.bus)).collect(),
            loads: case.loads_mw(),
            limits: case.branches.iter().map(|b| b.flow_limit_mw).collect(),
            ptdf: dc.ptdf.clone(),
        }
    }

    pub fn with_loads(&self, loads: Vec<f64>) -> Self {
        DcopfProblem { loads, ..self.clone() }
    }

    pub fn n_gen(&self) -> usize {
        self.cost.len()
    }

    /// PTDF restricted to generator buses (`branches x generators`).
    pub fn gen_ptdf(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ptdf.nrows(), self.n_gen(), |l, g| self.ptdf[(l, self.gen_bus[g])])
    }

    /// Branch flows for a dispatch against `loads`.
    pub fn flows(&self, p_g: &[f64], loads: &[f64]) -> Vec<f64> {
        let mut inj: Vec<f64> = loads.iter().map(|l| -l).collect();
        for (g, &p) in p_g.iter().enumerate() {
            inj[self.gen_bus[g]] += p;
        }
        (0..self.ptdf.nrows()).map(|l| (0..inj.len()).map(|b| self.ptdf[(l, b)] * inj[b]).sum()).collect()
    }

    /// Largest `|flow|` the line could see for any dispatch within
    /// generator bounds, ignoring the balance constraint.
    pub(crate) fn crude_flow_bound(&self, l: usize) -> f64 {
        let load_part: f64 = (0..self.loads.len()).map(|b| self.ptdf[(l, b)] * self.loads[b]).sum();
        let gen_part: f64 = (0..self.n_gen())
            .map(|g| self.ptdf[(l, self.gen_bus[g])].abs() * self.p_min[g].abs().max(self.p_max[g].abs()))
            .sum();
        gen_part + load_part.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub p_g: Vec<f64>,
    /// Flows against the loads the dispatch was computed for.
    pub line_flows: Vec<f64>,
    pub cost: f64,
}

pub fn solve_dcopf(prob: &DcopfProblem) -> Result<DispatchSolution, AttackError> {
    let ng = prob.n_gen();
    let total: f64 = prob.loads.iter().sum();
    if prob.p_max.iter().sum::<f64>() < total - 1e-9 {
        return Err(AttackError::Infeasible(format!("load {total:.3} MW exceeds generation capacity")));
    }
    let mut lp = LpProblem::new(0);
    for g in 0..ng {
        lp.add_var(prob.cost[g], prob.p_min[g], prob.p_max[g]);
    }
    lp.add_eq((0..ng).map(|g| (g, 1.0)).collect(), total);
    for l in 0..prob.ptdf.nrows() {
        let f = prob.limits[l];
        if !f.is_finite() || prob.crude_flow_bound(l) <= f {
            continue;
        }
        let load_flow: f64 = (0..prob.loads.len()).map(|b| prob.ptdf[(l, b)] * prob.loads[b]).sum();
        let coeffs: Vec<(usize, f64)> = (0..ng).map(|g| (g, prob.ptdf[(l, prob.gen_bus[g])])).collect();
        lp.add_le(coeffs.clone(), f + load_flow);
        lp.add_le(coeffs.into_iter().map(|(g, a)| (g, -a)).collect(), f - load_flow);
    }
    let sol = simplex_solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(AttackError::Infeasible("line limits require load shedding".into())),
        LpStatus::Unbounded => return Err(AttackError::Invalid("unbounded dispatch".into())),
    }
    let line_flows = prob.flows(&sol.x, &prob.loads);
    Ok(DispatchSolution { cost: sol.objective, p_g: sol.x, line_flows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverflowReport {
    pub target_branch: usize,
    /// `|physical flow| / limit` on the target branch.
    pub target_flow_fraction: f64,
    pub per_branch_fractions: Vec<f64>,
    pub physical_flows: Vec<f64>,
    pub false_loads: Vec<f64>,
    pub dispatch: DispatchSolution,
}

impl OverflowReport {
    /// Re-dispatches on `false_loads` and applies the dispatch to the true
    /// loads of `prob`.
    pub fn from_false_loads(
        case: &NetworkCase,
        prob: &DcopfProblem,
        false_loads: Vec<f64>,
        target_branch: usize,
    ) -> Result<Self, AttackError> {
        let t = case
            .branch_pos(target_branch)
            .ok_or_else(|| AttackError::Invalid(format!("unknown target branch {target_branch}")))?;
        let dispatch = solve_dcopf(&prob.with_loads(false_loads.clone()))?;
        let physical_flows = prob.flows(&dispatch.p_g, &prob.loads);
        let per_branch_fractions: Vec<f64> =
            physical_flows.iter().zip(&prob.limits).map(|(f, lim)| f.abs() / lim).collect();
        Ok(OverflowReport {
            target_branch,
            target_flow_fraction: per_branch_fractions[t],
            per_branch_fractions,
            physical_flows,
            false_loads,
            dispatch,
        })
    }
}

/// Physical consequence of the state attack `c_tilde` at operating point
/// `x_hat`: the operator reads false loads `L - base * dP(x_hat + c_tilde)`,
/// dispatches against them, and the true loads then flow.
pub fn overflow_evaluate(
    case: &NetworkCase,
    prob: &DcopfProblem,
    x_hat: &[Complex64],
    c_tilde: &[Complex64],
    target_branch: usize,
) -> Result<OverflowReport, AttackError> {
    let shift = injection_shift(case, x_hat, c_tilde);
    let false_loads = prob.loads.iter().zip(&shift).map(|(l, s)| l - case.base_mva * s.re).collect();
    OverflowReport::from_false_loads(case, prob, false_loads, target_branch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_line(limit: f64) -> NetworkCase {
        NetworkCase::parse(&format!(
            "[bus]\n1 1 0 0\n2 1 80 0\n[branch]\n1 1 2 0 0.1 0 {limit}\n[gen]\n1 0 60 10\n2 0 100 30\n"
        ))
        .unwrap()
    }

    #[test]
    fn one_generator_covers_load() {
        let case = NetworkCase::parse("[bus]\n1 1 0 0\n2 1 42 0\n[branch]\n1 1 2 0 0.1 0 100\n[gen]\n1 0 100 5\n").unwrap();
        let prob = DcopfProblem::from_case(&case, &DcMatrices::new(&case).unwrap());
        let s = solve_dcopf(&prob).unwrap();
        assert!((s.p_g[0] - 42.0).abs() < 1e-9);
        assert!((s.cost - 210.0).abs() < 1e-7);
    }

    #[test]
    fn merit_order() {
        let case = single_line(1000.0);
        let prob = DcopfProblem::from_case(&case, &DcMatrices::new(&case).unwrap());
        let s = solve_dcopf(&prob).unwrap();
        assert!((s.p_g[0] - 60.0).abs() < 1e-9 && (s.p_g[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn binding_line_shifts_to_local_unit() {
        let case = single_line(50.0);
        let prob = DcopfProblem::from_case(&case, &DcMatrices::new(&case).unwrap());
        let s = solve_dcopf(&prob).unwrap();
        assert!((s.p_g[0] - 50.0).abs() < 1e-9);
        assert!((s.line_flows[0].abs() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn shortage_is_reported() {
        let case = NetworkCase::parse("[bus]\n1 1 0 0\n2 1 142 0\n[branch]\n1 1 2 0 0.1 0 100\n[gen]\n1 0 100 5\n").unwrap();
        let prob = DcopfProblem::from_case(&case, &DcMatrices::new(&case).unwrap());
        assert!(matches!(solve_dcopf(&prob), Err(AttackError::Infeasible(_))));
    }

    #[test]
    fn honest_state_gives_no_overflow() {
        let case = single_line(50.0);
        let prob = DcopfProblem::from_case(&case, &DcMatrices::new(&case).unwrap());
        let x = vec![Complex64::new(1.0, 0.0); 2];
        let zero = vec![Complex64::new(0.0, 0.0); 2];
        let r = overflow_evaluate(&case, &prob, &x, &zero, 1).unwrap();
        assert!(r.per_branch_fractions.iter().all(|&f| f <= 1.0 + 1e-9));
    }
}
