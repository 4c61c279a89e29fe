//! The attacker-defender bilevel program.
//!
//! Upper level (attacker): choose angle shifts `c` on the modifiable buses to
//! maximise `|physical flow|` on the target branch, subject to every false
//! load `L_i + dL_i` staying within `tau * L_i` of the true load and an
//! optional `||c||_1` budget. The false loads are `dL = -base * B c`.
//!
//! Lower level (operator): the DCOPF on the false loads, written as
//! `A2 P <= b0 + G dL` with node balance as two inequalities, generator
//! bounds as rows and PTDF line limits as rows.
//!
//! The lower level is replaced by its KKT conditions with big-M
//! complementarity and the resulting MILP is solved by branch and bound.

use std::ops::Range;

use nalgebra::DMatrix;

use super::dcopf::DcopfProblem;
use super::AttackError;
use crate::grid::{DcMatrices, NetworkCase};
use crate::lp::{simplex_solve, LpProblem, LpSolution, LpStatus};
use crate::milp::{branch_and_bound_with, BnbOptions, IncumbentHeuristic, MilpProblem, MilpStatus};

#[derive(Debug, Clone)]
pub struct AdblpProblem {
    pub dcopf: DcopfProblem,
    pub target_branch: usize,
    target: usize,
    /// Bus positions the attacker may shift.
    pub attack_buses: Vec<usize>,
    pub tau: f64,
    pub l1_budget: Option<f64>,
    /// Bound on every `|c_j|` (radians).
    pub max_angle: f64,
    /// `-base * B[:, attack_buses]`: false load change per radian.
    response: DMatrix<f64>,
}

impl AdblpProblem {
    pub fn new(
        case: &NetworkCase,
        dc: &DcMatrices,
        attack_buses: Vec<usize>,
        target_branch: usize,
        tau: f64,
    ) -> Result<Self, AttackError> {
        if !(0.0..1.0).contains(&tau) {
            return Err(AttackError::Invalid(format!("tau must lie in [0, 1), got {tau}")));
        }
        let target = case
            .branch_pos(target_branch)
            .ok_or_else(|| AttackError::Invalid(format!("unknown target branch {target_branch}")))?;
        let p = case.n_buses();
        if attack_buses.iter().any(|&j| j >= p) {
            return Err(AttackError::Invalid("attack bus position out of range".into()));
        }
        let response = DMatrix::from_fn(p, attack_buses.len(), |i, k| -case.base_mva * dc.b_bus[(i, attack_buses[k])]);
        Ok(AdblpProblem {
            dcopf: DcopfProblem::from_case(case, dc),
            target_branch,
            target,
            attack_buses,
            tau,
            l1_budget: None,
            max_angle: 1.0,
            response,
        })
    }

    pub fn with_l1_budget(mut self, budget: f64) -> Self {
        self.l1_budget = Some(budget);
        self
    }

    pub fn with_max_angle(mut self, max_angle: f64) -> Self {
        self.max_angle = max_angle;
        self
    }

    pub fn with_loads(mut self, loads: Vec<f64>) -> Self {
        self.dcopf.loads = loads;
        self
    }

    pub fn target_position(&self) -> usize {
        self.target
    }

    /// False load change (MW per bus) for attack `c` on the attack buses.
    pub fn delta_load(&self, c: &[f64]) -> Vec<f64> {
        (0..self.response.nrows()).map(|i| (0..c.len()).map(|k| self.response[(i, k)] * c[k]).sum()).collect()
    }

    /// Expands `c` on the attack buses to a full per-bus vector.
    pub fn full_angles(&self, c: &[f64], p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (k, &j) in self.attack_buses.iter().enumerate() {
            out[j] = c[k];
        }
        out
    }

    fn touched_buses(&self) -> Vec<usize> {
        (0..self.response.nrows()).filter(|&i| (0..self.response.ncols()).any(|k| self.response[(i, k)] != 0.0)).collect()
    }

    /// LP over the attacker's feasible set alone; variables `c` (then `u`
    /// for the budget).
    fn attacker_lp(&self) -> LpProblem {
        let m = self.attack_buses.len();
        let mut lp = LpProblem::new(0);
        for _ in 0..m {
            lp.add_var(0.0, -self.max_angle, self.max_angle);
        }
        add_attacker_rows(self, &mut lp, 0);
        if let Some(budget) = self.l1_budget {
            let u0 = lp.n_vars();
            for _ in 0..m {
                lp.add_var(0.0, 0.0, f64::INFINITY);
            }
            add_budget_rows(&mut lp, 0, u0, m, budget);
        }
        lp
    }

    /// Physical target flow for dispatch `p_g` against the true loads.
    pub fn physical_target_flow(&self, p_g: &[f64]) -> f64 {
        let flows = self.dcopf.flows(p_g, &self.dcopf.loads);
        flows[self.target]
    }
}

fn add_attacker_rows(adblp: &AdblpProblem, lp: &mut LpProblem, c0: usize) {
    for i in adblp.touched_buses() {
        let coeffs: Vec<(usize, f64)> =
            (0..adblp.attack_buses.len()).map(|k| (c0 + k, adblp.response[(i, k)])).filter(|&(_, a)| a != 0.0).collect();
        let bound = adblp.tau * adblp.dcopf.loads[i].abs();
        if bound == 0.0 {
            lp.add_eq(coeffs, 0.0);
        } else {
            lp.add_le(coeffs.clone(), bound);
            lp.add_ge(coeffs, -bound);
        }
    }
}

fn add_budget_rows(lp: &mut LpProblem, c0: usize, u0: usize, m: usize, budget: f64) {
    for k in 0..m {
        lp.add_le(vec![(c0 + k, 1.0), (u0 + k, -1.0)], 0.0);
        lp.add_le(vec![(c0 + k, -1.0), (u0 + k, -1.0)], 0.0);
    }
    lp.add_le((0..m).map(|k| (u0 + k, 1.0)).collect(), budget);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    BalanceUp,
    BalanceDown,
    GenMin(usize),
    GenMax(usize),
    /// Branch position and direction (`+1`: flow <= F, `-1`: -flow <= F).
    Line(usize, i8),
}

/// The operator's DCOPF in row form `A2 P + gc c <= b0` (so `gc c = -G dL`),
/// with line rows that can never bind removed.
#[derive(Debug, Clone)]
pub struct LowerLevel {
    pub a2: DMatrix<f64>,
    pub b0: Vec<f64>,
    /// Right-hand-side decrease per radian of attack.
    pub gc: DMatrix<f64>,
    pub kinds: Vec<RowKind>,
    /// Valid upper bound on each row's slack.
    pub slack_bound: Vec<f64>,
    pub cost: Vec<f64>,
}

impl LowerLevel {
    pub fn build(adblp: &AdblpProblem) -> Result<Self, AttackError> {
        let prob = &adblp.dcopf;
        let ng = prob.n_gen();
        let total: f64 = prob.loads.iter().sum();
        let gptdf = prob.gen_ptdf();
        let mut a2_rows: Vec<Vec<f64>> = Vec::new();
        let mut b0 = Vec::new();
        let mut g_rows: Vec<Vec<f64>> = Vec::new();
        let mut kinds = Vec::new();
        let mut slack_bound = Vec::new();
        let zero_m = vec![0.0; adblp.attack_buses.len()];

        a2_rows.push(vec![1.0; ng]);
        b0.push(total);
        g_rows.push(zero_m.clone());
        kinds.push(RowKind::BalanceUp);
        slack_bound.push(0.0);
        a2_rows.push(vec![-1.0; ng]);
        b0.push(-total);
        g_rows.push(zero_m.clone());
        kinds.push(RowKind::BalanceDown);
        slack_bound.push(0.0);
        for g in 0..ng {
            let range = prob.p_max[g] - prob.p_min[g];
            let mut e = vec![0.0; ng];
            e[g] = -1.0;
            a2_rows.push(e.clone());
            b0.push(-prob.p_min[g]);
            g_rows.push(zero_m.clone());
            kinds.push(RowKind::GenMin(g));
            slack_bound.push(range);
            e[g] = 1.0;
            a2_rows.push(e);
            b0.push(prob.p_max[g]);
            g_rows.push(zero_m.clone());
            kinds.push(RowKind::GenMax(g));
            slack_bound.push(range);
        }

        // flow = gptdf_l P - ptdf_l L + per_rad c
        let mut att = adblp.attacker_lp();
        for l in 0..prob.ptdf.nrows() {
            let f = prob.limits[l];
            if !f.is_finite() {
                continue;
            }
            let load_flow: f64 = (0..prob.loads.len()).map(|b| prob.ptdf[(l, b)] * prob.loads[b]).sum();
            let per_rad: Vec<f64> = (0..adblp.attack_buses.len())
                .map(|k| -(0..prob.loads.len()).map(|b| prob.ptdf[(l, b)] * adblp.response[(b, k)]).sum::<f64>())
                .collect();
            let gl: Vec<f64> = (0..ng).map(|g| gptdf[(l, g)]).collect();
            let gen_max = greedy_extreme(&gl, &prob.p_min, &prob.p_max, total, true);
            let gen_min = greedy_extreme(&gl, &prob.p_min, &prob.p_max, total, false);
            let att_max = attacker_extreme(&mut att, &per_rad, true)?;
            let att_min = attacker_extreme(&mut att, &per_rad, false)?;
            let flow_max = gen_max - load_flow + att_max;
            let flow_min = gen_min - load_flow + att_min;
            let tol = 1e-9 * f.max(1.0);
            if flow_max > f - tol {
                a2_rows.push(gl.clone());
                b0.push(f + load_flow);
                g_rows.push(per_rad.clone());
                kinds.push(RowKind::Line(l, 1));
                slack_bound.push(f - flow_min.max(-f));
            }
            if flow_min < -f + tol {
                a2_rows.push(gl.iter().map(|v| -v).collect());
                b0.push(f - load_flow);
                g_rows.push(per_rad.iter().map(|v| -v).collect());
                kinds.push(RowKind::Line(l, -1));
                slack_bound.push(f + flow_max.min(f));
            }
        }
        let k = b0.len();
        let a2 = DMatrix::from_fn(k, ng, |i, j| a2_rows[i][j]);
        let gc = DMatrix::from_fn(k, adblp.attack_buses.len(), |i, j| g_rows[i][j]);
        Ok(LowerLevel { a2, b0, gc, kinds, slack_bound, cost: prob.cost.clone() })
    }

    pub fn n_rows(&self) -> usize {
        self.b0.len()
    }

    pub fn rhs(&self, c: &[f64]) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.b0[i] - (0..c.len()).map(|k| self.gc[(i, k)] * c[k]).sum::<f64>()).collect()
    }

    /// Solves the lower level for the given right-hand side with `P` free.
    pub fn solve(&self, rhs: &[f64]) -> Result<LpSolution, AttackError> {
        let ng = self.a2.ncols();
        let mut lp = LpProblem::new(0);
        for g in 0..ng {
            lp.add_var(self.cost[g], f64::NEG_INFINITY, f64::INFINITY);
        }
        for (i, &r) in rhs.iter().enumerate() {
            lp.add_le((0..ng).map(|g| (g, self.a2[(i, g)])).collect(), r);
        }
        Ok(simplex_solve(&lp)?)
    }
}

/// Extreme of `a . P` over `p_min <= P <= p_max`, `sum P = total`.
fn greedy_extreme(a: &[f64], p_min: &[f64], p_max: &[f64], total: f64, maximise: bool) -> f64 {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&x, &y| if maximise { a[y].total_cmp(&a[x]) } else { a[x].total_cmp(&a[y]) });
    let mut rest = total - p_min.iter().sum::<f64>();
    let mut value: f64 = a.iter().zip(p_min).map(|(a, p)| a * p).sum();
    for g in order {
        if rest <= 0.0 {
            break;
        }
        let add = (p_max[g] - p_min[g]).min(rest);
        value += a[g] * add;
        rest -= add;
    }
    value
}

fn attacker_extreme(lp: &mut LpProblem, per_rad: &[f64], maximise: bool) -> Result<f64, AttackError> {
    if per_rad.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    for o in lp.objective.iter_mut() {
        *o = 0.0;
    }
    for (k, &v) in per_rad.iter().enumerate() {
        lp.objective[k] = if maximise { -v } else { v };
    }
    let sol = simplex_solve(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(if maximise { -sol.objective } else { sol.objective }),
        LpStatus::Infeasible => Err(AttackError::Invalid("attacker constraints are infeasible".into())),
        LpStatus::Unbounded => Err(AttackError::Invalid("attacker flow influence is unbounded".into())),
    }
}

/// Variable blocks of the KKT-MILP.
#[derive(Debug, Clone)]
pub struct KktLayout {
    pub p: Range<usize>,
    pub c: Range<usize>,
    pub u: Option<Range<usize>>,
    pub lambda: Range<usize>,
    pub z: Range<usize>,
    /// `+1` maximises the target flow, `-1` its negative.
    pub direction: f64,
    /// Constant part of the target flow, `-ptdf_t L`.
    pub flow_offset: f64,
    pub big_m_dual: Vec<f64>,
    pub big_m_primal: Vec<f64>,
}

impl KktLayout {
    /// Target flow (MW) encoded by a MILP point.
    pub fn target_flow(&self, milp: &MilpProblem, x: &[f64]) -> f64 {
        -self.direction * milp.lp.objective_value(x) + self.flow_offset
    }
}

/// Single-level MILP equivalent to the bilevel program for one flow
/// direction. `m_d` holds the dual big-M per lower-level row; the primal
/// big-M is the default bound capped by each row's provable slack range.
pub fn kkt_reformulate(
    adblp: &AdblpProblem,
    lower: &LowerLevel,
    direction: f64,
    m_d: &[f64],
) -> (MilpProblem, KktLayout) {
    let prob = &adblp.dcopf;
    let ng = prob.n_gen();
    let m = adblp.attack_buses.len();
    let k = lower.n_rows();
    let mut lp = LpProblem::new(0);
    let gptdf = prob.gen_ptdf();
    let t = adblp.target;
    for g in 0..ng {
        lp.add_var(-direction * gptdf[(t, g)], f64::NEG_INFINITY, f64::INFINITY);
    }
    let c0 = lp.n_vars();
    for _ in 0..m {
        lp.add_var(0.0, -adblp.max_angle, adblp.max_angle);
    }
    let u = adblp.l1_budget.map(|_| {
        let u0 = lp.n_vars();
        for _ in 0..m {
            lp.add_var(0.0, 0.0, f64::INFINITY);
        }
        u0..u0 + m
    });
    let l0 = lp.n_vars();
    for &md in m_d {
        lp.add_var(0.0, 0.0, md);
    }
    let z0 = lp.n_vars();
    for _ in 0..k {
        lp.add_var(0.0, 0.0, 1.0);
    }

    let max_limit = prob.limits.iter().cloned().filter(|f| f.is_finite()).fold(0.0, f64::max);
    let spec_mp = 2.0 * (max_limit + prob.loads.iter().sum::<f64>());
    let big_m_primal: Vec<f64> = lower.slack_bound.iter().map(|&b| b.min(spec_mp)).collect();

    // Stationarity: cost + A2^T lambda = 0.
    for g in 0..ng {
        let coeffs = (0..k).map(|i| (l0 + i, lower.a2[(i, g)])).collect();
        lp.add_eq(coeffs, -lower.cost[g]);
    }
    for i in 0..k {
        let mut primal: Vec<(usize, f64)> = (0..ng).map(|g| (g, lower.a2[(i, g)])).collect();
        primal.extend((0..m).map(|j| (c0 + j, lower.gc[(i, j)])));
        // A2 P + gc c <= b0
        lp.add_le(primal.clone(), lower.b0[i]);
        // b0 - gc c - A2 P <= Mp (1 - z)
        let mut slack: Vec<(usize, f64)> = primal.into_iter().map(|(j, a)| (j, -a)).collect();
        slack.push((z0 + i, big_m_primal[i]));
        lp.add_le(slack, big_m_primal[i] - lower.b0[i]);
        lp.add_le(vec![(l0 + i, 1.0), (z0 + i, -m_d[i])], 0.0);
    }
    add_attacker_rows(adblp, &mut lp, c0);
    if let (Some(budget), Some(r)) = (adblp.l1_budget, u.as_ref()) {
        add_budget_rows(&mut lp, c0, r.start, m, budget);
    }
    let flow_offset = -(0..prob.loads.len()).map(|b| prob.ptdf[(t, b)] * prob.loads[b]).sum::<f64>();
    let layout = KktLayout {
        p: 0..ng,
        c: c0..c0 + m,
        u,
        lambda: l0..l0 + k,
        z: z0..z0 + k,
        direction,
        flow_offset,
        big_m_dual: m_d.to_vec(),
        big_m_primal,
    };
    (MilpProblem { lp, integer: (z0..z0 + k).collect() }, layout)
}

/// Builds a bilevel-feasible MILP point from an attack `c` by solving the
/// true lower level.
struct LowerLevelHeuristic<'a> {
    lower: &'a LowerLevel,
    layout: &'a KktLayout,
    seeds: Vec<Vec<f64>>,
}

impl LowerLevelHeuristic<'_> {
    fn complete(&self, c: &[f64]) -> Option<Vec<f64>> {
        let rhs = self.lower.rhs(c);
        let sol = self.lower.solve(&rhs).ok()?;
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let n = self.layout.z.end;
        let mut x = vec![0.0; n];
        x[self.layout.p.clone()].copy_from_slice(&sol.x);
        x[self.layout.c.clone()].copy_from_slice(c);
        if let Some(u) = &self.layout.u {
            for (k, j) in u.clone().enumerate() {
                x[j] = c[k].abs();
            }
        }
        for i in 0..self.lower.n_rows() {
            let act: f64 = (0..sol.x.len()).map(|g| self.lower.a2[(i, g)] * sol.x[g]).sum();
            let slack = rhs[i] - act;
            let lam = sol.duals[i].max(0.0);
            if lam > self.layout.big_m_dual[i] {
                return None;
            }
            x[self.layout.lambda.start + i] = lam;
            let tight = slack <= 1e-7 * (1.0 + rhs[i].abs());
            x[self.layout.z.start + i] = if tight { 1.0 } else { 0.0 };
            if !tight {
                x[self.layout.lambda.start + i] = 0.0;
            }
        }
        Some(x)
    }
}

impl IncumbentHeuristic for LowerLevelHeuristic<'_> {
    fn initial(&mut self, _problem: &MilpProblem) -> Vec<Vec<f64>> {
        std::mem::take(&mut self.seeds).iter().filter_map(|c| self.complete(c)).collect()
    }

    fn propose(&mut self, _problem: &MilpProblem, relaxation: &[f64]) -> Option<Vec<f64>> {
        self.complete(&relaxation[self.layout.c.clone()])
    }
}

#[derive(Debug, Clone)]
pub struct AdblpOptions {
    /// Dual big-M; defaults to `1e4 * max generator cost`.
    pub big_m_dual: Option<f64>,
    pub max_doublings: usize,
    pub bnb: BnbOptions,
    /// Limit the search to one flow direction (`+1` or `-1`).
    pub direction: Option<f64>,
}

impl Default for AdblpOptions {
    fn default() -> Self {
        AdblpOptions {
            big_m_dual: None,
            max_doublings: 3,
            bnb: BnbOptions { node_limit: 2000, abs_gap: 1e-6, rel_gap: 1e-9, int_tol: 1e-6, feas_tol: 1e-6 },
            direction: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdblpSolution {
    /// Angle attack on the attack buses, in `attack_buses` order.
    pub c: Vec<f64>,
    pub delta_load: Vec<f64>,
    pub p_g: Vec<f64>,
    /// Physical target flow (MW, signed) at the MILP point.
    pub target_flow: f64,
    pub status: MilpStatus,
    /// Objective gap (MW) left when the node budget ran out.
    pub gap: f64,
    pub nodes: usize,
    pub direction: f64,
    pub big_m_dual: f64,
    pub doublings: usize,
    pub lower_rows: usize,
}

/// Solves the bilevel program for both flow directions (unless restricted)
/// and keeps the larger `|flow|`.
pub fn solve_adblp(adblp: &AdblpProblem, opts: &AdblpOptions) -> Result<AdblpSolution, AttackError> {
    let lower = LowerLevel::build(adblp)?;
    let max_cost = adblp.dcopf.cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let directions: Vec<f64> = match opts.direction {
        Some(d) => vec![d.signum()],
        None => vec![1.0, -1.0],
    };
    let mut best: Option<AdblpSolution> = None;
    for dir in directions {
        let mut md = opts.big_m_dual.unwrap_or(1e4 * max_cost);
        let mut doublings = 0;
        let sol = loop {
            let (milp, layout) = kkt_reformulate(adblp, &lower, dir, &vec![md; lower.n_rows()]);
            let seeds = seed_attacks(adblp)?;
            let mut heur = LowerLevelHeuristic { lower: &lower, layout: &layout, seeds };
            let res = branch_and_bound_with(&milp, &opts.bnb, Some(&mut heur))?;
            let Some(x) = res.x.clone() else {
                if res.status == MilpStatus::Infeasible {
                    return Err(AttackError::Infeasible("bilevel program has no feasible point".into()));
                }
                return Err(AttackError::Invalid(format!("no incumbent found ({:?})", res.status)));
            };
            let saturated = layout.lambda.clone().any(|j| x[j] >= 0.999 * md);
            if saturated && doublings < opts.max_doublings {
                md *= 2.0;
                doublings += 1;
                continue;
            }
            let c = x[layout.c.clone()].to_vec();
            break AdblpSolution {
                delta_load: adblp.delta_load(&c),
                p_g: x[layout.p.clone()].to_vec(),
                target_flow: layout.target_flow(&milp, &x),
                c,
                status: res.status,
                gap: res.gap(),
                nodes: res.nodes,
                direction: dir,
                big_m_dual: md,
                doublings,
                lower_rows: lower.n_rows(),
            };
        };
        if best.as_ref().is_none_or(|b| sol.target_flow.abs() > b.target_flow.abs()) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one direction"))
}

/// Simple attacks used as starting incumbents: the extreme false-load
/// shifts along the target branch's PTDF row, both signs.
fn seed_attacks(adblp: &AdblpProblem) -> Result<Vec<Vec<f64>>, AttackError> {
    let prob = &adblp.dcopf;
    let t = adblp.target;
    let per_rad: Vec<f64> = (0..adblp.attack_buses.len())
        .map(|k| (0..prob.loads.len()).map(|b| prob.ptdf[(t, b)] * adblp.response[(b, k)]).sum::<f64>())
        .collect();
    let mut lp = adblp.attacker_lp();
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        for o in lp.objective.iter_mut() {
            *o = 0.0;
        }
        for (k, &v) in per_rad.iter().enumerate() {
            lp.objective[k] = -sign * v;
        }
        let sol = simplex_solve(&lp)?;
        if sol.status == LpStatus::Optimal {
            out.push(sol.x[..adblp.attack_buses.len()].to_vec());
        }
    }
    out.push(vec![0.0; adblp.attack_buses.len()]);
    Ok(out)
}
