//! AC network model: bus admittance matrix, complex power injections and a
//! polar Newton-Raphson power flow.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::grid::NetworkCase;

#[derive(Debug, thiserror::Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("singular power flow Jacobian")]
    Singular,
    #[error("invalid power flow input: {0}")]
    Input(String),
}

/// Bus admittance matrix in per unit (series and line charging; taps and bus
/// shunts are not modelled).
pub fn y_bus(case: &NetworkCase) -> DMatrix<Complex64> {
    let p = case.n_buses();
    let mut y = DMatrix::zeros(p, p);
    for br in &case.branches {
        let f = case.pos(br.from_bus);
        let t = case.pos(br.to_bus);
        let ys = br.series_admittance();
        let half = br.shunt_admittance() * 0.5;
        y[(f, f)] += ys + half;
        y[(t, t)] += ys + half;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    y
}

/// Complex power injected at every bus, `S_i = V_i conj((Y V)_i)`, per unit.
pub fn injections(ybus: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let vv = DVector::from_column_slice(v);
    let i = ybus * &vv;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// Operating point to solve for: generator outputs in case generator order,
/// bus loads in case bus order.
#[derive(Debug, Clone)]
pub struct PowerFlowInput {
    pub gen_mw: Vec<f64>,
    pub load_mw: Vec<f64>,
    pub load_mvar: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    pub max_mismatch: f64,
    /// Slack generation that closes the balance (MW), losses included.
    pub slack_mw: f64,
}

#[derive(Debug, Clone)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions { tol: 1e-8, max_iter: 30 }
    }
}

/// Slack is the case's first generator bus; every other generator bus is PV.
pub fn bus_kinds(case: &NetworkCase) -> Vec<BusKind> {
    let mut kinds = vec![BusKind::Pq; case.n_buses()];
    for g in &case.generators {
        kinds[case.pos(g.bus)] = BusKind::Pv;
    }
    kinds[case.default_slack()] = BusKind::Slack;
    kinds
}

/// Voltage magnitude setpoints: first generator at each bus, 1.0 elsewhere.
pub fn voltage_setpoints(case: &NetworkCase) -> Vec<f64> {
    let mut vm = vec![1.0; case.n_buses()];
    let mut seen = vec![false; case.n_buses()];
    for g in &case.generators {
        let k = case.pos(g.bus);
        if !seen[k] {
            vm[k] = g.v_set_pu;
            seen[k] = true;
        }
    }
    vm
}

/// Newton-Raphson power flow from a flat start (setpoint magnitudes, zero
/// angles).
pub fn newton_power_flow(
    case: &NetworkCase,
    ybus: &DMatrix<Complex64>,
    input: &PowerFlowInput,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let p = case.n_buses();
    if input.gen_mw.len() != case.generators.len() || input.load_mw.len() != p || input.load_mvar.len() != p {
        return Err(PowerFlowError::Input("vector lengths do not match the case".into()));
    }
    let kinds = bus_kinds(case);
    let base = case.base_mva;
    let mut p_spec = vec![0.0; p];
    let mut q_spec = vec![0.0; p];
    for (g, &mw) in case.generators.iter().zip(&input.gen_mw) {
        p_spec[case.pos(g.bus)] += mw / base;
    }
    for k in 0..p {
        p_spec[k] -= input.load_mw[k] / base;
        q_spec[k] -= input.load_mvar[k] / base;
    }
    let pvpq: Vec<usize> = (0..p).filter(|&k| kinds[k] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..p).filter(|&k| kinds[k] == BusKind::Pq).collect();
    let mut va = vec![0.0; p];
    let mut vm = voltage_setpoints(case);
    for &k in &pq {
        vm[k] = 1.0;
    }

    let n1 = pvpq.len();
    let dim = n1 + pq.len();
    let mut iterations = 0;
    loop {
        let v: Vec<Complex64> = (0..p).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
        let vv = DVector::from_column_slice(&v);
        let ibus = ybus * &vv;
        let s: Vec<Complex64> = (0..p).map(|k| v[k] * ibus[k].conj()).collect();
        let mut f = DVector::zeros(dim);
        for (a, &k) in pvpq.iter().enumerate() {
            f[a] = s[k].re - p_spec[k];
        }
        for (a, &k) in pq.iter().enumerate() {
            f[n1 + a] = s[k].im - q_spec[k];
        }
        let mismatch = f.amax();
        if mismatch < opts.tol {
            let slack = case.default_slack();
            let slack_load = input.load_mw[slack];
            let other_gen: f64 = case
                .generators
                .iter()
                .zip(&input.gen_mw)
                .filter(|(g, _)| case.pos(g.bus) == slack)
                .skip(1)
                .map(|(_, mw)| mw)
                .sum();
            return Ok(PowerFlowSolution {
                voltages: v,
                iterations,
                max_mismatch: mismatch,
                slack_mw: s[slack].re * base + slack_load - other_gen,
            });
        }
        if iterations >= opts.max_iter || !mismatch.is_finite() {
            return Err(PowerFlowError::Diverged { iterations, mismatch });
        }
        iterations += 1;

        let vn: Vec<Complex64> = v.iter().map(|z| z / z.norm()).collect();
        let j = Complex64::new(0.0, 1.0);
        let mut jac = DMatrix::zeros(dim, dim);
        let mut col_of = vec![usize::MAX; p];
        for (b, &k) in pvpq.iter().enumerate() {
            col_of[k] = b;
        }
        let mut vm_col = vec![usize::MAX; p];
        for (b, &k) in pq.iter().enumerate() {
            vm_col[k] = n1 + b;
        }
        let mut row_p = vec![usize::MAX; p];
        let mut row_q = vec![usize::MAX; p];
        for (a, &k) in pvpq.iter().enumerate() {
            row_p[k] = a;
        }
        for (a, &k) in pq.iter().enumerate() {
            row_q[k] = n1 + a;
        }
        for r in 0..p {
            if row_p[r] == usize::MAX {
                continue;
            }
            for c in 0..p {
                let yrc = ybus[(r, c)];
                let diag = r == c;
                if yrc == Complex64::new(0.0, 0.0) && !diag {
                    continue;
                }
                // dS_r/dVa_c = j V_r conj(delta_rc I_r - Y_rc V_c)
                // dS_r/dVm_c = V_r conj(Y_rc Vn_c) + delta_rc conj(I_r) Vn_r
                let mut dva = -yrc * v[c];
                let mut dvm = v[r] * (yrc * vn[c]).conj();
                if diag {
                    dva += ibus[r];
                    dvm += ibus[r].conj() * vn[r];
                }
                let dva = j * v[r] * dva.conj();
                if col_of[c] != usize::MAX {
                    jac[(row_p[r], col_of[c])] = dva.re;
                    if row_q[r] != usize::MAX {
                        jac[(row_q[r], col_of[c])] = dva.im;
                    }
                }
                if vm_col[c] != usize::MAX {
                    jac[(row_p[r], vm_col[c])] = dvm.re;
                    if row_q[r] != usize::MAX {
                        jac[(row_q[r], vm_col[c])] = dvm.im;
                    }
                }
            }
        }
        let dx = jac.lu().solve(&f).ok_or(PowerFlowError::Singular)?;
        for (b, &k) in pvpq.iter().enumerate() {
            va[k] -= dx[b];
        }
        for (b, &k) in pq.iter().enumerate() {
            vm[k] -= dx[n1 + b];
        }
    }
}

/// Total active losses (per unit) summed over branches.
pub fn branch_losses(case: &NetworkCase, v: &[Complex64]) -> f64 {
    case.branches
        .iter()
        .map(|br| {
            let f = v[case.pos(br.from_bus)];
            let t = v[case.pos(br.to_bus)];
            let ys = br.series_admittance();
            let half = br.shunt_admittance() * 0.5;
            let i_f = (ys + half) * f - ys * t;
            let i_t = (ys + half) * t - ys * f;
            (f * i_f.conj() + t * i_t.conj()).re
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> NetworkCase {
        NetworkCase::parse("[bus]\n1 1 0 0\n2 1 50 20\n[branch]\n1 1 2 0.01 0.1 0.02 100\n[gen]\n1 0 100 1\n").unwrap()
    }

    #[test]
    fn two_bus_balance_and_losses() {
        let case = two_bus();
        let y = y_bus(&case);
        let input = PowerFlowInput { gen_mw: vec![0.0], load_mw: vec![0.0, 50.0], load_mvar: vec![0.0, 20.0] };
        let sol = newton_power_flow(&case, &y, &input, &PowerFlowOptions::default()).unwrap();
        let s = injections(&y, &sol.voltages);
        assert!((s[1].re + 0.5).abs() < 1e-8);
        assert!((s[1].im + 0.2).abs() < 1e-8);
        let losses = branch_losses(&case, &sol.voltages);
        assert!(losses > 0.0);
        assert!((sol.slack_mw / 100.0 - 0.5 - losses).abs() < 1e-8);
    }

    #[test]
    fn lossless_no_load_stays_flat() {
        let case = NetworkCase::parse("[bus]\n1 1 0 0\n2 1 0 0\n[branch]\n1 1 2 0 0.1 0 100\n[gen]\n1 0 100 1\n").unwrap();
        let y = y_bus(&case);
        let input = PowerFlowInput { gen_mw: vec![0.0], load_mw: vec![0.0; 2], load_mvar: vec![0.0; 2] };
        let sol = newton_power_flow(&case, &y, &input, &PowerFlowOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!((sol.voltages[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn infeasible_load_diverges() {
        let case = two_bus();
        let y = y_bus(&case);
        let input = PowerFlowInput { gen_mw: vec![0.0], load_mw: vec![0.0, 5000.0], load_mvar: vec![0.0, 0.0] };
        assert!(newton_power_flow(&case, &y, &input, &PowerFlowOptions::default()).is_err());
    }
}
