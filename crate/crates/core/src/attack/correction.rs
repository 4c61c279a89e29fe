use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::AttackError;
use crate::grid::{DcMatrices, NetworkCase};
use crate::powerflow::{injections, y_bus};

/// `S(x_hat + c) - S(x_hat)` per bus, per unit.
pub fn injection_shift(case: &NetworkCase, x_hat: &[Complex64], c: &[Complex64]) -> Vec<Complex64> {
    let y = y_bus(case);
    let attacked: Vec<Complex64> = x_hat.iter().zip(c).map(|(x, c)| x + c).collect();
    let before = injections(&y, x_hat);
    let after = injections(&y, &attacked);
    after.iter().zip(&before).map(|(a, b)| a - b).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct CorrectionOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        CorrectionOptions { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct CorrectionResult {
    pub c_tilde: Vec<Complex64>,
    pub iterations: usize,
    /// Largest `|dS|` at a zero-injection bus (per unit).
    pub zero_injection_mismatch: f64,
    /// Largest deviation of an active injection shift from the DC intent
    /// `B c_angle`, per unit.
    pub load_mismatch: f64,
}

/// Lifts the angle attack `c_angle` (nonzero only on `modifiable` bus
/// positions) to a complex attack `c_tilde` on the same buses such that, in
/// the AC model around `x_hat`,
///
/// * zero-injection buses keep their complex injection, and
/// * every other bus touched by the attack sees the active injection shift
///   the DC model intended, `(B c_angle)_i`.
///
/// Unknowns are the magnitudes and angles of the modifiable buses. The
/// system is usually underdetermined; Newton takes minimum-norm steps from
/// the angle-only attack. When there are more equations than unknowns only
/// the zero-injection conditions are enforced.
pub fn zero_injection_correct(
    case: &NetworkCase,
    dc: &DcMatrices,
    x_hat: &[Complex64],
    c_angle: &[f64],
    modifiable: &[usize],
    opts: &CorrectionOptions,
) -> Result<CorrectionResult, AttackError> {
    let p = case.n_buses();
    if c_angle.len() != p || x_hat.len() != p {
        return Err(AttackError::Invalid("state vectors do not match the case".into()));
    }
    if let Some(j) = (0..p).find(|&j| c_angle[j] != 0.0 && !modifiable.contains(&j)) {
        return Err(AttackError::Invalid(format!("angle attack on bus position {j} outside the modifiable set")));
    }
    let zero = vec![Complex64::new(0.0, 0.0); p];
    if c_angle.iter().all(|&c| c == 0.0) || modifiable.is_empty() {
        return Ok(CorrectionResult { c_tilde: zero, iterations: 0, zero_injection_mismatch: 0.0, load_mismatch: 0.0 });
    }

    let adj = case.adjacency();
    let mut touched = BTreeSet::new();
    for &j in modifiable {
        touched.insert(j);
        touched.extend(adj[j].iter().copied());
    }
    let intent: Vec<f64> = (0..p).map(|i| (0..p).map(|j| dc.b_bus[(i, j)] * c_angle[j]).sum()).collect();
    let zi: Vec<usize> = touched.iter().copied().filter(|&i| case.buses[i].is_zero_injection).collect();
    let loads: Vec<usize> = touched.iter().copied().filter(|&i| !case.buses[i].is_zero_injection).collect();
    let n_unknown = 2 * modifiable.len();
    let enforce_loads = 2 * zi.len() + loads.len() <= n_unknown;
    // Rows: P then Q at zero-injection buses, then P at the other buses.
    let mut rows: Vec<(usize, bool, f64)> = Vec::new();
    for &i in &zi {
        rows.push((i, false, 0.0));
        rows.push((i, true, 0.0));
    }
    if enforce_loads {
        for &i in &loads {
            rows.push((i, false, intent[i]));
        }
    }

    let ybus = y_bus(case);
    let s0 = injections(&ybus, x_hat);
    let mut vm: Vec<f64> = x_hat.iter().map(|z| z.norm()).collect();
    let mut va: Vec<f64> = x_hat.iter().zip(c_angle).map(|(z, c)| z.arg() + c).collect();
    let jj = Complex64::new(0.0, 1.0);

    let mut iterations = 0;
    loop {
        let mut v = x_hat.to_vec();
        for &j in modifiable {
            v[j] = Complex64::from_polar(vm[j], va[j]);
        }
        let ib = &ybus * DVector::from_column_slice(&v);
        let s: Vec<Complex64> = (0..p).map(|k| v[k] * ib[k].conj()).collect();
        let f = DVector::from_iterator(
            rows.len(),
            rows.iter().map(|&(i, q, target)| {
                let ds = s[i] - s0[i];
                (if q { ds.im } else { ds.re }) - target
            }),
        );
        let mismatch = f.amax();
        if mismatch < opts.tol {
            let c_tilde: Vec<Complex64> = v.iter().zip(x_hat).map(|(a, b)| a - b).collect();
            let zero_injection_mismatch = zi.iter().map(|&i| (s[i] - s0[i]).norm()).fold(0.0, f64::max);
            let load_mismatch = loads.iter().map(|&i| ((s[i] - s0[i]).re - intent[i]).abs()).fold(0.0, f64::max);
            return Ok(CorrectionResult { c_tilde, iterations, zero_injection_mismatch, load_mismatch });
        }
        if iterations >= opts.max_iter || !mismatch.is_finite() {
            return Err(AttackError::NoConvergence { iterations, mismatch });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(rows.len(), n_unknown);
        for (r, &(i, q, _)) in rows.iter().enumerate() {
            for (k, &j) in modifiable.iter().enumerate() {
                let yij = ybus[(i, j)];
                if yij == Complex64::new(0.0, 0.0) && i != j {
                    continue;
                }
                let vn = v[j] / v[j].norm();
                let mut dva = -yij * v[j];
                let mut dvm = v[i] * (yij * vn).conj();
                if i == j {
                    dva += ib[i];
                    dvm += ib[i].conj() * vn;
                }
                let dva = jj * v[i] * dva.conj();
                jac[(r, 2 * k)] = if q { dva.im } else { dva.re };
                jac[(r, 2 * k + 1)] = if q { dvm.im } else { dvm.re };
            }
        }
        let step = jac
            .svd(true, true)
            .solve(&f, 1e-14)
            .map_err(|e| AttackError::Invalid(format!("correction step failed: {e}")))?;
        for (k, &j) in modifiable.iter().enumerate() {
            va[j] -= step[2 * k];
            vm[j] -= step[2 * k + 1];
        }
    }
}
