use nalgebra::{DMatrix, DVector};

use super::{GridError, NetworkCase};

/// DC network matrices. Injections and flows share units (MW in, MW out),
/// `b_bus` is in per unit on the case base.
#[derive(Debug, Clone)]
pub struct DcMatrices {
    pub b_bus: DMatrix<f64>,
    /// `branches x buses`; column `slack` is zero.
    pub ptdf: DMatrix<f64>,
    /// `+1` at the from bus, `-1` at the to bus.
    pub incidence: DMatrix<f64>,
    pub susceptance: Vec<f64>,
    pub slack: usize,
}

impl DcMatrices {
    pub fn new(case: &NetworkCase) -> Result<Self, GridError> {
        Self::with_slack(case, case.default_slack())
    }

    /// `slack` is a bus position, not a bus id.
    pub fn with_slack(case: &NetworkCase, slack: usize) -> Result<Self, GridError> {
        let p = case.n_buses();
        let m = case.branches.len();
        let mut incidence = DMatrix::zeros(m, p);
        let mut susceptance = Vec::with_capacity(m);
        for (k, br) in case.branches.iter().enumerate() {
            incidence[(k, case.pos(br.from_bus))] = 1.0;
            incidence[(k, case.pos(br.to_bus))] = -1.0;
            susceptance.push(br.dc_susceptance());
        }
        let bf = DMatrix::from_diagonal(&DVector::from_vec(susceptance.clone())) * &incidence;
        let b_bus = incidence.transpose() * &bf;

        let keep: Vec<usize> = (0..p).filter(|&j| j != slack).collect();
        let reduced = b_bus.select_rows(&keep).select_columns(&keep);
        let lu = reduced.lu();
        let inv = lu.try_inverse().ok_or(GridError::SingularSusceptance)?;
        let scale = inv.amax().max(1.0);
        if !inv.iter().all(|v| v.is_finite()) || scale > 1e12 {
            return Err(GridError::SingularSusceptance);
        }
        let mut x = DMatrix::zeros(p, p);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                x[(i, j)] = inv[(a, b)];
            }
        }
        let ptdf = bf * x;
        Ok(DcMatrices { b_bus, ptdf, incidence, susceptance, slack })
    }

    /// Branch flows for a vector of net bus injections.
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(injections);
        (&self.ptdf * v).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bus_ptdf() {
        let case = NetworkCase::parse("[bus]\n1 1 0 0\n2 1 10 0\n[branch]\n1 1 2 0 0.2 0 100\n[gen]\n2 0 50 1\n").unwrap();
        let dc = DcMatrices::new(&case).unwrap();
        assert_eq!(dc.slack, 1);
        assert!((dc.ptdf[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(dc.ptdf[(0, 1)], 0.0);
    }

    #[test]
    fn triangle_splits_two_thirds_one_third() {
        // Kirchhoff by hand: 1 MW from bus 1 to slack bus 3 over equal
        // reactances sees impedance x on the direct path and 2x on 1-2-3.
        let case = NetworkCase::parse(
            "[bus]\n1 1 0 0\n2 1 0 0\n3 1 10 0\n[branch]\n1 1 2 0 0.1 0 10\n2 2 3 0 0.1 0 10\n3 1 3 0 0.1 0 10\n[gen]\n3 0 10 1\n",
        )
        .unwrap();
        let dc = DcMatrices::new(&case).unwrap();
        let f = dc.flows(&[1.0, 0.0, -1.0]);
        assert!((f[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!((f[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((f[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn incidence_rows_sum_to_zero() {
        let case = NetworkCase::parse(
            "[bus]\n1 1 0 0\n2 1 0 0\n3 1 10 0\n[branch]\n1 1 2 0 0.1 0 10\n2 2 3 0 0.1 0 10\n3 1 3 0 0.1 0 10\n[gen]\n3 0 10 1\n",
        )
        .unwrap();
        let dc = DcMatrices::new(&case).unwrap();
        for r in dc.incidence.row_iter() {
            assert_eq!(r.sum(), 0.0);
        }
    }
}
