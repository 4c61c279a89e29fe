use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{GridError, NetworkCase, PmuPlacement};
use crate::linalg;

/// What a row of `H` measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MeasurementKind {
    /// Complex voltage of the PMU bus (a unit row of `H`).
    Voltage { bus: usize },
    /// Complex current leaving `at_bus` on `branch`.
    Current { branch: usize, at_bus: usize },
}

impl MeasurementKind {
    /// Bus whose PMU produces this row.
    pub fn pmu_bus(&self) -> usize {
        match *self {
            MeasurementKind::Voltage { bus } => bus,
            MeasurementKind::Current { at_bus, .. } => at_bus,
        }
    }
}

/// The linear PMU model `w = H x + e`, `x` the complex bus voltages in case
/// bus order.
///
/// Noise is described per row by the standard deviation `sigma[k]` of each
/// real component of `e_k`, so `R = diag(sigma^2)` acts on the complex
/// vector and the chi-square statistic `r^H R^-1 r` has `2n - 2p` degrees of
/// freedom.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    h: DMatrix<Complex64>,
    sigma: Vec<f64>,
    rows: Vec<MeasurementKind>,
}

pub(crate) const DEFAULT_SIGMA: f64 = 1e-4;

impl MeasurementModel {
    /// Builds `H = [I'; Y]`: one voltage row per PMU bus, then one current
    /// row per branch end incident to a PMU bus. Fails unless `H` has full
    /// column rank.
    pub fn build(case: &NetworkCase, placement: &PmuPlacement) -> Result<Self, GridError> {
        for &b in &placement.pmu_buses {
            if case.bus_pos(b).is_none() {
                return Err(GridError::DanglingBus { element: "PMU placement".into(), bus: b });
            }
        }
        let p = case.n_buses();
        let mut rows = Vec::new();
        for &b in &placement.pmu_buses {
            rows.push(MeasurementKind::Voltage { bus: b });
        }
        for &b in &placement.pmu_buses {
            for br in &case.branches {
                if br.from_bus == b || br.to_bus == b {
                    rows.push(MeasurementKind::Current { branch: br.id, at_bus: b });
                }
            }
        }
        let mut h = DMatrix::zeros(rows.len(), p);
        for (k, row) in rows.iter().enumerate() {
            match *row {
                MeasurementKind::Voltage { bus } => h[(k, case.pos(bus))] = Complex64::new(1.0, 0.0),
                MeasurementKind::Current { branch, at_bus } => {
                    let br = case.branches.iter().find(|x| x.id == branch).expect("branch exists");
                    let other = if br.from_bus == at_bus { br.to_bus } else { br.from_bus };
                    let y = br.series_admittance();
                    let half_shunt = br.shunt_admittance() * 0.5;
                    h[(k, case.pos(at_bus))] += y + half_shunt;
                    h[(k, case.pos(other))] -= y;
                }
            }
        }
        let model = MeasurementModel { sigma: vec![DEFAULT_SIGMA; rows.len()], h, rows };
        let rank = if model.n() == 0 { 0 } else { linalg::numerical_rank(&model.real_h(), 1e-10) };
        if rank < 2 * p {
            return Err(GridError::Unobservable { rank: rank / 2, states: p });
        }
        Ok(model)
    }

    /// Number of complex measurements.
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// Number of complex states.
    pub fn p(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &DMatrix<Complex64> {
        &self.h
    }

    pub fn rows(&self) -> &[MeasurementKind] {
        &self.rows
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Diagonal of `R`.
    pub fn r_diag(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Self {
        assert_eq!(sigma.len(), self.n(), "one sigma per measurement");
        assert!(sigma.iter().all(|&s| s > 0.0), "R must be positive definite");
        self.sigma = sigma;
        self
    }

    /// Sets `sigma_k = rel_std * max(|(H x)_k|, floor)`, the per-component
    /// spread produced by relative magnitude and absolute angle noise of
    /// size `rel_std` around the operating point `x`.
    pub fn calibrated(self, x: &[Complex64], rel_std: f64, floor: f64) -> Self {
        let w = self.measure(x);
        let sigma = w.iter().map(|z| rel_std * z.norm().max(floor)).collect();
        self.with_sigma(sigma)
    }

    /// Noise-free measurements `H x`.
    pub fn measure(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.p());
        (0..self.n()).map(|i| (0..self.p()).map(|j| self.h[(i, j)] * x[j]).sum()).collect()
    }

    /// `H` in rectangular real form (`2n x 2p`).
    pub fn real_h(&self) -> DMatrix<f64> {
        linalg::complex_to_real(&self.h)
    }

    /// Rows whose measurement comes from one of `pmus`.
    pub fn rows_of_pmus(&self, pmus: &std::collections::BTreeSet<usize>) -> Vec<usize> {
        self.rows.iter().enumerate().filter(|(_, r)| pmus.contains(&r.pmu_bus())).map(|(k, _)| k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> NetworkCase {
        NetworkCase::parse("[bus]\n1 1 0 0\n2 1 10 0\n[branch]\n1 1 2 0.01 0.1 0.0 100\n[gen]\n1 0 50 1\n").unwrap()
    }

    #[test]
    fn smallest_observable_system() {
        let m = MeasurementModel::build(&two_bus(), &PmuPlacement::new([1])).unwrap();
        assert_eq!((m.n(), m.p()), (2, 2));
        assert_eq!(m.h()[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(m.h()[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn triangle_full_placement_counts() {
        let case = NetworkCase::parse(
            "[bus]\n1 1 0 0\n2 1 1 0\n3 1 1 0\n[branch]\n1 1 2 0 0.1 0 10\n2 2 3 0 0.1 0 10\n3 1 3 0 0.1 0 10\n[gen]\n1 0 10 1\n",
        )
        .unwrap();
        let m = MeasurementModel::build(&case, &PmuPlacement::new([1, 2, 3])).unwrap();
        assert_eq!((m.n(), m.p()), (9, 3));
        let voltages = m.rows().iter().filter(|r| matches!(r, MeasurementKind::Voltage { .. })).count();
        assert_eq!(voltages, 3);
    }

    #[test]
    fn empty_placement_is_unobservable() {
        assert!(matches!(
            MeasurementModel::build(&two_bus(), &PmuPlacement::default()),
            Err(GridError::Unobservable { .. })
        ));
    }

    #[test]
    fn current_row_matches_pi_model() {
        let case = NetworkCase::parse("[bus]\n1 1 0 0\n2 1 10 0\n[branch]\n7 1 2 0.01 0.1 0.04 100\n[gen]\n1 0 50 1\n").unwrap();
        let m = MeasurementModel::build(&case, &PmuPlacement::new([2])).unwrap();
        let br = &case.branches[0];
        let x = [Complex64::from_polar(1.0, 0.0), Complex64::from_polar(0.98, -0.05)];
        let w = m.measure(&x);
        let expected = br.series_admittance() * (x[1] - x[0]) + Complex64::new(0.0, 0.02) * x[1];
        assert!((w[1] - expected).norm() < 1e-14);
        assert_eq!(m.rows()[1], MeasurementKind::Current { branch: 7, at_bus: 2 });
    }
}
