//! Weighted least squares state estimation and the chi-square bad data
//! detector.

mod chi2;

pub use chi2::{chi2_cdf, chi2_quantile, normal_quantile, wilson_hilferty};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::MeasurementModel;
use crate::linalg;

#[derive(Debug, thiserror::Error)]
pub enum EstimationError {
    #[error("measurement matrix is rank deficient (pivot ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("frame has {got} measurements, model expects {expected}")]
    FrameLength { got: usize, expected: usize },
    #[error("chi-square test needs positive degrees of freedom, got {0}")]
    NoRedundancy(i64),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

/// One PMU snapshot `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub sample_index: usize,
    pub w: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct StateEstimate {
    pub x_hat: Vec<Complex64>,
    /// `w - H x_hat`
    pub residue: Vec<Complex64>,
    /// `r^H R^-1 r`
    pub chi2_stat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BddVerdict {
    pub flagged: bool,
    pub threshold: f64,
}

/// WLS estimator with the QR factorisation of `R^-1/2 H` (rectangular real
/// form) computed once and reused for every frame.
#[derive(Debug, Clone)]
pub struct WlsEstimator {
    model: MeasurementModel,
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
    inv_sigma: Vec<f64>,
}

impl WlsEstimator {
    pub fn new(model: &MeasurementModel) -> Result<Self, EstimationError> {
        let n = model.n();
        let inv_sigma: Vec<f64> = model.sigma().iter().map(|s| 1.0 / s).collect();
        let mut hw = model.real_h();
        for i in 0..2 * n {
            let s = inv_sigma[i % n];
            hw.row_mut(i).scale_mut(s);
        }
        if hw.nrows() < hw.ncols() {
            return Err(EstimationError::RankDeficient(0.0));
        }
        let qr = hw.qr();
        let r = qr.r();
        let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min / max < 1e-12 {
            return Err(EstimationError::RankDeficient(if max > 0.0 { min / max } else { 0.0 }));
        }
        Ok(WlsEstimator { model: model.clone(), q_t: qr.q().transpose(), r, inv_sigma })
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    /// Real degrees of freedom of the residue, `2n - 2p`.
    pub fn dof(&self) -> i64 {
        2 * self.model.n() as i64 - 2 * self.model.p() as i64
    }

    pub fn estimate_states(&self, w: &[Complex64]) -> Result<Vec<Complex64>, EstimationError> {
        let n = self.model.n();
        if w.len() != n {
            return Err(EstimationError::FrameLength { got: w.len(), expected: n });
        }
        let mut b = linalg::stack_complex(w);
        for i in 0..2 * n {
            b[i] *= self.inv_sigma[i % n];
        }
        let qb = &self.q_t * b;
        let x = self.r.solve_upper_triangular(&qb).ok_or(EstimationError::RankDeficient(0.0))?;
        Ok(linalg::unstack_complex(&x))
    }

    pub fn estimate(&self, frame: &MeasurementFrame) -> Result<StateEstimate, EstimationError> {
        let x_hat = self.estimate_states(&frame.w)?;
        let hx = self.model.measure(&x_hat);
        let residue: Vec<Complex64> = frame.w.iter().zip(&hx).map(|(w, h)| w - h).collect();
        let chi2_stat = residue
            .iter()
            .zip(self.model.sigma())
            .map(|(r, s)| r.norm_sqr() / (s * s))
            .sum();
        Ok(StateEstimate { x_hat, residue, chi2_stat })
    }
}

/// One-shot WLS estimate; prefer [`WlsEstimator`] for streams.
pub fn wls_estimate(model: &MeasurementModel, frame: &MeasurementFrame) -> Result<StateEstimate, EstimationError> {
    WlsEstimator::new(model)?.estimate(frame)
}

/// Chi-square bad data test at false-alarm probability `alpha`.
pub fn chi2_bdd(est: &StateEstimate, dof: i64, alpha: f64) -> Result<BddVerdict, EstimationError> {
    if dof <= 0 {
        return Err(EstimationError::NoRedundancy(dof));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimationError::BadAlpha(alpha));
    }
    let threshold = chi2_quantile(1.0 - alpha, dof as f64);
    Ok(BddVerdict { flagged: est.chi2_stat > threshold, threshold })
}

/// `||residue(w + H c) - residue(w)||_2`; zero up to rounding for every `c`.
pub fn residue_invariance_check(
    estimator: &WlsEstimator,
    frame: &MeasurementFrame,
    c: &[Complex64],
) -> Result<f64, EstimationError> {
    let d = estimator.model().measure(c);
    residue_shift(estimator, frame, &d)
}

/// Residue change caused by adding an arbitrary measurement perturbation `d`.
pub fn residue_shift(
    estimator: &WlsEstimator,
    frame: &MeasurementFrame,
    d: &[Complex64],
) -> Result<f64, EstimationError> {
    let clean = estimator.estimate(frame)?;
    let attacked = MeasurementFrame {
        sample_index: frame.sample_index,
        w: frame.w.iter().zip(d).map(|(w, d)| w + d).collect(),
    };
    let bad = estimator.estimate(&attacked)?;
    let diff: Vec<Complex64> = bad.residue.iter().zip(&clean.residue).map(|(a, b)| a - b).collect();
    Ok(linalg::norm2(&diff))
}

/// `R^-1`-weighted inner product of a residue with `H v`, used to check the
/// projection property.
pub fn weighted_inner(model: &MeasurementModel, residue: &[Complex64], v: &[Complex64]) -> Complex64 {
    let hv = model.measure(v);
    residue.iter().zip(&hv).zip(model.sigma()).map(|((r, h), s)| h.conj() * r / (s * s)).sum()
}
