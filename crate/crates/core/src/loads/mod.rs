//! Synthetic bus load profiles.
//!
//! A reference load series is cut into equal segments and stacked into a
//! matrix `P`. Its truncated SVD `P ~ U_f S_f Vt_f` gives `f` temporal
//! archetypes (rows of `Vt_f`); each column of `U_f` is summarised by a
//! Gaussian. New profiles draw one coefficient row per bus, mix the rows of
//! neighbouring buses with the hop-distance kernel `D`, and reconstruct:
//!
//! ```text
//! P_new = (D U_new) S_f Vt_f
//! ```

mod io;
mod surrogate;
mod svd;

pub use surrogate::{make_surrogate_reference, SurrogateParams};
pub use svd::{svd_jacobi, Svd};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grid::NetworkCase;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("empty load matrix")]
    Empty,
    #[error("series of {len} samples is shorter than one segment of {segment}")]
    TooShort { len: usize, segment: usize },
    #[error("load series must be positive (sample {0})")]
    NonPositive(usize),
    #[error("Jacobi SVD did not converge in {0} sweeps")]
    SvdNoConvergence(usize),
    #[error("invalid load model: {0}")]
    Invalid(String),
    #[error("load file: {0}")]
    Io(String),
}

/// Segments of a reference series, one per row (MW).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMatrix {
    pub p: DMatrix<f64>,
    pub segment_length: usize,
    pub sample_rate_hz: f64,
}

impl LoadMatrix {
    pub fn n_segments(&self) -> usize {
        self.p.nrows()
    }

    /// Every `stride`-th segment, starting with the first.
    pub fn every_nth(&self, stride: usize) -> LoadMatrix {
        let stride = stride.max(1);
        let rows: Vec<usize> = (0..self.p.nrows()).step_by(stride).collect();
        LoadMatrix { p: self.p.select_rows(rows.iter()), ..self.clone() }
    }
}

/// Consecutive non-overlapping windows of `segment_length`; a trailing
/// partial window is dropped.
pub fn segment_timeseries(series: &[f64], segment_length: usize, sample_rate_hz: f64) -> Result<LoadMatrix, LoadError> {
    if segment_length == 0 {
        return Err(LoadError::Invalid("segment length must be positive".into()));
    }
    if series.len() < segment_length {
        return Err(LoadError::TooShort { len: series.len(), segment: segment_length });
    }
    if let Some(i) = series.iter().position(|&v| !(v > 0.0)) {
        return Err(LoadError::NonPositive(i));
    }
    let rows = series.len() / segment_length;
    let p = DMatrix::from_fn(rows, segment_length, |r, c| series[r * segment_length + c]);
    Ok(LoadMatrix { p, segment_length, sample_rate_hz })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDist {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBasisModel {
    /// `segments x r`
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    /// `r x samples`
    pub vt: DMatrix<f64>,
    pub rank_used: usize,
    pub coeff_dists: Vec<CoefficientDist>,
    pub sample_rate_hz: f64,
}

impl TemporalBasisModel {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn n_samples(&self) -> usize {
        self.vt.ncols()
    }

    /// `U_f S_f Vt_f`
    pub fn reconstruct(&self, f: usize) -> DMatrix<f64> {
        let f = f.min(self.rank());
        let mut us = self.u.columns(0, f).into_owned();
        for k in 0..f {
            us.column_mut(k).scale_mut(self.s[k]);
        }
        us * self.vt.rows(0, f)
    }

    /// Share of `||P||_F^2` carried by the first `f` singular values.
    pub fn energy_fraction(&self, f: usize) -> f64 {
        let total: f64 = self.s.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 1.0;
        }
        self.s.iter().take(f).map(|s| s * s).sum::<f64>() / total
    }
}

/// Thin SVD of the load matrix keeping `rank_used` archetypes.
pub fn svd_factorize(p: &LoadMatrix, rank_used: usize) -> Result<TemporalBasisModel, LoadError> {
    let svd = svd_jacobi(&p.p)?;
    let r = svd.s.len();
    if rank_used == 0 || rank_used > r {
        return Err(LoadError::Invalid(format!("rank {rank_used} outside 1..={r}")));
    }
    let mut model = TemporalBasisModel {
        u: svd.u,
        s: svd.s,
        vt: svd.vt,
        rank_used,
        coeff_dists: Vec::new(),
        sample_rate_hz: p.sample_rate_hz,
    };
    model.coeff_dists = fit_coefficient_distributions(&model.u, rank_used)?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankError {
    pub f: usize,
    pub rmse: f64,
}

/// RMSE of the rank-`f` reconstruction for `f = 1..=r`.
///
/// The error of the full reconstruction is measured directly; the truncated
/// errors add the discarded singular energy to it, which makes the curve
/// nonincreasing by construction.
pub fn rmse_vs_rank(model: &TemporalBasisModel, p: &LoadMatrix) -> Vec<RankError> {
    let r = model.rank();
    let count = (p.p.nrows() * p.p.ncols()) as f64;
    let full = (&p.p - model.reconstruct(r)).norm_squared();
    let mut tail = vec![0.0; r + 1];
    for k in (0..r).rev() {
        tail[k] = tail[k + 1] + model.s[k] * model.s[k];
    }
    (1..=r).map(|f| RankError { f, rmse: ((tail[f] + full) / count).sqrt() }).collect()
}

/// Sample mean and standard deviation of each of the first `f` columns.
pub fn fit_coefficient_distributions(u: &DMatrix<f64>, f: usize) -> Result<Vec<CoefficientDist>, LoadError> {
    if f == 0 || f > u.ncols() {
        return Err(LoadError::Invalid(format!("cannot fit {f} of {} columns", u.ncols())));
    }
    let n = u.nrows() as f64;
    Ok((0..f)
        .map(|k| {
            let col = u.column(k);
            let mean = col.sum() / n;
            let var = if u.nrows() > 1 { col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            CoefficientDist { mean, std: var.sqrt() }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialKernel {
    pub d: DMatrix<f64>,
    pub dist: Vec<Vec<usize>>,
}

pub const DEFAULT_KERNEL_DECAY: f64 = 2.0;
pub const DEFAULT_KERNEL_CUTOFF: usize = 3;

/// `d_ij = exp(-decay * hops)` within `cutoff` hops, 0 beyond.
pub fn build_spatial_kernel(case: &NetworkCase, decay: f64, cutoff: usize) -> SpatialKernel {
    let dist = case.hop_distances();
    let n = case.n_buses();
    let d = DMatrix::from_fn(n, n, |i, j| {
        let h = dist[i][j];
        if h <= cutoff {
            (-decay * h as f64).exp()
        } else {
            0.0
        }
    });
    SpatialKernel { d, dist }
}

impl SpatialKernel {
    pub fn identity(n: usize) -> Self {
        let dist = (0..n).map(|i| (0..n).map(|j| if i == j { 0 } else { usize::MAX }).collect()).collect();
        SpatialKernel { d: DMatrix::identity(n, n), dist }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoltageClass {
    High,
    Low,
}

/// One archetype model per voltage class.
#[derive(Debug, Clone)]
pub struct LoadModels {
    pub high: TemporalBasisModel,
    pub low: TemporalBasisModel,
    /// Buses at or above this base voltage use the high-voltage model.
    pub kv_threshold: f64,
}

impl LoadModels {
    pub fn class_of(&self, base_kv: f64) -> VoltageClass {
        if base_kv >= self.kv_threshold {
            VoltageClass::High
        } else {
            VoltageClass::Low
        }
    }

    pub fn model(&self, class: VoltageClass) -> &TemporalBasisModel {
        match class {
            VoltageClass::High => &self.high,
            VoltageClass::Low => &self.low,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLoadSet {
    /// `buses x samples`, MW.
    pub p_new: DMatrix<f64>,
    pub seed: u64,
    pub voltage_class: Vec<VoltageClass>,
    pub sample_rate_hz: f64,
}

impl SyntheticLoadSet {
    pub fn n_samples(&self) -> usize {
        self.p_new.ncols()
    }

    /// Bus loads at sample `i`.
    pub fn at(&self, i: usize) -> Vec<f64> {
        self.p_new.column(i).iter().copied().collect()
    }

    /// Constant loads, for static scenarios.
    pub fn constant(loads: &[f64], samples: usize, sample_rate_hz: f64) -> Self {
        SyntheticLoadSet {
            p_new: DMatrix::from_fn(loads.len(), samples, |b, _| loads[b]),
            seed: 0,
            voltage_class: vec![VoltageClass::Low; loads.len()],
            sample_rate_hz,
        }
    }
}

/// Independent Gaussian draws of the first `f` coefficients, one row per bus.
pub fn sample_coefficients(model: &TemporalBasisModel, rows: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let f = model.rank_used;
    let mut out = DMatrix::zeros(rows, f);
    for b in 0..rows {
        for (k, dist) in model.coeff_dists.iter().enumerate() {
            out[(b, k)] = if dist.std > 0.0 {
                Normal::new(dist.mean, dist.std).expect("finite std").sample(rng)
            } else {
                dist.mean
            };
        }
    }
    out
}

/// `(D U_new) S_f Vt_f` for the given coefficient rows.
pub fn mix_profiles(kernel: &DMatrix<f64>, u_new: &DMatrix<f64>, model: &TemporalBasisModel) -> DMatrix<f64> {
    let f = u_new.ncols();
    let mut mixed = kernel * u_new;
    for k in 0..f {
        mixed.column_mut(k).scale_mut(model.s[k]);
    }
    mixed * model.vt.rows(0, f)
}

/// Smallest load kept after rescaling, as a fraction of the nominal load.
pub const CLAMP_FRACTION: f64 = 0.01;

/// Draws a profile for every bus of `case`, rescaled so its mean equals the
/// bus's nominal load. Buses without load stay at zero.
pub fn generate_profiles(
    models: &LoadModels,
    kernel: &SpatialKernel,
    case: &NetworkCase,
    seed: u64,
) -> Result<SyntheticLoadSet, LoadError> {
    let n = case.n_buses();
    if kernel.d.nrows() != n {
        return Err(LoadError::Invalid("kernel size does not match the case".into()));
    }
    if models.high.n_samples() != models.low.n_samples() || models.high.rank_used != models.low.rank_used {
        return Err(LoadError::Invalid("voltage-class models differ in shape".into()));
    }
    let classes: Vec<VoltageClass> = case.buses.iter().map(|b| models.class_of(b.base_kv)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u_high = sample_coefficients(&models.high, n, &mut rng);
    let u_low = sample_coefficients(&models.low, n, &mut rng);
    let raw_high = mix_profiles(&kernel.d, &u_high, &models.high);
    let raw_low = mix_profiles(&kernel.d, &u_low, &models.low);

    let samples = models.high.n_samples();
    let mut p_new = DMatrix::zeros(n, samples);
    for (b, bus) in case.buses.iter().enumerate() {
        let nominal = bus.load_mw;
        if nominal == 0.0 {
            continue;
        }
        let raw: DVector<f64> = match classes[b] {
            VoltageClass::High => raw_high.row(b).transpose(),
            VoltageClass::Low => raw_low.row(b).transpose(),
        };
        let mean = raw.mean();
        let floor = CLAMP_FRACTION * nominal.abs();
        for t in 0..samples {
            let v = if mean > 0.0 { raw[t] * nominal / mean } else { raw[t] - mean + nominal };
            p_new[(b, t)] = if nominal > 0.0 { v.max(floor) } else { v };
        }
    }
    Ok(SyntheticLoadSet { p_new, seed, voltage_class: classes, sample_rate_hz: models.high.sample_rate_hz })
}

pub use io::{
    read_load_matrix_csv, read_load_set_csv, write_load_matrix_csv, write_load_set_csv, ModelFile,
};
