//! Predictive-filter detection on estimated state streams.
//!
//! A filter predicts `x_i` from the previous `k` estimates; the residue
//! `r_i = x_(i|i-1) - x_i` stays at the noise floor while the states evolve
//! smoothly and spikes when they jump. [`PredictiveFilter::tsqpa`] is exact
//! on quadratic trajectories, so any linear ramp passes through it
//! unnoticed.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DetectionError {
    #[error("filter needs at least one coefficient")]
    EmptyFilter,
    #[error("history of {got} estimates, filter needs {need}")]
    History { got: usize, need: usize },
    #[error("stream of {got} samples is too short (need more than {need})")]
    TooShort { got: usize, need: usize },
    #[error("state vectors have inconsistent length at sample {0}")]
    Ragged(usize),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("training data does not determine the filter (singular normal equations)")]
    Singular,
    #[error("warmup residues carry no noise (largest floor {0:.3e}); thresholds would be rounding error")]
    FlatNoiseFloor(f64),
    #[error("export failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveFilter {
    pub name: String,
    /// Weights of `x_(i-1), ..., x_(i-k)`.
    pub coefficients: Vec<f64>,
}

impl PredictiveFilter {
    pub fn new(name: impl Into<String>, coefficients: Vec<f64>) -> Result<Self, DetectionError> {
        if coefficients.is_empty() {
            return Err(DetectionError::EmptyFilter);
        }
        Ok(PredictiveFilter { name: name.into(), coefficients })
    }

    /// Three-sample quadratic prediction.
    pub fn tsqpa() -> Self {
        PredictiveFilter { name: "tsqpa".into(), coefficients: vec![3.0, -3.0, 1.0] }
    }

    /// Five-sample filter with the published coefficients.
    pub fn fsp_paper() -> Self {
        PredictiveFilter { name: "fsp_paper".into(), coefficients: vec![0.9186, 0.0196, 0.0438, 0.0058, 0.0122] }
    }

    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficients summing to one (to rounding).
    pub fn is_unit_gain(&self) -> bool {
        (self.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-12
    }

    /// Prediction for one state; `past(j)` is `x_(i-1-j)`. Unit-gain filters
    /// are evaluated as `x_(i-1) + sum a_j (x_(i-j) - x_(i-1))`, which passes
    /// constants through exactly.
    fn apply(&self, past: impl Fn(usize) -> Complex64) -> Complex64 {
        if self.is_unit_gain() {
            let last = past(0);
            last + self.coefficients.iter().enumerate().skip(1).map(|(j, a)| (past(j) - last) * *a).sum::<Complex64>()
        } else {
            self.coefficients.iter().enumerate().map(|(j, a)| past(j) * *a).sum()
        }
    }

    /// `history[0]` is the most recent estimate.
    pub fn predict(&self, history: &[&[Complex64]]) -> Result<Vec<Complex64>, DetectionError> {
        if history.len() != self.k() {
            return Err(DetectionError::History { got: history.len(), need: self.k() });
        }
        let p = history[0].len();
        if history.iter().any(|h| h.len() != p) {
            return Err(DetectionError::Ragged(0));
        }
        Ok((0..p).map(|s| self.apply(|j| history[j][s])).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidueStream {
    /// Sample index of `residues[0]`; equals the filter length.
    pub start: usize,
    pub residues: Vec<Vec<Complex64>>,
    /// Max-abs over states, per sample.
    pub magnitudes: Vec<f64>,
}

impl ResidueStream {
    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    /// Residue vector at sample `i`, if defined.
    pub fn at(&self, i: usize) -> Option<&[Complex64]> {
        i.checked_sub(self.start).and_then(|k| self.residues.get(k)).map(Vec::as_slice)
    }
}

/// `r_i = predict(x_(i-1..i-k)) - x_i` for every `i >= k`.
pub fn residue_stream(filter: &PredictiveFilter, estimates: &[Vec<Complex64>]) -> Result<ResidueStream, DetectionError> {
    let k = filter.k();
    if estimates.len() <= k {
        return Err(DetectionError::TooShort { got: estimates.len(), need: k });
    }
    let p = estimates[0].len();
    if let Some(i) = estimates.iter().position(|x| x.len() != p) {
        return Err(DetectionError::Ragged(i));
    }
    let mut residues = Vec::with_capacity(estimates.len() - k);
    let mut magnitudes = Vec::with_capacity(estimates.len() - k);
    for i in k..estimates.len() {
        let r: Vec<Complex64> = (0..p)
            .map(|s| filter.apply(|j| estimates[i - 1 - j][s]) - estimates[i][s])
            .collect();
        magnitudes.push(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
        residues.push(r);
    }
    Ok(ResidueStream { start: k, residues, magnitudes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold_sigma: f64,
    pub warmup_samples: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { threshold_sigma: 5.0, warmup_samples: 600 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub first_alarm_sample: Option<usize>,
    /// Samples at or after the warmup with at least one state over threshold.
    pub alarm_count: usize,
    /// First sample checked against the threshold (the end of the warmup).
    pub monitored_from: usize,
    pub samples_monitored: usize,
    /// Largest per-state floor.
    pub noise_floor_sigma: f64,
    pub per_state_floor: Vec<f64>,
    /// Largest `|r|` per state after the warmup.
    pub per_state_peak_residue: Vec<f64>,
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Largest warmup floor below which [`detect`] refuses to set thresholds.
pub const MIN_NOISE_FLOOR: f64 = 1e-12;

/// Per-state floor from the warmup window (the standard deviation of the
/// complex residue), then an alarm wherever any `|r_s| > threshold * floor_s`.
pub fn detect(stream: &ResidueStream, config: &DetectorConfig) -> Result<DetectionReport, DetectionError> {
    if !(config.threshold_sigma > 0.0) {
        return Err(DetectionError::BadThreshold(config.threshold_sigma));
    }
    let end = stream.start + stream.len();
    if end <= config.warmup_samples || config.warmup_samples < stream.start + 2 {
        return Err(DetectionError::TooShort { got: end, need: config.warmup_samples.max(stream.start + 2) });
    }
    let p = stream.residues[0].len();
    let warm = &stream.residues[..config.warmup_samples - stream.start];
    let nw = warm.len() as f64;
    let per_state_floor: Vec<f64> = (0..p)
        .map(|s| {
            let mean: Complex64 = warm.iter().map(|r| r[s]).sum::<Complex64>() / nw;
            (warm.iter().map(|r| (r[s] - mean).norm_sqr()).sum::<f64>() / (nw - 1.0)).sqrt()
        })
        .collect();
    let largest = per_state_floor.iter().cloned().fold(0.0, f64::max);
    if largest < MIN_NOISE_FLOOR {
        return Err(DetectionError::FlatNoiseFloor(largest));
    }
    let thresholds: Vec<f64> = per_state_floor.iter().map(|f| f * config.threshold_sigma).collect();
    let mut first_alarm_sample = None;
    let mut alarm_count = 0;
    let mut per_state_peak_residue = vec![0.0; p];
    for (k, r) in stream.residues.iter().enumerate().skip(config.warmup_samples - stream.start) {
        let mut alarm = false;
        for s in 0..p {
            let m = r[s].norm();
            per_state_peak_residue[s] = f64::max(per_state_peak_residue[s], m);
            alarm |= m > thresholds[s];
        }
        if alarm {
            alarm_count += 1;
            first_alarm_sample.get_or_insert(stream.start + k);
        }
    }
    Ok(DetectionReport {
        first_alarm_sample,
        alarm_count,
        monitored_from: config.warmup_samples,
        samples_monitored: end - config.warmup_samples,
        noise_floor_sigma: largest,
        per_state_floor,
        per_state_peak_residue,
    })
}

pub const DEFAULT_FIT_WINDOW: usize = 300;
pub const FIT_RIDGE: f64 = 1e-10;

/// `t[j][m] = (-1)^m C(j, m)`: the `j`-th backward difference of the lags.
fn difference_basis(k: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; k]; k];
    for j in 0..k {
        let mut binom = 1.0;
        for m in 0..=j {
            t[j][m] = if m % 2 == 0 { binom } else { -binom };
            binom = binom * (j - m) as f64 / (m + 1) as f64;
        }
    }
    t
}

/// Least-squares filter over every window of `window` consecutive targets,
/// averaged across windows. Real and imaginary parts of all states are
/// pooled as observations of one shared set of coefficients.
///
/// Each window regresses the innovation `x_i - x_(i-1)` on the backward
/// differences of the lags, with the normal equations equilibrated to unit
/// diagonal before the ridge is added. This is the same least-squares
/// problem as regressing on the raw lags, but it stays well conditioned on
/// smooth trajectories, where the raw lags are nearly collinear.
pub fn fit_filter(training: &[Vec<Complex64>], k: usize, window: usize) -> Result<PredictiveFilter, DetectionError> {
    if k == 0 {
        return Err(DetectionError::EmptyFilter);
    }
    if training.len() <= k + window || window == 0 {
        return Err(DetectionError::TooShort { got: training.len(), need: k + window });
    }
    let p = training[0].len();
    if let Some(i) = training.iter().position(|x| x.len() != p) {
        return Err(DetectionError::Ragged(i));
    }
    let t = difference_basis(k);
    // Contribution of target sample i to the normal equations.
    let term = |i: usize| -> (DMatrix<f64>, DVector<f64>) {
        let mut g = DMatrix::zeros(k, k);
        let mut h = DVector::zeros(k);
        let mut z = vec![0.0; k];
        for s in 0..p {
            for part in [0, 1] {
                let val = |c: Complex64| if part == 0 { c.re } else { c.im };
                let lags: Vec<f64> = (1..=k).map(|j| val(training[i - j][s])).collect();
                for j in 0..k {
                    z[j] = (0..=j).map(|m| t[j][m] * lags[m]).sum();
                }
                let y = val(training[i][s]) - lags[0];
                for a in 0..k {
                    h[a] += z[a] * y;
                    for b in 0..k {
                        g[(a, b)] += z[a] * z[b];
                    }
                }
            }
        }
        (g, h)
    };
    let mut g = DMatrix::zeros(k, k);
    let mut h = DVector::zeros(k);
    for i in k..k + window {
        let (gi, hi) = term(i);
        g += gi;
        h += hi;
    }
    let mut sum = DVector::zeros(k);
    let mut used = 0usize;
    let mut i_next = k + window;
    loop {
        if let Some(b) = solve_window(&g, &h) {
            sum += b;
            used += 1;
        }
        if i_next >= training.len() {
            break;
        }
        let (ga, ha) = term(i_next);
        let (gr, hr) = term(i_next - window);
        g += ga - gr;
        h += ha - hr;
        i_next += 1;
    }
    if used == 0 {
        return Err(DetectionError::Singular);
    }
    let b = sum / used as f64;
    // Back to lag coefficients: x_i = x_(i-1) + b.T lags.
    let mut a: Vec<f64> = (0..k).map(|m| (m..k).map(|j| t[j][m] * b[j]).sum()).collect();
    a[0] += 1.0;
    PredictiveFilter::new(format!("fsp_fitted_k{k}"), a)
}

/// Ridge solution of the equilibrated window system, or `None` when its
/// Gram matrix is numerically rank deficient.
fn solve_window(g: &DMatrix<f64>, h: &DVector<f64>) -> Option<DVector<f64>> {
    let k = g.nrows();
    if (0..k).any(|j| !(g[(j, j)] > 0.0)) {
        return None;
    }
    let scale = DVector::from_iterator(k, (0..k).map(|j| 1.0 / g[(j, j)].sqrt()));
    let gs = DMatrix::from_fn(k, k, |a, b| g[(a, b)] * scale[a] * scale[b]);
    let eig = gs.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0 && min > 1e-13 * max) {
        return None;
    }
    let hs = h.component_mul(&scale);
    let u = (gs + DMatrix::identity(k, k) * FIT_RIDGE).cholesky()?.solve(&hs);
    Some(u.component_mul(&scale))
}

/// One monitored run: its report and, for attacked runs, where the attack
/// became active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub report: DetectionReport,
    pub injection_sample: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Share of attacked runs with an alarm at or after injection.
    pub detection_rate: f64,
    /// Alarms before injection (or anywhere in clean runs) per monitored sample.
    pub false_alarm_rate: f64,
    pub mean_detection_delay: Option<f64>,
}

pub fn evaluate(runs: &[RunOutcome]) -> Evaluation {
    let mut attacked = 0usize;
    let mut detected = 0usize;
    let mut delays = Vec::new();
    let mut false_alarms = 0usize;
    let mut clean_samples = 0usize;
    for run in runs {
        let r = &run.report;
        match run.injection_sample {
            Some(m) => {
                attacked += 1;
                match r.first_alarm_sample {
                    Some(a) if a >= m => {
                        detected += 1;
                        delays.push((a - m) as f64);
                    }
                    Some(_) => false_alarms += 1,
                    None => {}
                }
                clean_samples += m.saturating_sub(r.monitored_from);
            }
            None => {
                false_alarms += r.alarm_count;
                clean_samples += r.samples_monitored;
            }
        }
    }
    Evaluation {
        detection_rate: if attacked > 0 { detected as f64 / attacked as f64 } else { 0.0 },
        false_alarm_rate: if clean_samples > 0 { false_alarms as f64 / clean_samples as f64 } else { 0.0 },
        mean_detection_delay: (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64),
    }
}

/// `sample, magnitude, then |r| per state`.
pub fn write_residue_csv<W: Write>(stream: &ResidueStream, out: W) -> Result<(), DetectionError> {
    let io = |e: csv::Error| DetectionError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let p = stream.residues.first().map(Vec::len).unwrap_or(0);
    let mut header = vec!["sample".to_string(), "max_abs".to_string()];
    header.extend((0..p).map(|s| format!("state{s}")));
    w.write_record(&header).map_err(io)?;
    for (k, r) in stream.residues.iter().enumerate() {
        let mut rec = vec![(stream.start + k).to_string(), stream.magnitudes[k].to_string()];
        rec.extend(r.iter().map(|z| z.norm().to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| DetectionError::Io(e.to_string()))
}
