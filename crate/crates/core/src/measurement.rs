//! Quasi-static PMU stream synthesis.
//!
//! Generation is re-dispatched by DCOPF at every dispatch instant and
//! ramped linearly toward the next schedule in between. An AC power flow is
//! solved every `powerflow_cadence_samples`; bus voltages between solves are
//! interpolated linearly. Measurements are `w = Hx` with multiplicative
//! magnitude and additive angle noise.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{solve_dcopf, AttackError, DcopfProblem, DispatchSolution};
use crate::estimation::MeasurementFrame;
use crate::grid::{DcMatrices, GridError, MeasurementModel, NetworkCase, PmuPlacement};
use crate::loads::SyntheticLoadSet;
use crate::powerflow::{branch_losses, newton_power_flow, y_bus, PowerFlowError, PowerFlowInput, PowerFlowOptions};

#[derive(Debug, thiserror::Error)]
pub enum MeasurementError {
    #[error("invalid timeline: {0}")]
    Timeline(String),
    #[error("load profiles cover {have} samples, {need} needed")]
    ShortLoads { have: usize, need: usize },
    #[error("dispatch at sample {sample}: {source}")]
    Dispatch { sample: usize, source: AttackError },
    #[error("power flow at sample {sample}: {source}")]
    PowerFlow { sample: usize, source: PowerFlowError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("stream file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTimeline {
    pub duration_samples: usize,
    pub sample_rate_hz: f64,
    pub dispatch_interval_samples: usize,
    pub powerflow_cadence_samples: usize,
}

impl Default for ScenarioTimeline {
    fn default() -> Self {
        ScenarioTimeline {
            duration_samples: 18000,
            sample_rate_hz: 30.0,
            dispatch_interval_samples: 9000,
            powerflow_cadence_samples: 30,
        }
    }
}

impl ScenarioTimeline {
    pub fn validate(&self) -> Result<(), MeasurementError> {
        let bad = |m: &str| Err(MeasurementError::Timeline(m.into()));
        if self.duration_samples == 0 {
            return bad("duration must be positive");
        }
        if self.powerflow_cadence_samples == 0 || self.dispatch_interval_samples == 0 {
            return bad("dispatch interval and power flow cadence must be positive");
        }
        if !self.dispatch_interval_samples.is_multiple_of(self.powerflow_cadence_samples) {
            return bad("dispatch interval must be a multiple of the power flow cadence");
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub magnitude_std_fraction: f64,
    /// Absolute angle standard deviation, radians.
    pub angle_std_fraction: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { magnitude_std_fraction: 1e-4, angle_std_fraction: 1e-4, seed: 0 }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { magnitude_std_fraction: 0.0, angle_std_fraction: 0.0, seed: 0 }
    }
}

/// One solved AC snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub sample: usize,
    /// Generator outputs with the slack output from the power flow (MW).
    pub gen_mw: Vec<f64>,
    pub load_mw: Vec<f64>,
    pub voltages: Vec<Complex64>,
    /// Per unit.
    pub losses: f64,
}

impl Snapshot {
    /// `generation - load - losses` in per unit.
    pub fn balance_error(&self, base_mva: f64) -> f64 {
        (self.gen_mw.iter().sum::<f64>() - self.load_mw.iter().sum::<f64>()) / base_mva - self.losses
    }
}

#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub states: Vec<Vec<Complex64>>,
    pub snapshots: Vec<Snapshot>,
    /// Schedule fixed at each dispatch instant.
    pub dispatches: Vec<(usize, DispatchSolution)>,
}

#[derive(Debug, Clone)]
pub struct PmuStream {
    pub frames: Vec<MeasurementFrame>,
    pub truth_states: Vec<Vec<Complex64>>,
}

/// Dispatch schedule and noiseless bus voltages for every sample.
pub fn simulate_truth(
    case: &NetworkCase,
    loads: &SyntheticLoadSet,
    timeline: &ScenarioTimeline,
) -> Result<TruthTrajectory, MeasurementError> {
    timeline.validate()?;
    let n = timeline.duration_samples;
    if loads.n_samples() < n {
        return Err(MeasurementError::ShortLoads { have: loads.n_samples(), need: n });
    }
    let p = case.n_buses();
    let last_load = loads.n_samples() - 1;
    let dc = DcMatrices::new(case)?;
    let base_prob = DcopfProblem::from_case(case, &dc);
    let interval = timeline.dispatch_interval_samples;
    let mut instants: Vec<usize> = (0..n).step_by(interval).collect();
    // The schedule following the last instant in range is still needed as a
    // ramp target.
    instants.push(instants.last().unwrap() + interval);
    let mut dispatches = Vec::with_capacity(instants.len());
    for &t in &instants {
        let l = loads.at(t.min(last_load));
        let sol = solve_dcopf(&base_prob.with_loads(l)).map_err(|e| MeasurementError::Dispatch { sample: t, source: e })?;
        dispatches.push((t, sol));
    }

    let ybus = y_bus(case);
    let opts = PowerFlowOptions::default();
    let q_ratio: Vec<f64> =
        case.buses.iter().map(|b| if b.load_mw != 0.0 { b.load_mvar / b.load_mw } else { f64::NAN }).collect();
    let cadence = timeline.powerflow_cadence_samples;
    let mut solve_at: Vec<usize> = (0..n).step_by(cadence).collect();
    if *solve_at.last().unwrap() != n - 1 {
        solve_at.push(n - 1);
    }
    let slack = case.default_slack();
    let slack_gen = case.generators.iter().position(|g| case.bus_pos(g.bus) == Some(slack));
    let mut snapshots = Vec::with_capacity(solve_at.len());
    for &t in &solve_at {
        let k = t / interval;
        let (t0, d0) = &dispatches[k];
        let (_, d1) = &dispatches[k + 1];
        let a = (t - t0) as f64 / interval as f64;
        let mut gen_mw: Vec<f64> = d0.p_g.iter().zip(&d1.p_g).map(|(x, y)| x + a * (y - x)).collect();
        let load_mw = loads.at(t);
        let load_mvar: Vec<f64> = (0..p)
            .map(|b| if q_ratio[b].is_nan() { case.buses[b].load_mvar } else { q_ratio[b] * load_mw[b] })
            .collect();
        let input = PowerFlowInput { gen_mw: gen_mw.clone(), load_mw: load_mw.clone(), load_mvar };
        let sol = newton_power_flow(case, &ybus, &input, &opts)
            .map_err(|e| MeasurementError::PowerFlow { sample: t, source: e })?;
        if let Some(g) = slack_gen {
            gen_mw[g] = sol.slack_mw;
        }
        let losses = branch_losses(case, &sol.voltages);
        snapshots.push(Snapshot { sample: t, gen_mw, load_mw, voltages: sol.voltages, losses });
    }

    let mut states = Vec::with_capacity(n);
    for w in snapshots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let span = (b.sample - a.sample) as f64;
        for t in a.sample..b.sample {
            let s = (t - a.sample) as f64 / span;
            states.push(a.voltages.iter().zip(&b.voltages).map(|(x, y)| x + (y - x) * s).collect());
        }
    }
    states.push(snapshots.last().unwrap().voltages.clone());
    debug_assert_eq!(states.len(), n);
    dispatches.truncate(instants.len() - 1);
    Ok(TruthTrajectory { states, snapshots, dispatches })
}

/// Noisy measurements of the given states.
pub fn apply_noise(model: &MeasurementModel, states: &[Vec<Complex64>], noise: &NoiseModel) -> Vec<MeasurementFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    states
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut w = model.measure(x);
            for z in w.iter_mut() {
                let em: f64 = StandardNormal.sample(&mut rng);
                let ea: f64 = StandardNormal.sample(&mut rng);
                let mag = z.norm() * (1.0 + noise.magnitude_std_fraction * em);
                *z = Complex64::from_polar(mag, z.arg() + noise.angle_std_fraction * ea);
            }
            MeasurementFrame { sample_index: i, w }
        })
        .collect()
}

pub fn simulate_stream(
    case: &NetworkCase,
    placement: &PmuPlacement,
    loads: &SyntheticLoadSet,
    timeline: &ScenarioTimeline,
    noise: &NoiseModel,
) -> Result<PmuStream, MeasurementError> {
    let model = MeasurementModel::build(case, placement)?;
    let truth = simulate_truth(case, loads, timeline)?;
    let frames = apply_noise(&model, &truth.states, noise);
    Ok(PmuStream { frames, truth_states: truth.states })
}

/// Total vector error `|measured - truth| / |truth|`.
pub fn tve(measured: Complex64, truth: Complex64) -> f64 {
    (measured - truth).norm() / truth.norm()
}

/// Largest TVE over the phasors of a frame; zero phasors are skipped.
pub fn frame_tve(measured: &[Complex64], truth: &[Complex64]) -> f64 {
    measured.iter().zip(truth).filter(|(_, t)| t.norm() > 0.0).map(|(m, t)| tve(*m, *t)).fold(0.0, f64::max)
}

/// SHA-256 of the case in its canonical text form.
pub fn case_hash(case: &NetworkCase) -> String {
    hex::encode(Sha256::digest(case.to_text().as_bytes()))
}

/// JSON sidecar of a stream CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub case_hash: String,
    pub n_samples: usize,
    pub n_rows: usize,
}

/// Long format: one line per `(sample_index, row_index)`.
pub fn write_stream_csv<W: Write>(frames: &[MeasurementFrame], out: W) -> Result<(), MeasurementError> {
    let io = |e: csv::Error| MeasurementError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_index", "row_index", "re", "im"]).map_err(io)?;
    for f in frames {
        for (k, z) in f.w.iter().enumerate() {
            w.write_record([f.sample_index.to_string(), k.to_string(), z.re.to_string(), z.im.to_string()])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| MeasurementError::Io(e.to_string()))
}

pub fn read_stream_csv<R: Read>(input: R) -> Result<Vec<MeasurementFrame>, MeasurementError> {
    let io = |e: String| MeasurementError::Io(e);
    let mut r = csv::Reader::from_reader(input);
    let mut frames: Vec<MeasurementFrame> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io(e.to_string()))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| io(format!("short record {rec:?}")));
        let s: usize = field(0)?.parse().map_err(|e| io(format!("{e}")))?;
        let k: usize = field(1)?.parse().map_err(|e| io(format!("{e}")))?;
        let re: f64 = field(2)?.parse().map_err(|e| io(format!("{e}")))?;
        let im: f64 = field(3)?.parse().map_err(|e| io(format!("{e}")))?;
        if frames.last().map(|f| f.sample_index) != Some(s) {
            frames.push(MeasurementFrame { sample_index: s, w: Vec::new() });
        }
        let f = frames.last_mut().unwrap();
        if k != f.w.len() {
            return Err(io(format!("row {k} of sample {s} out of order")));
        }
        f.w.push(Complex64::new(re, im));
    }
    Ok(frames)
}
