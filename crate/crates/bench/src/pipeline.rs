//! Stage functions and the full scenario run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdi_core::attack::{
    build_attack_subgraph, make_timeline, overflow_evaluate, solve_adblp, zero_injection_correct, AdblpOptions,
    AdblpProblem, AttackPlan, CorrectionOptions, OverflowReport, Strategy,
};
use fdi_core::detection::{
    detect, evaluate, fit_filter, residue_stream, write_residue_csv, DetectionReport, DetectorConfig, Evaluation,
    PredictiveFilter, ResidueStream, RunOutcome,
};
use fdi_core::estimation::{chi2_bdd, MeasurementFrame, WlsEstimator};
use fdi_core::grid::{DcMatrices, MeasurementModel, NetworkCase, PmuPlacement};
use fdi_core::loads::{
    build_spatial_kernel, generate_profiles, make_surrogate_reference, rmse_vs_rank, segment_timeseries,
    svd_factorize, write_load_set_csv, LoadModels, ModelFile, RankError, SyntheticLoadSet, TemporalBasisModel,
};
use fdi_core::measurement::{apply_noise, case_hash, simulate_truth, write_stream_csv, StreamMeta, TruthTrajectory};
use fdi_core::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{FilterChoice, ScenarioConfig};
use crate::BenchError;

/// Per-stage seed: the first eight bytes (little endian) of
/// `SHA-256(master.to_le_bytes() || stage)`.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Case, placement and the matrices derived from them.
#[derive(Debug, Clone)]
pub struct Grid {
    pub case: NetworkCase,
    pub placement: PmuPlacement,
    pub model: MeasurementModel,
    pub dc: DcMatrices,
}

impl Grid {
    pub fn load(cfg: &ScenarioConfig) -> Result<Self, BenchError> {
        let config = |e: fdi_core::grid::GridError| BenchError::Config(e.to_string());
        let case = NetworkCase::from_file(&cfg.case_path).map_err(config)?;
        let placement = PmuPlacement::from_file(&cfg.placement_path).map_err(config)?;
        let model = MeasurementModel::build(&case, &placement).map_err(config)?;
        let dc = DcMatrices::new(&case).map_err(config)?;
        Ok(Grid { case, placement, model, dc })
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.case.buses.iter().map(|b| b.id).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadStage {
    pub models: LoadModels,
    pub rmse_high: Vec<RankError>,
    pub rmse_low: Vec<RankError>,
    pub set: SyntheticLoadSet,
}

fn learn(cfg: &ScenarioConfig, class: &str, seed: u64) -> Result<(TemporalBasisModel, Vec<RankError>), BenchError> {
    let lc = &cfg.loads;
    let params = if class == "high" { &lc.high } else { &lc.low };
    let series = make_surrogate_reference(params, stage_seed(seed, &format!("reference-{class}")));
    let solver = |e: fdi_core::loads::LoadError| BenchError::solver("load-synthesis", e);
    let matrix = segment_timeseries(&series, lc.segment_length, params.sample_rate_hz).map_err(solver)?;
    drop(series);
    let matrix = matrix.every_nth(lc.segment_stride);
    let rank = lc.rank.min(matrix.n_segments().min(matrix.segment_length));
    let model = svd_factorize(&matrix, rank).map_err(solver)?;
    let rmse = rmse_vs_rank(&model, &matrix);
    Ok((model, rmse))
}

pub fn synthesize_loads(cfg: &ScenarioConfig, grid: &Grid, seed: u64) -> Result<LoadStage, BenchError> {
    let (high, rmse_high) = learn(cfg, "high", seed)?;
    let (low, rmse_low) = learn(cfg, "low", seed)?;
    let models = LoadModels { high, low, kv_threshold: cfg.loads.kv_threshold };
    let kernel = build_spatial_kernel(&grid.case, cfg.loads.kernel_decay, cfg.loads.kernel_cutoff);
    let set = generate_profiles(&models, &kernel, &grid.case, stage_seed(seed, "profiles"))
        .map_err(|e| BenchError::solver("load-synthesis", e))?;
    Ok(LoadStage { models, rmse_high, rmse_low, set })
}

pub fn simulate(cfg: &ScenarioConfig, grid: &Grid, loads: &SyntheticLoadSet) -> Result<TruthTrajectory, BenchError> {
    simulate_truth(&grid.case, loads, &cfg.timeline.timeline()).map_err(|e| BenchError::solver("measurement-sim", e))
}

pub fn noisy_frames(cfg: &ScenarioConfig, grid: &Grid, truth: &TruthTrajectory, seed: u64) -> Vec<MeasurementFrame> {
    apply_noise(&grid.model, &truth.states, &cfg.noise.model(stage_seed(seed, "noise")))
}

/// Solver summary written next to the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub plan_sample: usize,
    pub modifiable_buses: Vec<usize>,
    pub milp_status: String,
    pub milp_gap_mw: f64,
    pub milp_nodes: usize,
    pub lower_level_rows: usize,
    /// DC physical flow on the target at the MILP optimum (MW).
    pub milp_target_flow_mw: f64,
    /// Largest `|c_tilde|` over buses (per unit).
    pub max_state_shift: f64,
    pub zero_injection_mismatch: f64,
    pub target_flow_fraction: f64,
    /// Flow fraction of every rated (non-default-limit) branch, by branch id.
    pub rated_branch_fractions: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone)]
pub struct AttackStage {
    pub plan: AttackPlan,
    pub overflow: OverflowReport,
    pub summary: AttackSummary,
}

/// Sample whose operating point the attacker plans against.
pub fn plan_sample(cfg: &ScenarioConfig) -> usize {
    cfg.attacker.ramp_length.min(cfg.timeline.duration_samples - 1)
}

pub fn design_attack(
    cfg: &ScenarioConfig,
    grid: &Grid,
    loads: &SyntheticLoadSet,
    truth: &TruthTrajectory,
) -> Result<Option<AttackStage>, BenchError> {
    let a = &cfg.attacker;
    if a.strategy == Strategy::None {
        return Ok(None);
    }
    let stage = "attack-synthesis";
    let attackers: BTreeSet<usize> = a.pmu_set.iter().copied().collect();
    let subgraph = build_attack_subgraph(&grid.case, &grid.placement, &grid.model, &attackers)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let m = plan_sample(cfg);
    let bus_loads = loads.at(m);
    let x_hat = &truth.states[m];
    let problem = AdblpProblem::new(&grid.case, &grid.dc, subgraph.modifiable_states.clone(), a.target_branch, a.tau)
        .map_err(|e| BenchError::Config(e.to_string()))?
        .with_max_angle(a.max_angle)
        .with_loads(bus_loads.clone());
    let mut opts = AdblpOptions::default();
    opts.bnb.node_limit = a.node_limit;
    let sol = solve_adblp(&problem, &opts).map_err(|e| BenchError::solver(stage, e))?;
    let p = grid.case.n_buses();
    let c_angle = problem.full_angles(&sol.c, p);
    let corr = zero_injection_correct(
        &grid.case,
        &grid.dc,
        x_hat,
        &c_angle,
        &subgraph.modifiable_states,
        &CorrectionOptions::default(),
    )
    .map_err(|e| BenchError::solver(stage, e))?;
    let overflow = overflow_evaluate(&grid.case, &problem.dcopf, x_hat, &corr.c_tilde, a.target_branch)
        .map_err(|e| BenchError::solver(stage, e))?;
    let limit = grid.case.branches[problem.target_position()].flow_limit_mw;
    let predicted = overflow.physical_flows[problem.target_position()].abs() - limit;
    let plan = AttackPlan::new(&grid.model, &subgraph, a.target_branch, c_angle, corr.c_tilde.clone(), predicted)
        .with_strategy(a.strategy, a.ramp_length);
    let default_limit = grid.case.branches.iter().map(|b| b.flow_limit_mw).fold(0.0, f64::max);
    let rated_branch_fractions = grid
        .case
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.flow_limit_mw < default_limit)
        .map(|(k, b)| (b.id, overflow.per_branch_fractions[k]))
        .collect();
    let summary = AttackSummary {
        plan_sample: m,
        modifiable_buses: subgraph.modifiable_states.iter().map(|&j| grid.case.buses[j].id).collect(),
        milp_status: format!("{:?}", sol.status),
        milp_gap_mw: sol.gap,
        milp_nodes: sol.nodes,
        lower_level_rows: sol.lower_rows,
        milp_target_flow_mw: sol.target_flow,
        max_state_shift: corr.c_tilde.iter().map(|z| z.norm()).fold(0.0, f64::max),
        zero_injection_mismatch: corr.zero_injection_mismatch,
        target_flow_fraction: overflow.target_flow_fraction,
        rated_branch_fractions,
    };
    Ok(Some(AttackStage { plan, overflow, summary }))
}

/// Chi-square verdict counts over a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BddSummary {
    pub alpha: f64,
    pub dof: i64,
    pub threshold: f64,
    pub frames: usize,
    pub flagged: usize,
}

pub const BDD_ALPHA: f64 = 0.01;

/// WLS weights matching the configured noise around the first operating point.
pub fn estimator(cfg: &ScenarioConfig, grid: &Grid, x0: &[Complex64]) -> Result<WlsEstimator, BenchError> {
    let rel = cfg.noise.magnitude_std_fraction.max(cfg.noise.angle_std_fraction);
    let rel = if rel > 0.0 { rel } else { 1e-4 };
    let model = grid.model.clone().calibrated(x0, rel, 1e-2);
    WlsEstimator::new(&model).map_err(|e| BenchError::solver("state-estimation", e))
}

pub fn estimate_stream(
    est: &WlsEstimator,
    frames: &[MeasurementFrame],
) -> Result<(Vec<Vec<Complex64>>, BddSummary), BenchError> {
    let mut states = Vec::with_capacity(frames.len());
    let mut flagged = 0;
    let mut threshold = 0.0;
    for f in frames {
        let e = est.estimate(f).map_err(|e| BenchError::solver("state-estimation", e))?;
        let v = chi2_bdd(&e, est.dof(), BDD_ALPHA).map_err(|e| BenchError::solver("state-estimation", e))?;
        flagged += v.flagged as usize;
        threshold = v.threshold;
        states.push(e.x_hat);
    }
    Ok((states, BddSummary { alpha: BDD_ALPHA, dof: est.dof(), threshold, frames: frames.len(), flagged }))
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub choice: FilterChoice,
    pub filter: PredictiveFilter,
    pub residues: ResidueStream,
    pub report: DetectionReport,
}

/// Runs all three filters; the attack-free warmup trains the fitted one.
pub fn run_detectors(cfg: &ScenarioConfig, estimates: &[Vec<Complex64>]) -> Result<Vec<FilterRun>, BenchError> {
    let d = &cfg.detector;
    let det = |e: fdi_core::detection::DetectionError| BenchError::Detection(e.to_string());
    let dcfg = DetectorConfig { threshold_sigma: d.threshold_sigma, warmup_samples: d.warmup_samples };
    FilterChoice::ALL
        .iter()
        .map(|&choice| {
            let filter = match choice {
                FilterChoice::Tsqpa => PredictiveFilter::tsqpa(),
                FilterChoice::FspPaper => PredictiveFilter::fsp_paper(),
                FilterChoice::FspFitted => {
                    let mut f = fit_filter(&estimates[..d.warmup_samples], d.fit_order, d.fit_window).map_err(det)?;
                    f.name = "fsp_fitted".into();
                    f
                }
            };
            let residues = residue_stream(&filter, estimates).map_err(det)?;
            let report = detect(&residues, &dcfg).map_err(det)?;
            Ok(FilterRun { choice, filter, residues, report })
        })
        .collect()
}

/// Where an attack reaches full strength.
pub fn injection_sample(cfg: &ScenarioConfig) -> Option<usize> {
    (cfg.attacker.strategy != Strategy::None).then_some(cfg.attacker.ramp_length)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub filter: String,
    pub strategy: Strategy,
    pub injection_sample: Option<usize>,
    pub report: DetectionReport,
    pub evaluation: Evaluation,
    pub all_filters: BTreeMap<String, DetectionReport>,
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub bdd: BddSummary,
}

pub fn summarize(cfg: &ScenarioConfig, runs: &[FilterRun], bdd: BddSummary) -> DetectionSummary {
    let chosen = runs.iter().find(|r| r.choice == cfg.detector.filter).expect("all filters run");
    let inj = injection_sample(cfg);
    DetectionSummary {
        filter: chosen.filter.name.clone(),
        strategy: cfg.attacker.strategy,
        injection_sample: inj,
        report: chosen.report.clone(),
        evaluation: evaluate(&[RunOutcome { report: chosen.report.clone(), injection_sample: inj }]),
        all_filters: runs.iter().map(|r| (r.choice.name().to_string(), r.report.clone())).collect(),
        coefficients: runs.iter().map(|r| (r.choice.name().to_string(), r.filter.coefficients.clone())).collect(),
        bdd,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub case_hash: String,
    pub versions: BTreeMap<String, String>,
    /// Wall-clock milliseconds per stage; the only field that varies
    /// between identical runs.
    pub stage_timings_ms: BTreeMap<String, f64>,
    pub outputs: Vec<OutputFile>,
}

/// Output sink that records what it writes.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, BenchError> {
        std::fs::create_dir_all(root).map_err(|e| BenchError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>, BenchError> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        }
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(BufWriter::new(File::create(&p).map_err(|e| BenchError::io(&p, e))?))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), BenchError> {
        self.text(name, serde_json::to_string_pretty(value).expect("value serialises"))
    }

    /// Writes `text` plus a trailing newline.
    pub fn text(&mut self, name: &str, mut text: String) -> Result<(), BenchError> {
        text.push('\n');
        let mut w = self.writer(name)?;
        w.write_all(text.as_bytes()).map_err(|e| BenchError::io(&self.path(name), e))?;
        w.flush().map_err(|e| BenchError::io(&self.path(name), e))
    }

    pub fn inventory(&self) -> Result<Vec<OutputFile>, BenchError> {
        let mut names = self.files.clone();
        names.sort();
        names
            .into_iter()
            .map(|file| {
                let p = self.path(&file);
                let bytes = std::fs::read(&p).map_err(|e| BenchError::io(&p, e))?;
                Ok(OutputFile { bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)), file })
            })
            .collect()
    }
}

pub fn write_rmse(out: &mut OutDir, stage: &LoadStage) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out.writer("rmse_vs_rank.csv")?);
    let e = |e: csv::Error| BenchError::Io(e.to_string());
    w.write_record(["f", "rmse_high", "rmse_low"]).map_err(e)?;
    let n = stage.rmse_high.len().max(stage.rmse_low.len());
    for k in 0..n {
        let get = |v: &[RankError]| v.get(k).map(|r| r.rmse.to_string()).unwrap_or_default();
        w.write_record([(k + 1).to_string(), get(&stage.rmse_high), get(&stage.rmse_low)]).map_err(e)?;
    }
    w.flush().map_err(|e| BenchError::Io(e.to_string()))
}

pub fn write_loads(out: &mut OutDir, grid: &Grid, set: &SyntheticLoadSet) -> Result<(), BenchError> {
    write_load_set_csv(set, &grid.bus_ids(), out.writer("loads.csv")?).map_err(|e| BenchError::Io(e.to_string()))
}

pub fn write_models(out: &mut OutDir, stage: &LoadStage) -> Result<(), BenchError> {
    out.json("model_high.json", &ModelFile::from(&stage.models.high))?;
    out.json("model_low.json", &ModelFile::from(&stage.models.low))
}

pub fn write_stream(
    out: &mut OutDir,
    cfg: &ScenarioConfig,
    grid: &Grid,
    frames: &[MeasurementFrame],
    seed: u64,
) -> Result<(), BenchError> {
    write_stream_csv(frames, out.writer("stream.csv")?).map_err(|e| BenchError::Io(e.to_string()))?;
    let meta = StreamMeta {
        sample_rate_hz: cfg.timeline.sample_rate_hz,
        seed: stage_seed(seed, "noise"),
        case_hash: case_hash(&grid.case),
        n_samples: frames.len(),
        n_rows: grid.model.n(),
    };
    out.json("stream.json", &meta)
}

pub fn write_attack(out: &mut OutDir, stage: &AttackStage) -> Result<(), BenchError> {
    out.text("attack_plan.json", stage.plan.to_json())?;
    out.json("overflow.json", &stage.overflow)?;
    out.json("attack_summary.json", &stage.summary)
}

pub fn write_detection(
    out: &mut OutDir,
    cfg: &ScenarioConfig,
    runs: &[FilterRun],
    summary: &DetectionSummary,
) -> Result<(), BenchError> {
    let chosen = runs.iter().find(|r| r.choice == cfg.detector.filter).expect("all filters run");
    write_residue_csv(&chosen.residues, out.writer("residues.csv")?).map_err(|e| BenchError::Io(e.to_string()))?;
    let e = |e: csv::Error| BenchError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out.writer("residue_traces.csv")?);
    let mut header = vec!["sample".to_string()];
    header.extend(runs.iter().map(|r| r.choice.name().to_string()));
    w.write_record(&header).map_err(e)?;
    let start = runs.iter().map(|r| r.residues.start).max().unwrap_or(0);
    let end = runs.iter().map(|r| r.residues.start + r.residues.len()).min().unwrap_or(0);
    for i in start..end {
        let mut rec = vec![i.to_string()];
        rec.extend(runs.iter().map(|r| r.residues.magnitudes[i - r.residues.start].to_string()));
        w.write_record(&rec).map_err(e)?;
    }
    w.flush().map_err(|e| BenchError::Io(e.to_string()))?;
    out.json("detection.json", summary)
}

/// Applies the attack (if any) to the clean noisy frames.
pub fn observed_frames(frames: Vec<MeasurementFrame>, attack: Option<&AttackStage>) -> Vec<MeasurementFrame> {
    match attack {
        Some(a) => make_timeline(&a.plan, &frames),
        None => frames,
    }
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

fn manifest(command: &str, cfg: &ScenarioConfig, grid: &Grid, out: &OutDir, timings: BTreeMap<String, f64>) -> Result<RunManifest, BenchError> {
    let versions = BTreeMap::from([
        ("fdi-bench".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("fdi-core".to_string(), fdi_core::VERSION.to_string()),
    ]);
    Ok(RunManifest {
        command: command.to_string(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        case_hash: case_hash(&grid.case),
        versions,
        stage_timings_ms: timings,
        outputs: out.inventory()?,
    })
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn new() -> Self {
        Timer(BTreeMap::new(), Instant::now())
    }
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.insert(stage.to_string(), (now - self.1).as_secs_f64() * 1e3);
        self.1 = now;
    }
}

/// Pipeline stages a CLI verb runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    GenLoads,
    Simulate,
    Attack,
    Detect,
    Run,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::GenLoads => "gen-loads",
            Verb::Simulate => "simulate",
            Verb::Attack => "attack",
            Verb::Detect => "detect",
            Verb::Run => "run",
        }
    }
}

/// Runs the stages up to `verb`, recomputing prerequisites in memory, and
/// writes the outputs of the stages requested plus `manifest.json`.
pub fn run_verb(verb: Verb, cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunManifest, BenchError> {
    let grid = Grid::load(cfg)?;
    let mut out = OutDir::create(out_dir)?;
    let mut t = Timer::new();
    let seed = cfg.seed;
    let all = verb == Verb::Run;

    let loads = synthesize_loads(cfg, &grid, seed)?;
    t.lap("load-synthesis");
    if all || verb == Verb::GenLoads {
        write_rmse(&mut out, &loads)?;
        write_loads(&mut out, &grid, &loads.set)?;
        if verb == Verb::GenLoads {
            write_models(&mut out, &loads)?;
        }
    }
    if verb != Verb::GenLoads {
        let truth = simulate(cfg, &grid, &loads.set)?;
        let frames = noisy_frames(cfg, &grid, &truth, seed);
        t.lap("measurement-sim");
        if all || verb == Verb::Simulate {
            write_stream(&mut out, cfg, &grid, &frames, seed)?;
        }
        if verb != Verb::Simulate {
            let attack = design_attack(cfg, &grid, &loads.set, &truth)?;
            t.lap("attack-synthesis");
            if let Some(a) = &attack {
                if all || verb == Verb::Attack {
                    write_attack(&mut out, a)?;
                }
            }
            if all || verb == Verb::Detect {
                let observed = observed_frames(frames, attack.as_ref());
                let est = estimator(cfg, &grid, &truth.states[0])?;
                let (estimates, bdd) = estimate_stream(&est, &observed)?;
                t.lap("state-estimation");
                let runs = run_detectors(cfg, &estimates)?;
                let summary = summarize(cfg, &runs, bdd);
                write_detection(&mut out, cfg, &runs, &summary)?;
                t.lap("detection");
            }
        }
    }
    let m = manifest(verb.name(), cfg, &grid, &out, t.0)?;
    let p = out.path("manifest.json");
    let mut text = serde_json::to_string_pretty(&m).expect("manifest serialises");
    text.push('\n');
    std::fs::write(&p, text).map_err(|e| BenchError::io(&p, e))?;
    Ok(m)
}

/// The full pipeline.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunManifest, BenchError> {
    run_verb(Verb::Run, cfg, out_dir)
}
