//! Scenario configuration (TOML).

use std::path::{Path, PathBuf};

use fdi_core::attack::Strategy;
use fdi_core::loads::SurrogateParams;
use fdi_core::measurement::{NoiseModel, ScenarioTimeline};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Relative paths are resolved against the config file's directory.
    pub case_path: PathBuf,
    pub placement_path: PathBuf,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub loads: LoadConfig,
    pub timeline: TimelineConfig,
    pub noise: NoiseConfig,
    pub attacker: AttackerConfig,
    pub detector: DetectorSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub segment_length: usize,
    /// Keep every n-th segment of the reference before the SVD.
    #[serde(default = "one")]
    pub segment_stride: usize,
    pub rank: usize,
    pub kv_threshold: f64,
    #[serde(default = "kernel_decay")]
    pub kernel_decay: f64,
    #[serde(default = "kernel_cutoff")]
    pub kernel_cutoff: usize,
    pub high: SurrogateParams,
    pub low: SurrogateParams,
}

fn one() -> usize {
    1
}
fn kernel_decay() -> f64 {
    fdi_core::loads::DEFAULT_KERNEL_DECAY
}
fn kernel_cutoff() -> usize {
    fdi_core::loads::DEFAULT_KERNEL_CUTOFF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineConfig {
    pub duration_samples: usize,
    pub sample_rate_hz: f64,
    pub dispatch_interval_samples: usize,
    pub powerflow_cadence_samples: usize,
}

impl TimelineConfig {
    pub fn timeline(&self) -> ScenarioTimeline {
        ScenarioTimeline {
            duration_samples: self.duration_samples,
            sample_rate_hz: self.sample_rate_hz,
            dispatch_interval_samples: self.dispatch_interval_samples,
            powerflow_cadence_samples: self.powerflow_cadence_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub magnitude_std_fraction: f64,
    pub angle_std_fraction: f64,
}

impl NoiseConfig {
    pub fn model(&self, seed: u64) -> NoiseModel {
        NoiseModel {
            magnitude_std_fraction: self.magnitude_std_fraction,
            angle_std_fraction: self.angle_std_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerConfig {
    /// Bus ids of the compromised PMUs.
    pub pmu_set: Vec<usize>,
    pub tau: f64,
    pub target_branch: usize,
    pub strategy: Strategy,
    pub ramp_length: usize,
    #[serde(default = "max_angle")]
    pub max_angle: f64,
    #[serde(default = "node_limit")]
    pub node_limit: usize,
}

fn max_angle() -> f64 {
    1.0
}
fn node_limit() -> usize {
    2000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterChoice {
    Tsqpa,
    FspPaper,
    FspFitted,
}

impl FilterChoice {
    pub const ALL: [FilterChoice; 3] = [FilterChoice::Tsqpa, FilterChoice::FspPaper, FilterChoice::FspFitted];

    pub fn name(self) -> &'static str {
        match self {
            FilterChoice::Tsqpa => "tsqpa",
            FilterChoice::FspPaper => "fsp_paper",
            FilterChoice::FspFitted => "fsp_fitted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSettings {
    pub filter: FilterChoice,
    pub threshold_sigma: f64,
    #[serde(default = "warmup")]
    pub warmup_samples: usize,
    #[serde(default = "fit_window")]
    pub fit_window: usize,
    #[serde(default = "fit_order")]
    pub fit_order: usize,
}

fn warmup() -> usize {
    600
}
fn fit_window() -> usize {
    fdi_core::detection::DEFAULT_FIT_WINDOW
}
fn fit_order() -> usize {
    5
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(format!("invalid config: {e}")))
    }

    /// Reads a config and resolves its input paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.case_path, &mut cfg.placement_path] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        for p in [&self.case_path, &self.placement_path] {
            if !p.is_file() {
                return bad(format!("referenced file {} does not exist", p.display()));
            }
        }
        let t = &self.timeline;
        if let Err(e) = t.timeline().validate() {
            return bad(e.to_string());
        }
        if self.loads.segment_length < t.duration_samples {
            return bad(format!(
                "segment length {} is shorter than the scenario ({} samples)",
                self.loads.segment_length, t.duration_samples
            ));
        }
        for (name, p) in [("high", &self.loads.high), ("low", &self.loads.low)] {
            if p.duration_samples < self.loads.segment_length {
                return bad(format!("{name}-voltage reference is shorter than one segment"));
            }
        }
        if self.loads.rank == 0 {
            return bad("load model rank must be positive".into());
        }
        if !(0.0..1.0).contains(&self.attacker.tau) {
            return bad(format!("tau must lie in [0, 1), got {}", self.attacker.tau));
        }
        if self.attacker.strategy != Strategy::None && self.attacker.pmu_set.is_empty() {
            return bad("attacker pmu_set is empty".into());
        }
        if self.attacker.ramp_length == 0 {
            return bad("ramp_length must be positive".into());
        }
        if !(self.detector.threshold_sigma > 0.0) {
            return bad("threshold_sigma must be positive".into());
        }
        if self.detector.warmup_samples >= t.duration_samples {
            return bad("warmup must end before the scenario does".into());
        }
        if self.detector.warmup_samples <= self.detector.fit_order + self.detector.fit_window {
            return bad("warmup is too short to fit the five-sample filter".into());
        }
        if !(self.noise.magnitude_std_fraction >= 0.0 && self.noise.angle_std_fraction >= 0.0) {
            return bad("noise standard deviations must be non-negative".into());
        }
        Ok(())
    }
}
