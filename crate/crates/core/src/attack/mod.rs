//! Unobservable attack design.
//!
//! An attack shifts the estimated states by `c`, which the attacker realises
//! by adding `d = H c` to the measurements it controls. [`adblp`] chooses
//! `c` to maximise the physical flow on a target branch once the operator
//! re-dispatches on the falsified loads; [`zero_injection_correct`] lifts
//! the DC angle attack to a complex state attack that keeps zero-injection
//! buses consistent; [`make_timeline`] applies `d` to a measurement stream.

mod adblp;
mod correction;
mod dcopf;

pub use adblp::{
    kkt_reformulate, solve_adblp, AdblpOptions, AdblpProblem, AdblpSolution, KktLayout, LowerLevel,
};
pub use correction::{injection_shift, zero_injection_correct, CorrectionOptions, CorrectionResult};
pub use dcopf::{overflow_evaluate, solve_dcopf, DcopfProblem, DispatchSolution, OverflowReport};

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::estimation::MeasurementFrame;
use crate::grid::{GridError, MeasurementModel, NetworkCase, PmuPlacement};
use crate::lp::LpError;

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("attacker controls no measurements")]
    EmptyAttackSet,
    #[error("attacker PMU at bus {0} is not part of the placement")]
    UnknownPmu(usize),
    #[error("dispatch infeasible: {0}")]
    Infeasible(String),
    #[error("zero-injection correction did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NoConvergence { iterations: usize, mismatch: f64 },
    #[error("invalid attack problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Measurement rows under attacker control and the states it can shift
/// without touching any other row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSubgraph {
    pub attacked_rows: BTreeSet<usize>,
    /// Bus positions whose every nonzero `H` entry lies in an attacked row.
    pub modifiable_states: Vec<usize>,
}

pub fn build_attack_subgraph(
    case: &NetworkCase,
    placement: &PmuPlacement,
    model: &MeasurementModel,
    attacker_pmus: &BTreeSet<usize>,
) -> Result<AttackSubgraph, AttackError> {
    if let Some(&b) = attacker_pmus.iter().find(|b| !placement.contains(**b)) {
        return Err(AttackError::UnknownPmu(b));
    }
    let attacked_rows: BTreeSet<usize> = model.rows_of_pmus(attacker_pmus).into_iter().collect();
    if attacked_rows.is_empty() {
        return Err(AttackError::EmptyAttackSet);
    }
    let h = model.h();
    let modifiable_states = (0..case.n_buses())
        .filter(|&j| (0..model.n()).all(|i| h[(i, j)] == Complex64::new(0.0, 0.0) || attacked_rows.contains(&i)))
        .collect();
    Ok(AttackSubgraph { attacked_rows, modifiable_states })
}

/// Rows where `d` is nonzero (above `tol`) but which the attacker does not
/// control.
pub fn support_violations(d: &[Complex64], attacked_rows: &BTreeSet<usize>, tol: f64) -> Vec<usize> {
    d.iter().enumerate().filter(|(i, z)| z.norm() > tol && !attacked_rows.contains(i)).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Sudden,
    Ramping,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Strategy::None),
            "sudden" => Ok(Strategy::Sudden),
            "ramping" => Ok(Strategy::Ramping),
            other => Err(format!("unknown strategy `{other}` (expected none, sudden or ramping)")),
        }
    }
}

pub const DEFAULT_RAMP_LENGTH: usize = 9000;

/// A designed attack ready to be injected into a measurement stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub target_branch: usize,
    /// DC angle attack per bus (radians).
    pub c_angle: Vec<f64>,
    /// Complex state attack after the zero-injection correction.
    pub c_tilde: Vec<Complex64>,
    /// `H c_tilde`
    pub d: Vec<Complex64>,
    pub attacked_set: BTreeSet<usize>,
    /// Physical flow over the limit on the target branch.
    pub predicted_overflow: f64,
    pub strategy: Strategy,
    pub ramp_length: usize,
}

impl AttackPlan {
    pub fn new(
        model: &MeasurementModel,
        subgraph: &AttackSubgraph,
        target_branch: usize,
        c_angle: Vec<f64>,
        c_tilde: Vec<Complex64>,
        predicted_overflow: f64,
    ) -> Self {
        let mut d = model.measure(&c_tilde);
        for (i, z) in d.iter_mut().enumerate() {
            if !subgraph.attacked_rows.contains(&i) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        AttackPlan {
            target_branch,
            c_angle,
            c_tilde,
            d,
            attacked_set: subgraph.attacked_rows.clone(),
            predicted_overflow,
            strategy: Strategy::Sudden,
            ramp_length: DEFAULT_RAMP_LENGTH,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy, ramp_length: usize) -> Self {
        self.strategy = strategy;
        self.ramp_length = ramp_length;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Fraction of `d` present at sample `i`.
pub fn attack_weight(strategy: Strategy, ramp_length: usize, i: usize) -> f64 {
    match strategy {
        Strategy::None => 0.0,
        Strategy::Sudden => {
            if i >= ramp_length {
                1.0
            } else {
                0.0
            }
        }
        Strategy::Ramping => {
            if i >= ramp_length {
                1.0
            } else {
                i as f64 / ramp_length as f64
            }
        }
    }
}

/// Applies the plan's `d` to every frame according to its strategy: a step
/// at `ramp_length` (sudden) or a linear ramp from sample 0 reaching full
/// size at `ramp_length` (ramping).
pub fn make_timeline(plan: &AttackPlan, clean: &[MeasurementFrame]) -> Vec<MeasurementFrame> {
    clean
        .iter()
        .map(|f| {
            let a = attack_weight(plan.strategy, plan.ramp_length, f.sample_index);
            if a == 0.0 {
                return f.clone();
            }
            MeasurementFrame { sample_index: f.sample_index, w: f.w.iter().zip(&plan.d).map(|(w, d)| w + d * a).collect() }
        })
        .collect()
}
