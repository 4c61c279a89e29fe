//! The chapters of `book/` as modules, so `cargo test --doc` runs every
//! listing against the current crates.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/grid-model.md")]
pub mod grid_model {}
#[doc = include_str!("../../../book/src/state-estimation.md")]
pub mod state_estimation {}
#[doc = include_str!("../../../book/src/attack-synthesis.md")]
pub mod attack_synthesis {}
#[doc = include_str!("../../../book/src/load-synthesis.md")]
pub mod load_synthesis {}
#[doc = include_str!("../../../book/src/measurement-sim.md")]
pub mod measurement_sim {}
#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}
#[doc = include_str!("../../../book/src/cli-bench.md")]
pub mod cli_bench {}
