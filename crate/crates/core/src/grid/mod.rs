//! Network cases, PMU placements and the linear PMU measurement model.

mod case;
mod dc;
mod model;
mod placement;

pub use case::{Branch, Bus, Generator, NetworkCase};
pub use dc::DcMatrices;
pub use model::{MeasurementKind, MeasurementModel};
pub use placement::PmuPlacement;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{element} references unknown bus {bus}")]
    DanglingBus { element: String, bus: usize },
    #[error("branch graph is not connected")]
    Disconnected,
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("placement is unobservable: measurement Jacobian rank {rank} < {states}")]
    Unobservable { rank: usize, states: usize },
    #[error("reduced susceptance matrix is singular")]
    SingularSusceptance,
    #[error("{0}")]
    Io(String),
}
