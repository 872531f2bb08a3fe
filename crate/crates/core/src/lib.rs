//! Context-dependent influence networks from discrete-time marked event
//! data: simulation, group-sparse estimation, prediction and network
//! post-processing.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod objective;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{EventPanel, GroupIndex, InfluenceTensor, Intercepts, PanelKind};
