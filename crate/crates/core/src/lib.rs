//! Distributed Kalman filtering over networks with random symmetric link
//! failures: broadcast Push-Sum gain agreement, consensus averaging of local
//! estimates, spectral stability bounds and a Monte-Carlo harness.

pub mod analysis;
pub mod dkf;
pub mod error;
pub mod exec;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod pushsum;
pub mod rng;
pub mod sim;

pub use analysis::BoundsReport;
pub use dkf::{ConsensusParams, DkfNetwork, FrozenGains, GainMode};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use graph::{Graph, LinkFailureModel, SymMatrix};
pub use model::{CentralizedSolution, NodeOutput, Plant};
pub use rng::RoundKey;
