//! Local module identification in linear dynamic networks with correlated
//! process noise.
//!
//! The pipeline is: describe a network ([`model::NetworkSpec`]), pick
//! predictor inputs and outputs ([`selection`]), check the graph conditions
//! ([`graph`]), inspect the immersed and transformed network ([`transform`]),
//! simulate data ([`simulation`]) and estimate the target module with a MIMO
//! direct prediction-error method ([`estimation`]).

pub mod error;
pub mod estimation;
pub mod graph;
pub mod model;
pub mod par;
pub mod selection;
pub mod simulation;
pub mod transform;

pub use error::{Error, Result};
pub use par::ExecPolicy;
