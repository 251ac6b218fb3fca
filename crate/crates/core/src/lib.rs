//! Decentralized cooperative map matching (CMM) for connected vehicles.
//!
//! Each vehicle runs a particle filter over the shared GNSS common error,
//! weights particles by how well the corrected positions of its own and its
//! neighbors' measurements fit the road map, and periodically refreshes its
//! particle population with particles taken from neighbors. How many particles
//! a vehicle takes from each neighbor is a row of a consensus matrix; the
//! [`consensus`] module selects those rows (variance minimization, max-degree,
//! constant or random weights) and analyses their convergence.
//!
//! The [`experiment`] module wires everything together into the centralized and
//! decentralized simulations and the multi-network comparison suite.

pub mod consensus;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod fusion;
pub mod metrics;
pub mod network;
pub mod output;
pub mod roadmap;
pub mod scenario;
pub mod seed;

/// Planar vector in meters (east, north).
pub type Vec2 = nalgebra::Vector2<f64>;

/// Index of a vehicle in a network, `0..N`.
pub type NodeId = usize;

pub use error::{Error, Result};
