//! Charger placement and pricing on road networks where EV drivers and
//! non-charging drivers settle into a coupled Wardrop equilibrium.
//!
//! The crate is layered bottom-up:
//!
//! - [`network`]: graph, O-D pairs, routes and extended (route, charge node) paths.
//! - [`cost`]: agent costs, social cost and the potential.
//! - [`equilibrium`]: equilibrium solver, gap measures and a brute-force oracle.
//! - [`planner`]: design evaluation, the outer pattern search and the baselines.
//! - [`abompn`]: class decomposition, relaxation and integer adjustment.
//! - [`io`], [`generate`], [`sweep`]: file formats, instance generators, budget sweeps.

pub mod abompn;
pub mod cost;
pub mod design;
pub mod equilibrium;
pub mod error;
pub mod fixtures;
pub mod generate;
pub mod io;
pub mod network;
pub mod planner;
pub mod scenario;
pub mod sweep;

pub use error::{Error, Result};
