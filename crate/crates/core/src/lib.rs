//! Multi-hop preemption for a new call on a fixed route: topology and
//! traffic generation, the energy model, distributed and centralized
//! solvers, and analysis helpers.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod seed;
pub mod solvers;
pub mod traffic;

pub use error::{Error, Result};
