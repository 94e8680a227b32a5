//! Simulation and verification toolkit for the vertex-reinforced jump
//! process and its random Schrödinger representation.
//!
//! * [`graph`]: weighted graphs, lattice boxes, wiring and surgery.
//! * [`beta`]: the random potential law, conditioning, exact sampling.
//! * [`schrodinger`]: Green functions, `psi`, exit masses, path sums.
//! * [`mc`]: replicate streams, summaries and the Monte Carlo suites.
//! * [`renewal`]: level masses, cuts and the revealing sequence on strips.
//! * [`vrjp`]: annealed and quenched jump-process simulators.
//! * [`toy`]: chain closed forms, toy graphs and the comparison chain.

pub mod beta;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod mc;
pub mod quad;
pub mod renewal;
pub mod schrodinger;
pub mod toy;
pub mod vrjp;

pub use error::{Error, Result};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
