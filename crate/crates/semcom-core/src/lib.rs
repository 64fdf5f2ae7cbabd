//! Desk-scale text semantic-communication simulation.
//!
//! The crate covers the full experiment pipeline: corpus cleaning and
//! vectorization ([`corpus`]), a transformer transceiver with a frozen
//! linear noise layer ([`model`]), stochastic channel machinery with
//! slot-varying multi-interferer RFI ([`channel`]), supervised training
//! with plateau/early-stop callbacks ([`trainer`]), and Monte Carlo
//! evaluation of the probability of semantic similarity ([`evaluator`]).
//!
//! Heavy inner loops (batched attention, slot sweeps, corpus cleaning)
//! run data-parallel through [`exec`] when the `parallel` feature is
//! enabled; all parallel sites reduce in a fixed order, so results are
//! bitwise identical to the sequential fallback.

pub mod channel;
pub mod corpus;
pub mod demo;
pub mod error;
pub mod evaluator;
pub mod exec;
pub mod model;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
