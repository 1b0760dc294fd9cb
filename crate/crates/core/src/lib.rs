//! Downlink power allocation for cell-free massive MIMO.
//!
//! The crate covers the whole chain: network drops and channel statistics,
//! MMSE estimation, MR/RZF precoding and the statistical SE bound, a WMMSE
//! optimizer with an ADMM subproblem solver, closed-form heuristics, and
//! per-AP / per-cluster neural allocators trained to imitate WMMSE.

pub mod codec;
pub mod config;
pub mod error;
pub mod heuristic;
pub mod learned;
pub mod network;
pub mod pilots;
pub mod pipeline;
pub mod precoding;
pub mod seeds;
pub mod wmmse;

pub use config::{ExperimentConfig, NetworkConfig};
pub use error::{Error, Result};
