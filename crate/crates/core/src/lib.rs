//! Hybrid quantum–classical physics-informed solver for two-species
//! reaction–diffusion systems.
//!
//! A trainable embedding (classical network or quantum circuit) maps
//! space–time points to encoding angles; a shared variational circuit turns
//! them into activator and substrate concentrations. Input derivatives and
//! loss gradients are exact, assembled from parameter-shift rules.

pub mod circuits;
pub mod cli;
pub mod config;
pub mod diff;
pub mod embedding;
pub mod error;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod metrics;
pub mod physics;
pub mod reference;
pub mod statevector;
pub mod train;

pub use error::{Error, Result};
