//! Training engine for spiking neural networks.
//!
//! Implements a discrete-time leaky integrate-and-fire network with two
//! equivalent forward formulations, a hand-derived reverse-mode gradient
//! engine covering activation-based, timing-based, and combined learning
//! rules, the loss functions and optimizers used with them, dataset
//! ingestion (IDX images with latency coding, AER event streams, random
//! spike trains), and analysis tooling: equivalence sweeps, finite-difference
//! gradient checks, and loss-landscape reconstruction from gradient fields.

pub mod analysis;
pub mod config;
pub mod data;
pub mod error;
pub mod grad;
pub mod loss;
pub mod neuron;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};
