//! Round-synchronous federated learning simulator for encoder-decoder
//! image-to-image networks, with patience-based adaptive encoder freezing
//! and exact compute/communication/energy accounting.
//!
//! The crate is organised around the lifecycle of a simulated federation:
//!
//! * [`data`] generates deterministic paired source/target image silos and
//!   the preprocessing/augmentation pipeline.
//! * [`nn`] is a minimal differentiable encoder-decoder network family with
//!   explicit forward/backward passes, Adam, and per-group freeze masks.
//! * [`fed`] orchestrates the round loop: local FedProx training,
//!   sample-weighted FedAvg aggregation, and freeze broadcast.
//! * [`freeze`] is the server-side convergence monitor that turns inter-round
//!   encoder drift into a federation-wide freeze decision.
//! * [`metrics`] holds image-similarity metrics, FLOP/byte/energy ledgers,
//!   and the two-sample statistics used to compare runs.
//!
//! Everything is `f64` and fully deterministic for a fixed seed; client
//! fan-out is data-parallel via rayon when the `parallel` feature (default)
//! is enabled, with a sequential fallback otherwise.

pub mod data;
pub mod error;
pub mod exec;
pub mod fed;
pub mod freeze;
pub mod metrics;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Execution;
pub use tensor::TensorBuffer;
