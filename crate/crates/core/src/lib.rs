//! Desk-scale differentially private GAN training where only the
//! generator's upstream gradients are sanitized, with an exact Renyi-DP
//! accountant, centralized and simulated-federated training protocols, and
//! synthetic datasets plus metrics sized for a laptop.

pub mod accountant;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod federated;
pub mod gan;
pub mod math;
pub mod network;
pub mod rng;
pub mod sanitizer;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
