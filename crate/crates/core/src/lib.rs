//! Lognormal statistics of neural gradients and the tools built on them:
//! low-bit float format search, stochastic pruning with solved thresholds, a
//! codec for pruned tensors and Monte-Carlo oracles for every closed form.

pub mod distfit;
pub mod encode;
pub mod error;
pub mod fpquant;
pub mod mcsim;
pub mod prune;
pub mod rng;
pub mod special;
pub mod tensorio;

pub use error::{Error, Result};
