//! Stopping-set-aware LDPC codes, light-node sampling and coded Merkle trees.

pub mod adversary;
pub mod alist;
pub mod cmt;
pub mod construction;
pub mod error;
pub mod experiment;
pub mod gf2;
pub mod lp;
pub mod rng;
pub mod sampling;
pub mod stopping;
pub mod tanner;

pub use error::{Error, Result};
