#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 0.0)` also rejects NaN.

pub mod archive;
pub mod bayesnet;
pub mod error;
pub mod experiments;
pub mod genotype;
pub mod landscape;
pub mod metamodel;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
