//! Isotonic subgroup selection on product lattices.

pub mod coding;
pub mod dagtest;
pub mod error;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod pvalue;
pub mod simulation;
pub mod special;
pub mod turnover;

pub use error::{DataIssue, Error, Result};
