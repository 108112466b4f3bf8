//! Area-weighted, stratified evaluation of gridded weather forecasts.

pub mod boundaries;
pub mod cli;
pub mod datastore;
pub mod fairness;
pub mod error;
pub mod format;
pub mod fsio;
pub mod geodesy;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod report;
pub mod stratify;
pub mod sum;

pub use error::{Error, Result};
