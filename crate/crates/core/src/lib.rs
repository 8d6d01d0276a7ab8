//! Benchmarking engine for class-conditional image generators.
//!
//! Metric kernels live in [`metrics`], the MinMax Harmonic Mean composite in
//! [`composite`]. Sweeps over generator adapters are planned and executed by
//! [`harness`]; [`relaionet`] builds out-of-distribution evaluation sets from
//! web metadata shards, and [`toyflow`] is a closed-form 2D generator that
//! speaks the adapter protocol.

pub mod cli;
pub mod composite;
pub mod error;
pub mod key;
pub mod harness;
pub mod metrics;
pub mod relaionet;
pub mod report;
pub mod toyflow;

pub use error::{Error, Result};
pub use key::{RunKey, Steps};
