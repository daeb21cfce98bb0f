//! Lifelong node classification on evolving graphs.
//!
//! The crate covers the whole pipeline: a timestamped graph with a task
//! splitter ([`graph`]), receptive-field time statistics ([`tdiff`]), three
//! small graph models with manual gradients ([`models`]), incremental
//! training over task sequences ([`lifelong`]), open-world rejection
//! ([`openworld`]), evaluation measures ([`metrics`]) and a synthetic graph
//! generator ([`synth`]).

pub mod error;
pub mod graph;
pub mod lifelong;
pub mod metrics;
pub mod models;
pub mod openworld;
pub mod synth;
pub mod tdiff;

pub use error::{Error, Result};
