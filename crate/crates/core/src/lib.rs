//! Multi-level fair graph representation learning.
//!
//! The pipeline coarsens an attributed graph with a matching policy that
//! favors merging nodes from different sensitive groups, embeds the coarsest
//! graph with any base embedder, refines the embedding back to the original
//! graph with a fairness-regularized graph-convolutional model, and evaluates
//! utility and group fairness downstream.

pub mod attributes;
pub mod config;
pub mod coarsen;
pub mod downstream;
pub mod embed;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use graph::Graph;
