//! Explanation-preserving structural attacks on graph neural networks.
//!
//! The crate trains small GCN classifiers, learns soft edge-mask
//! explanations for their predictions, and searches for edge perturbations
//! that keep the prediction and the degree distribution while moving the
//! explanation away from its original edges.

pub mod attack;
pub mod datasets;
pub mod error;
pub mod explainer;
pub mod gcn;
pub mod graph;
pub mod harness;
pub mod powerlaw;

pub use error::{Error, Result};
