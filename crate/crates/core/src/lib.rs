//! Local homophily analysis, synthetic attributed graphs, small GNNs and group
//! fairness metrics for node classification.

pub mod bundle;
pub mod fairness;
pub mod graph;
pub mod homophily;
pub mod models;
pub mod nn;
pub mod seed;
pub mod synth;

pub use graph::{Graph, GraphError, Labels, NodeAttributes, NodeId};
