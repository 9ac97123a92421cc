//! Cost-aware adversarial robustness for categorical tabular data.
pub mod attack_graph;
pub mod attack_pgd;
pub mod bench;
pub mod cost_model;
pub mod error;
pub mod merging;
pub mod net;
pub mod projections;
pub mod training;
pub mod trees;
pub use error::{Error, Result};
