//! Knowledge-grounded visual question answering over Vietnamese cultural
//! imagery.
//!
//! Questions are compiled into small programs over detected regions and a
//! cultural knowledge base, executed with a trace, and explained with text
//! sections and region evidence that are checked against each other.

pub mod bundled;
pub mod category;
pub mod dataset;
pub mod dsl;
pub mod evalkit;
pub mod explain;
pub mod kb;
pub mod perception;
pub mod pipeline;
pub mod progen;
pub mod scalar;
pub mod templates;

pub use category::Category;
pub use scalar::Scalar;

/// Attention grid at double precision.
pub type AttentionMap = perception::AttentionGrid<f64>;
/// BLEU-4 breakdown at double precision.
pub type BleuScore = evalkit::Bleu<f64>;
