//! Knowledge graph completion with cyclic orthotope relation regions on a flat
//! torus.
//!
//! Entities are points on `T^d` whose position depends on the entity they are
//! paired with (a per-entity "bump" shifts the counterpart). Each relation owns
//! a head region and a tail region, both axis-aligned boxes that wrap around
//! the torus. A triple scores well when both context-shifted points land inside
//! their regions.
//!
//! Modules:
//!
//! - [`geometry`]: wrapping, circular offsets, regions and the piecewise
//!   point-to-region distance with its derivatives;
//! - [`kg_store`]: triple files, vocabularies and the filter index;
//! - [`model`]: parameters and scoring;
//! - [`trainer`]: negative sampling, self-adversarial loss, width
//!   regularization and Adam;
//! - [`evaluator`]: filtered MRR / Hits@K and relation-pattern checks;
//! - [`cli`]: the command surface, checkpoints and report files;
//! - [`synthetic`]: toy graphs used by tests and examples.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod kg_store;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use evaluator::{evaluate, filtered_rank, pattern_check, Direction, MetricsReport, PatternKind, PatternReport};
pub use geometry::{CyclicOrthotope, NormKind, TorusVector};
pub use kg_store::{build_filter_index, dataset_stats, FilterIndex, KnowledgeGraphDataset, Split, Triple, Vocabulary};
pub use model::{Model, ModelConfig, Query, Side};
pub use trainer::{train, TrainConfig, TrainOutcome};
