//! Behavioural alignment between humans and image classifiers, computed from
//! per-trial decision records.
//!
//! The pipeline:
//!
//! 1. [`trial_store`] loads and validates decision CSVs into
//!    [`DecisionTable`]s.
//! 2. [`class_mapper`] turns 1000-way ImageNet posteriors into one of the 16
//!    entry-level categories, for models whose decisions are exported as raw
//!    posteriors.
//! 3. [`metrics`] computes per-condition accuracy, observed consistency and
//!    error consistency (kappa) cells and averages them into the three
//!    alignment scores.
//! 4. [`ranker`] applies the condition-exclusion protocol and builds the
//!    mean-rank and OOD-accuracy leaderboards.
//! 5. [`matrix`] builds pairwise error-consistency matrices.
//!
//! [`Benchmark`] ties these together over a data directory.
//!
//! ```
//! use std::sync::Arc;
//! use oodgap_core::metrics::ConsistencyCounts;
//!
//! // 6 of 10 images with the same outcome, both deciders 80% correct
//! let counts = ConsistencyCounts { both_correct: 6, only_a: 2, only_b: 2, both_wrong: 0 };
//! assert_eq!(counts.observed(), 0.6);
//! assert_eq!(counts.kappa(), (-0.25, false));
//! ```

pub mod benchmark;
pub mod class_mapper;
pub mod config;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod plot;
pub mod ranker;
pub mod report;
pub mod stats;
pub mod trial_store;

pub use benchmark::{Benchmark, EvalError, MetricReport};
pub use config::BenchmarkConfig;
pub use par::Exec;
pub use trial_store::{DecisionTable, TrialRecord};
