//! Embedding-aware feature discovery over event sequences.
//!
//! The crate couples a frozen sequence embedding with an iterative loop that
//! proposes interpretable features written in a small expression language,
//! scores each candidate for how well the embedding already encodes it
//! (reconstruction / alignment) and for the downstream loss it removes when
//! appended to the embedding (utility), and keeps the complementary ones under
//! a fixed budget.
//!
//! Modules, bottom-up:
//!
//! - [`dataset`]: event sequences, labels, embeddings, fold plans, on-disk store
//! - [`fdsl`]: the feature expression language (parse, print, compile, evaluate)
//! - [`probe`]: small gradient-boosted trees and the metrics built on them
//! - [`scoring`]: reconstruction, alignment, utility, verdicts, importance
//! - [`agent`]: reflection, generation, repair and the discovery loop
//! - [`erasure`]: HSIC and the post-hoc linear eraser
//! - [`synthbench`]: synthetic datasets with a ground-truth manifest
//! - [`cli`]: the `eafd` command surface

pub mod agent;
pub mod cli;
pub mod dataset;
pub mod erasure;
pub mod error;
pub mod fdsl;
pub mod parallel;
pub mod probe;
pub mod report;
pub mod scoring;
pub mod synthbench;

pub use error::{Error, Result};

/// Crate version embedded in every report header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
