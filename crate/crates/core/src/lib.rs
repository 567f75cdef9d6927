//! Characterizes classification problems by how six simple classifiers
//! perform on datasets sampled from them, embeds those fingerprints in two
//! dimensions, and measures how well a 1-nearest-neighbour meta-classifier
//! recovers each dataset's problem of origin.
//!
//! The stages, bottom-up:
//!
//! - [`tabular`]: problems with subject structure, subject-wise splits and
//!   balanced subsampling.
//! - [`synth`]: a seeded suite of six synthetic problems.
//! - [`classifiers`]: nearest mean, LDA, QDA, logistic regression, 1-NN and a
//!   CART tree.
//! - [`meta`]: accuracy grids and the raw / normalized / ranked meta-datasets.
//! - [`embedding`]: classical MDS and t-SNE.
//! - [`metaeval`]: 1-NN meta-classification, learning curves, confusion.
//! - [`pipeline`]: configuration, orchestration and artifacts.

pub mod classifiers;
pub mod embedding;
pub mod error;
pub mod matrix;
pub mod meta;
pub mod metaeval;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::RngStream;
