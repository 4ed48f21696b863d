//! Batch engine for customer lifetime value and churn prediction.
//!
//! The crate covers the full desk-scale pipeline: an event-log data model
//! with disjoint feature/label windows, a synthetic event generator with a
//! planted latent customer value, per-product view sequences turned into
//! skip-gram training pairs, customer embeddings trained by skip-gram with
//! negative sampling (including a warm-start scheme that keeps embedding
//! dimensions consistent across retraining periods), handcrafted customer
//! features, random forests for churn classification and spend-percentile
//! regression, probability and value calibration, and exact evaluation
//! metrics with an embedding-uplift experiment harness.

pub mod calibration;
pub mod data_model;
pub mod datagen;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod index;
pub mod matrix;
pub mod pairgen;
pub mod scalar;
pub mod sgns;

pub use scalar::Scalar;

/// Default scalar for pipeline-facing math (labels, features, forests).
pub type Real = f64;

/// Production embedding model: single precision, matching the on-disk format.
pub type Embeddings = sgns::EmbeddingModel<f32>;

/// Double-precision embedding model, used where gradients are checked
/// against finite differences.
pub type EmbeddingsF64 = sgns::EmbeddingModel<f64>;

/// Production forest over double-precision feature matrices.
pub type Forest = forest::ForestModel<f64>;
