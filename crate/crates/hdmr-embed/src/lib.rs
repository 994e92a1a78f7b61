//! Supervised graph embedding with an explicit out-of-sample map.
//!
//! The embedding coordinates are modeled as an additive expansion over
//! per-feature orthonormal Legendre polynomials. Fitting reduces to a
//! regularized symmetric-definite generalized eigenproblem built from a
//! supervised affinity graph, and the learned coefficient matrix gives a
//! closed-form projection for unseen samples. The crate also ships the
//! linear special case (locality preserving projections), the direct
//! Laplacian-eigenmaps embedding of the training graph, a classification
//! and cluster-quality evaluation toolkit, and an experiment harness with
//! a CLI.
//!
//! Module map:
//!
//! * [`basis`] — orthonormal shifted/scaled Legendre feature maps.
//! * [`graph`] — supervised binary affinity graphs and their Laplacians.
//! * [`eigensolve`] — robust generalized symmetric-definite eigensolver.
//! * [`embedding`] — model fitting, out-of-sample transform, baselines.
//! * [`model_io`] — versioned text serialization of fitted models.
//! * [`eval`] — 1-NN, accuracy/kappa, NMI, Fisher score, silhouette,
//!   k-means, noise injection, learning-curve AUC.
//! * [`pipeline`] — data loading, stratified splits, cross-validation,
//!   experiment orchestration and report emission.

pub mod basis;
pub mod eigensolve;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model_io;
pub mod pipeline;

pub use error::{Error, Result};
