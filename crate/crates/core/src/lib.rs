//! Simplex-valued node embeddings compared in Aitchison geometry.
//!
//! Nodes are compositions on the open simplex, parameterized by softmax
//! logits and embedded through an isometric log-ratio (ILR) transform. Edges
//! follow a Bernoulli latent-distance model on the ILR coordinates, trained
//! with Adam on a negative-sampling estimate of the log-likelihood.
//!
//! Modules:
//! - [`compgeo`]: closure, ILR bases and transforms, subcompositions, varimax.
//! - [`graphio`]: edge-list and label loading, connected link split.
//! - [`model`]: parameters, likelihood, sampled objective, gradients.
//! - [`train`]: Adam and the training loop.
//! - [`evalsuite`]: link prediction, node-classification probe,
//!   subcompositional evaluation, interiority and balance probes.
//! - [`synth`]: synthetic membership generators and recovery scoring.
//! - [`interpret`]: loadings, PCA and trade-off trajectory exports.

pub mod compgeo;
pub mod error;
pub mod evalsuite;
pub mod graphio;
pub mod interpret;
pub mod model;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
