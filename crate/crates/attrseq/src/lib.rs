//! Unsupervised embeddings for attributed sequences.
//!
//! An attributed sequence pairs a fixed-width attribute vector with a
//! variable-length sequence of categorical items (think: a user profile plus
//! their click path). This crate learns a single fixed-length embedding for
//! each instance by coupling two networks:
//!
//! * an attribute autoencoder whose bottleneck code summarizes the attributes
//!   ([`attrnet`]), and
//! * an LSTM next-item model whose first hidden state is shifted by that code,
//!   so sequence dynamics are modeled conditioned on the attributes
//!   ([`seqnet`]).
//!
//! After training ([`training`]), the embedding of an instance is the final
//! LSTM cell state of a read-only forward pass. [`baselines`] provides the
//! attribute-only, sequence-only, and classical alternatives used for
//! comparison, and [`evaluation`] scores embeddings with k-NN outlier
//! detection and ROC AUC. [`data`] handles datasets, including a synthetic
//! generator with planted outliers.

pub mod attrnet;
pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod numeric;
pub mod seqnet;
pub mod training;

pub use error::{Error, Result};
