//! Collision statistics for embedding corpora.
//!
//! The crate is organised around the pieces needed to reason about how often
//! semantically duplicated documents meet each other as a corpus grows:
//!
//! * [`specfn`] – log-gamma, incomplete beta, log-scale modified Bessel `I_ν`
//!   and the von Mises–Fisher normaliser.
//! * [`nullmodel`] – closed forms and samplers for nearest-neighbour
//!   similarity under uniform and vMF distributions on the sphere.
//! * [`nnstats`] – exact and LSH nearest-neighbour reports over
//!   [`EmbeddingSet`]s, subsample ladders and power-law breakdown detection.
//! * [`keff`] – latent-mixture occupancy and the effective pool size
//!   estimated from the mean nearest-neighbour cosine.
//! * [`scaling`] – fractional loss increase, plane/ratio law fits and the
//!   restored loss prediction.
//! * [`redundancy`] – cluster-correlated gradient simulator, effective sample
//!   size, unseen-mass learning curves and separability metrics.

pub mod budget;
pub mod embedding;
mod error;
pub mod keff;
pub mod nnstats;
pub mod nullmodel;
pub mod output;
pub mod quadrature;
pub mod redundancy;
pub mod rng;
pub mod scaling;
pub mod specfn;
pub mod stats;

pub use embedding::EmbeddingSet;
pub use error::{Error, Result};
