//! Cluster-specific ("tensorized") representation learning.
//!
//! A dataset is split into `k` clusters by a hard assignment, and each
//! cluster gets its own embedding head on top of optionally shared layers.
//! Training alternates a gradient step on the network parameters under a
//! fixed assignment with a Lloyd step that moves every point to the cluster
//! whose model scores it best.
//!
//! Model families: autoencoders ([`recon`]), variational autoencoders
//! ([`vae`]), contrastive embeddings ([`ssl`]) and restricted Boltzmann
//! machines ([`rbm`]). [`data`] generates and loads datasets, [`metrics`]
//! scores the results.

pub mod cluster;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rbm;
pub mod recon;
pub mod ssl;
pub mod vae;

pub use error::{Error, Result};
