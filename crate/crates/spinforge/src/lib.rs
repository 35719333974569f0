//! Sparse deep Boltzmann machine engine.
//!
//! Emulates a probabilistic computer in software: a graph-colored parallel
//! Gibbs sampler over sparse Ising models, naive and hierarchical mean-field
//! solvers, and a hybrid contrastive-divergence trainer evaluated on
//! MNIST-style classification.

pub mod cli;
pub mod dataset;
pub mod meanfield;
pub mod metrics;
pub mod sampler;
pub mod topology;
pub mod training;
