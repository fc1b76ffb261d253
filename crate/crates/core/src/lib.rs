//! Dynamic graph embedding toolkit.
//!
//! Learns per-snapshot node representations of an evolving graph with two
//! families of methods, and scores them on reconstruction, link prediction,
//! node classification and projection export.
//!
//! * [`graph`]: snapshot sequences, edge deltas and the snapshot text format.
//! * [`sbm`]: seeded stochastic-block-model series with a diminishing community.
//! * [`numerics`]: truncated SVD, orthogonal Procrustes, PCA and the portable RNG.
//! * [`svd_embed`]: optimal, incremental and restarting SVD embeddings.
//! * [`ae`]: autoencoder embeddings (static, aligned, warm-started, lookback).
//! * [`eval`]: ranking metrics, link prediction protocols, classification.

pub mod ae;
pub mod eval;
pub mod graph;
pub mod numerics;
pub mod sbm;
pub mod series;
pub mod svd_embed;

pub use graph::{EdgeDelta, GraphSnapshot, SnapshotSequence};
pub use numerics::rng::SeededRng;
pub use series::{EmbeddingSeries, EmbeddingStep};

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
