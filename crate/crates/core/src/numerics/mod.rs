//! Dense linear-algebra primitives shared by the embedding methods.

pub mod format;
mod pca;
mod procrustes;
pub mod rng;
mod svd;

pub use pca::{pca_project_2d, Projection};
pub use procrustes::{procrustes_rotation, procrustes_rotation_with};
pub use svd::{frobenius_sq, max_orthonormality_error, reorthonormalize, truncated_svd, TruncatedSvd};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("rank {d} out of range for a {rows}x{cols} matrix")]
    RankOutOfRange { d: usize, rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}")]
    InvalidInput(String),
}
