//! Performance prediction for derived and merged models from sparse binary
//! evaluation records.
//!
//! The central predictor is a sigmoid matrix factorization whose model
//! embeddings are smoothed along a lineage graph (fine-tune and merge edges)
//! and whose instance embeddings are smoothed along a cosine kNN graph. The
//! crate also ships the reference predictors it is compared against, the
//! evaluation metrics, instance-level routing, and a synthetic ecosystem
//! generator with known ground truth.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); type aliases
//! for the common `f64` instantiations live at the crate root.

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod graphs;
pub mod lrmf;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod predictor;
pub mod routing;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use predictor::Predictor;
pub use scalar::Scalar;

/// Lineage-regularized MF model in double precision.
pub type LrmfModelF64 = lrmf::LrmfModel<f64>;
/// Lineage-regularized MF model in single precision.
pub type LrmfModelF32 = lrmf::LrmfModel<f32>;
pub type LaplacianF64 = graphs::Laplacian<f64>;
pub type LaplacianF32 = graphs::Laplacian<f32>;
pub type IrtModelF64 = baselines::irt::IrtModel<f64>;
pub type NcfModelF64 = baselines::ncf::NcfModel<f64>;
pub type MatrixF64 = Matrix<f64>;
