//! Wasserstein-regularized fair classification on fixed embeddings.
//!
//! A classifier is trained on precomputed document embeddings while a
//! weight-clamped critic estimates the Wasserstein-1 dependency between the
//! classifier's latent representation and that of a frozen network
//! pretrained to predict the sensitive attribute. The dependency estimate is
//! added to the cross-entropy loss, pushing the classifier towards
//! representations that carry no information about the sensitive attribute.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the `f64` instantiation used by the CLI and tests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod fairmetrics;
pub mod harness;
pub mod matrix;
pub mod neural;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod training;
pub mod wassdep;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type Mlp32 = neural::Mlp<f32>;
