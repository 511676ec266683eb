//! Core numerics: a dense `f32` tensor with reverse-mode
//! automatic differentiation, the three 3D ResNet-18 / Residual Transformer
//! Module architecture variants, the video segment pipeline, and the
//! training and cross-validation machinery.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, dataset
//! directories and the command-line interface live in the `babynet` crate.
#![no_std]
// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
mod error;
pub mod gradcheck;
pub mod model;
pub mod rng;
mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::{Parameter, Tensor};
