//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor).
//!
//! A [`Graph`] records every operation applied to its nodes. Calling
//! [`Graph::backward`] on a scalar node sweeps the record in reverse and
//! accumulates gradients into the leaves.

mod graph;
pub(crate) mod kernels;
mod ops;

pub use graph::{Graph, Var};
pub use ops::{conv3d_direct, conv_output_len, BatchMoments, Conv3dSpec, Mode, RunningStats};
