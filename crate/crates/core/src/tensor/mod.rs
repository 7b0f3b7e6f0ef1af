//! Block-structured parameter arithmetic and small dense linear algebra.

mod matrix;
mod param;
mod svd;

pub use matrix::Matrix;
pub use param::{axpy, blockwise_frobenius, dot, norm2, Block, ParamVec, Shape};
pub use svd::{full_svd, reduced_svd, singular_values, ReducedSvd, Svd};

pub(crate) use matrix::{dot as slice_dot, norm as slice_norm};
