//! Dense and sparse numerical kernels.
//!
//! Every layer above this module is assembled from these primitives, and each
//! primitive that participates in training has a hand-written adjoint. All
//! numerics are `f64`.

pub(crate) mod dense;
mod sparse;

pub use dense::DenseMatrix;
pub use sparse::{
    reset_spmm_counters, spmm, spmm_adjoint, spmm_adjoint_calls, spmm_calls, Propagator,
    SparseMatrix,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} matrix")]
    BufferLength { len: usize, rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),
}
