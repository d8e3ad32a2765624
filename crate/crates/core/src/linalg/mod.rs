//! Sparse and banded linear algebra for the discretized operators.

pub mod banded;
pub mod minnorm;
pub mod sparse;

pub use banded::{BandedCholesky, BandedSym, PivotFailure};
pub use minnorm::MinNormSolver;
pub use sparse::{RowBuilder, SparseMatrix};
