//! Constrained gradient flows on a regular level set Σ = H⁻¹(0), the
//! ε-deformed flows of the Lagrange multiplier function F + τH, and the
//! Newton iteration carrying base trajectories to ε-trajectories.

pub mod criticals;
pub mod error;
pub mod fields;
pub mod flows;
pub mod grid;
pub mod harness;
pub mod hypersurface;
pub mod linalg;
pub mod linops;
pub mod newton;
pub mod problem;

pub use error::{Error, Result};
pub use fields::Real;

/// Double-precision field, the scalar type of the geometric pipeline.
pub type Field = fields::ScalarField<f64>;
/// Single-precision field.
pub type Field32 = fields::ScalarField<f32>;
/// Points and vectors of ℝ^m.
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
