//! Discretized linearizations D⁰ and D^ε of the base and ε-sections, their
//! weighted adjoints, the projection π_ε, Fredholm index counting and
//! empirical probes of the uniform estimates.

mod assemble;
mod fredholm;
mod operator;
mod probes;
mod projection;
pub mod random;

pub use assemble::{
    assemble_d0, assemble_d0_with, assemble_deps, assemble_deps_at, d0_adjoint_continuum, deps_adjoint_continuum, eps_hessian_apply,
    PathGeometry,
};
pub use fredholm::{domain_correlation, fredholm_index_estimate, FredholmReport, DEFAULT_RANK_TOL};
pub use operator::{BoundaryBlock, LinearOperator, OperatorKind, Variant};
pub use probes::{estimate_probe, no_growth, ProbeKind, ProbeOptions, ProbeReport};
pub use projection::{b_inverse_norms, embed_tangent, pi_eps, pi_point, BInverseReport, PiParams};
