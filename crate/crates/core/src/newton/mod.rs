//! Newton iteration from an embedded base trajectory to a nearby
//! ε-trajectory: the trivialized section, its minimum-norm right inverse,
//! the map T^ε and numerical studies of its scaling, uniqueness and
//! quadratic remainders.

mod iterate;
mod right_inverse;
mod section;
mod studies;

pub use iterate::{newton_iterate, t_eps, NewtonOptions, NewtonReport, NewtonStep, DEFAULT_MAX_ITER, DEFAULT_NEWTON_TOL};
pub use right_inverse::RightInverse;
pub use section::{displaced_path, trivialized_section};
pub use studies::{
    derivative_difference, flow_agreement, injectivity_check, loglog_slope, quadratic_remainder, quadratic_remainder_check,
    scaling_study, uniqueness_probe, InjectivityReport, QuadraticReport, ScalingReport, ScalingRow, UniquenessReport,
    T_LADDER, UNIQUENESS_TOL,
};
