use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    Numerical(String),

    #[error("derivative check failed at {point:?}: deviation {deviation:.3e} exceeds {tol:.3e}")]
    CheckFailed {
        point: Vec<f64>,
        deviation: f64,
        tol: f64,
    },

    #[error("|grad H| = {0:.3e} is below the regularity floor")]
    DegenerateGradient(f64),

    #[error("vector is not tangent to the hypersurface (normal component {0:.3e})")]
    NotTangent(f64),

    #[error("point is not on the hypersurface (|H| = {0:.3e})")]
    NotOnSurface(f64),

    #[error("retraction onto the hypersurface failed: {0}")]
    RetractFailed(String),

    #[error("Newton search did not converge: {0}")]
    NoConvergence(String),

    #[error("point is not critical (residual {0:.3e})")]
    NotCritical(f64),

    #[error("critical point correspondence failed at {0:?}")]
    CorrespondenceFailed(Vec<f64>),

    #[error("no connecting trajectory: {0}")]
    NoConnection(String),

    #[error("implicit integrator failed: {0}")]
    StiffnessFailure(String),

    #[error("tangent frame degenerate at node {0}")]
    FrameDegenerate(usize),

    #[error("ambiguous numerical rank: singular value gap {gap:.3e} at threshold {threshold:.3e}")]
    IllConditioned { gap: f64, threshold: f64 },

    #[error("linearized operator is not surjective: {0}")]
    NotSurjective(String),

    #[error("Newton iteration diverged at step {step} (contraction {contraction:.3e})")]
    Diverged { step: usize, contraction: f64 },

    #[error("iterate left the domain box at node {0}")]
    DomainExit(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("uniqueness violated: perturbation {index} converged at distance {distance:.3e}")]
    UniquenessViolated { index: usize, distance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("suite failures: {0:?}")]
    SuiteFailure(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
