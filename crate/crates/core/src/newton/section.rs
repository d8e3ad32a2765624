use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::flows::{residual_section_eps, AmbientPath, BasePath};
use crate::grid::{ResidualField, TangentField};
use crate::problem::ProblemSetup;

/// (u, τ) = (q + X, σ + ℓ) for Z = (X, ℓ) in the staggered layout, where σ
/// are the discrete multipliers of the base path.
pub fn displaced_path(path: &BasePath, sigma: &[f64], z: &TangentField) -> Result<AmbientPath> {
    let u = path.points.iter().zip(&z.x).map(|(q, x)| q + x).collect();
    let tau = sigma.iter().zip(&z.ell).map(|(s, l)| s + l).collect();
    let mut out = AmbientPath::embedded(path, tau)?;
    out.u = u;
    Ok(out)
}

/// F^ε_q(Z): the ε-section evaluated at (q + X, σ + ℓ). At Z = 0 its first
/// row vanishes and its second row is the discrete derivative of σ.
pub fn trivialized_section(
    setup: &ProblemSetup,
    path: &BasePath,
    sigma: &[f64],
    eps: f64,
    z: &TangentField,
) -> Result<ResidualField> {
    let zp = displaced_path(path, sigma, z)?;
    if let Some(j) = zp.u.iter().position(|u| !setup.in_box(u)) {
        return Err(Error::DomainExit(j));
    }
    residual_section_eps(setup, eps, &zp)
}

/// Flat form of [`trivialized_section`] on flat domain coordinates.
pub(crate) fn section_flat(
    setup: &ProblemSetup,
    path: &BasePath,
    sigma: &[f64],
    eps: f64,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let zf = TangentField::from_flat(path.grid, path.dim(), z);
    Ok(trivialized_section(setup, path, sigma, eps, &zf)?.to_flat())
}
