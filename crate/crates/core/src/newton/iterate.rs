use nalgebra::DVector;
use serde::Serialize;

use super::right_inverse::RightInverse;
use super::section::{displaced_path, section_flat};
use crate::error::{Error, Result};
use crate::flows::{AmbientPath, BasePath};
use crate::grid::{NormKind, TangentField};
use crate::linops::{assemble_deps, assemble_deps_at, Variant};
use crate::problem::ProblemSetup;

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Consecutive non-contracting steps after which the iteration is abandoned.
const STALL_LIMIT: usize = 3;

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Stopping threshold on ‖F^ε_q(Z)‖ in the (0,2,ε) norm.
    pub tol: f64,
    /// Re-linearize at every iterate instead of keeping D^ε_q frozen at Z = 0.
    pub full_newton: bool,
    /// Starting point in flat domain coordinates; Z = 0 if absent.
    pub initial: Option<DVector<f64>>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_NEWTON_TOL,
            full_newton: false,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NewtonStep {
    pub nu: usize,
    /// ‖ζ_ν‖ in the (1,2,ε) norm.
    pub norm_zeta_12eps: f64,
    /// ‖F^ε_q(Z_{ν+1})‖ in the (0,2,ε) norm.
    pub norm_residual_02eps: f64,
    /// ‖F^ε_q(Z_{ν+1})‖/‖F^ε_q(Z_ν)‖.
    pub contraction_factor: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NewtonReport {
    pub eps: f64,
    /// ‖F^ε_q(0)‖ in the (0,2,ε) norm.
    pub initial_residual: f64,
    pub iterations: Vec<NewtonStep>,
    pub converged: bool,
    #[serde(skip)]
    pub z_final: TangentField,
    pub norm_z_12eps: f64,
    pub norm_x_inf: f64,
    pub norm_ell_inf: f64,
    pub residual_final: f64,
    pub jitter_used: bool,
}

/// Newton iteration Z_{ν+1} = Z_ν − R F^ε_q(Z_ν) from Z_0 = 0, where R is
/// the minimum-norm right inverse of D^ε_q at the embedded base path (kept
/// frozen unless `full_newton`). Every correction lies in the range of the
/// adjoint, hence so does the limit.
pub fn newton_iterate(setup: &ProblemSetup, path: &BasePath, eps: f64, opts: &NewtonOptions) -> Result<NewtonReport> {
    let sigma = path.multipliers()?;
    let op = assemble_deps(setup, path, eps, Variant::Operator)?;
    let mut ri = RightInverse::new(&op)?;
    let jitter_used = ri.jitter_used;
    let (grid, m) = (path.grid, path.dim());
    let mut z = opts.initial.clone().unwrap_or_else(|| DVector::zeros(op.domain_dim()));
    if z.len() != op.domain_dim() {
        return Err(Error::Config(format!("initial point has {} coordinates, expected {}", z.len(), op.domain_dim())));
    }
    let mut r = section_flat(setup, path, &sigma, eps, &z)?;
    let mut nr = op.norm_codomain(&r);
    let initial_residual = nr;
    let mut steps = Vec::new();
    let mut stalled = 0;
    while nr > opts.tol && steps.len() < opts.max_iter {
        if opts.full_newton && !steps.is_empty() {
            let zf = TangentField::from_flat(grid, m, &z);
            let at = assemble_deps_at(setup, &displaced_path(path, &sigma, &zf)?, eps, Variant::Operator)?;
            ri = RightInverse::new(&at)?;
        }
        let zeta = -ri.apply(&r);
        z += &zeta;
        r = section_flat(setup, path, &sigma, eps, &z)?;
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("Newton residual at step {}", steps.len())));
        }
        let next = op.norm_codomain(&r);
        let contraction = next / nr;
        steps.push(NewtonStep {
            nu: steps.len(),
            norm_zeta_12eps: TangentField::from_flat(grid, m, &zeta).eps_norm(eps, NormKind::N12),
            norm_residual_02eps: next,
            contraction_factor: contraction,
        });
        stalled = if contraction >= 1.0 { stalled + 1 } else { 0 };
        if stalled >= STALL_LIMIT {
            return Err(Error::Diverged {
                step: steps.len() - 1,
                contraction,
            });
        }
        nr = next;
    }
    let zf = TangentField::from_flat(grid, m, &z);
    Ok(NewtonReport {
        eps,
        initial_residual,
        iterations: steps,
        converged: nr <= opts.tol,
        norm_z_12eps: zf.eps_norm(eps, NormKind::N12),
        norm_x_inf: zf.x_sup(),
        norm_ell_inf: zf.ell_inf(),
        z_final: zf,
        residual_final: nr,
        jitter_used,
    })
}

/// T^ε q = (q + X, σ + ℓ) for the converged Newton limit Z = (X, ℓ).
pub fn t_eps(setup: &ProblemSetup, path: &BasePath, eps: f64, opts: &NewtonOptions) -> Result<(AmbientPath, NewtonReport)> {
    let rep = newton_iterate(setup, path, eps, opts)?;
    if !rep.converged {
        return Err(Error::NoConvergence(format!(
            "residual {:.3e} after {} iterations at eps = {eps}",
            rep.residual_final,
            rep.iterations.len()
        )));
    }
    let out = displaced_path(path, &path.multipliers()?, &rep.z_final)?;
    Ok((out, rep))
}
