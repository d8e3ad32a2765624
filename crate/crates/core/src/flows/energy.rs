use serde::Serialize;

use super::{AmbientPath, BasePath};
use crate::criticals::CriticalPoint;
use crate::error::Result;
use crate::grid::{Placement, ResidualField, Tangency, TangentField};
use crate::problem::ProblemSetup;

/// ½∫(|∂_s q|² + |∇f(q)|²) ds by the trapezoid rule with central differences.
pub fn base_energy(path: &BasePath) -> f64 {
    let v = path.velocity();
    let g = &path.grid;
    0.5 * (0..=g.n)
        .map(|j| g.trap(j) * (v[j].norm_squared() + path.frames[j].grad_f_sigma().norm_squared()))
        .sum::<f64>()
}

/// ½∫(|∂_s u|² + ε²τ'² + |∇F + τ∇H|² + ε⁻²H(u)²) ds on the staggered grid:
/// derivative and gradient terms at half-nodes, τ' and H at the nodes.
pub fn eps_energy(setup: &ProblemSetup, eps: f64, z: &AmbientPath) -> Result<f64> {
    let g = &z.grid;
    let (n, ds) = (g.n, g.ds());
    let mut gf = Vec::with_capacity(n + 1);
    let mut gh = Vec::with_capacity(n + 1);
    let mut hv = Vec::with_capacity(n + 1);
    for u in &z.u {
        gf.push(setup.f.grad(u.as_slice())?);
        gh.push(setup.h.grad(u.as_slice())?);
        hv.push(setup.h.eval(u.as_slice())?);
    }
    let mut e = 0.0;
    for j in 0..n {
        let du = (&z.u[j + 1] - &z.u[j]) / ds;
        let grad = (&gf[j] + &gf[j + 1] + (&gh[j] + &gh[j + 1]) * z.tau[j]) * 0.5;
        e += ds * (du.norm_squared() + grad.norm_squared());
    }
    for j in 1..n {
        let dt = (z.tau[j] - z.tau[j - 1]) / ds;
        e += ds * (eps * eps * dt * dt);
    }
    for j in 0..=n {
        e += g.trap(j) * hv[j] * hv[j] / (eps * eps);
    }
    Ok(0.5 * e)
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    /// f(x⁻) − f(x⁺).
    pub c_star: f64,
    pub residual: f64,
    /// max f − min f over Σ, if known.
    pub oscillation: Option<f64>,
    pub oscillation_ok: bool,
}

/// |E − (f(x⁻) − f(x⁺))| together with the oscillation bound E ≤ osc f.
pub fn energy_identity_residual(
    energy: f64,
    x_minus: &CriticalPoint,
    x_plus: &CriticalPoint,
    oscillation: Option<f64>,
) -> EnergyReport {
    let c_star = x_minus.f_value - x_plus.f_value;
    EnergyReport {
        energy,
        c_star,
        residual: (energy - c_star).abs(),
        oscillation,
        oscillation_ok: oscillation.is_none_or(|o| energy <= o + 1e-9),
    }
}

/// ∂_s q + ∇F + χ∇H at the nodes, tangentially projected; central
/// differences inside, one-sided at the ends.
pub fn residual_section_base(path: &BasePath) -> TangentField {
    let v = path.velocity();
    let mut out = TangentField::zeros(path.grid, path.dim(), Placement::Nodes);
    out.tangency = Tangency::SigmaTangent;
    for (j, fr) in path.frames.iter().enumerate() {
        out.x[j] = fr.tan(&(&v[j] + fr.grad_f_sigma()));
    }
    out
}

/// The staggered ε-section: V_{j+½} = Δu/ds + avg∇F + τ_{j+½}·avg∇H and
/// h_j = Δτ/ds + ε⁻²H(u_j) at interior nodes.
pub fn residual_section_eps(setup: &ProblemSetup, eps: f64, z: &AmbientPath) -> Result<ResidualField> {
    let g = z.grid;
    let (n, ds) = (g.n, g.ds());
    let mut out = ResidualField::zeros(g, z.u[0].len());
    let mut prev = (setup.f.grad(z.u[0].as_slice())?, setup.h.grad(z.u[0].as_slice())?);
    for j in 0..n {
        let next = (setup.f.grad(z.u[j + 1].as_slice())?, setup.h.grad(z.u[j + 1].as_slice())?);
        out.v[j] = (&z.u[j + 1] - &z.u[j]) / ds + (&prev.0 + &next.0 + (&prev.1 + &next.1) * z.tau[j]) * 0.5;
        prev = next;
    }
    for j in 1..n {
        out.h[j] = (z.tau[j] - z.tau[j - 1]) / ds + setup.h.eval(z.u[j].as_slice())? / (eps * eps);
    }
    Ok(out)
}
