//! Empirical constants of the uniform linear estimates: for each ε the
//! largest ratio LHS/RHS over random fields. An estimate holds uniformly if
//! these ratios stay bounded across the ε sweep.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::assemble::{assemble_d0_with, assemble_deps, PathGeometry};
use super::operator::{LinearOperator, Variant};
use super::projection::{embed_tangent, pi_eps, pi_point, PiParams};
use super::random::{random_ambient_field, random_node_field, random_residual_field};
use crate::error::{Error, Result};
use crate::flows::BasePath;
use crate::grid::{NormKind, ResidualField, TangentField};
use crate::problem::ProblemSetup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// The ambient linear estimate for D^ε and for its adjoint.
    Ambient,
    /// Lines two and three of the key estimate on im (D^ε)*.
    Key,
    /// Comparison of (D⁰)*π_ε with π_ε(D^ε)*.
    Difference,
    /// The four component bounds for π_ε with their explicit constants.
    Components,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 4] = [Self::Ambient, Self::Key, Self::Difference, Self::Components];
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub inequality_id: String,
    pub eps_values: Vec<f64>,
    pub max_ratio_per_eps: Vec<f64>,
    pub fields_tested: usize,
    /// Known constant of the inequality, if it has one.
    pub bound: Option<f64>,
    pub uniformly_bounded: bool,
}

/// Largest-growth rule for a sweep ordered by decreasing ε: the ratio at the
/// smallest ε may not exceed 1.5 times the median ratio.
pub fn no_growth(ratios: &[f64]) -> bool {
    if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite()) {
        return false;
    }
    let mut s = ratios.to_vec();
    s.sort_by(f64::total_cmp);
    let median = if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
    };
    ratios[ratios.len() - 1] <= 1.5 * median
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProbeOptions {
    pub n_random: usize,
    pub pi: PiParams,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            n_random: 20,
            pi: PiParams::default(),
            seed: 0,
        }
    }
}

/// L² norm of the nodal values a_j with trapezoid weights.
fn node_l2(path: &BasePath, a: impl Iterator<Item = f64>) -> f64 {
    a.enumerate().map(|(j, v)| path.grid.trap(j) * v * v).sum::<f64>().sqrt()
}

fn half_l2(path: &BasePath, a: impl Iterator<Item = f64>) -> f64 {
    (path.grid.ds() * a.map(|v| v * v).sum::<f64>()).sqrt()
}

fn dh_nodes(path: &BasePath, x: &[DVector<f64>]) -> f64 {
    node_l2(path, path.frames.iter().zip(x).map(|(f, x)| f.grad_h.dot(x)))
}

fn residual(op: &LinearOperator, z: &DVector<f64>) -> ResidualField {
    ResidualField::from_flat(op.grid, op.m, &op.apply(z))
}

fn field(op: &LinearOperator, z: &DVector<f64>) -> TangentField {
    TangentField::from_flat(op.grid, op.m, z)
}

/// Runs one probe over an ε sweep (processed concurrently, one seeded
/// generator per ε).
pub fn estimate_probe(
    setup: &ProblemSetup,
    path: &BasePath,
    eps_values: &[f64],
    which: ProbeKind,
    opts: &ProbeOptions,
) -> Result<Vec<ProbeReport>> {
    if eps_values.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("probe eps values must be positive".into()));
    }
    let geo = PathGeometry::new(path)?;
    let d0 = assemble_d0_with(setup, path, &geo)?;
    let d0_adj = d0.adjoint();
    let per_eps: Vec<Vec<f64>> = eps_values
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1000 * i as u64));
            let ctx = Ctx {
                path,
                geo: &geo,
                eps,
                opts,
            };
            match which {
                ProbeKind::Ambient => ctx.ambient(setup, &mut rng),
                ProbeKind::Key => ctx.key(setup, &mut rng),
                ProbeKind::Difference => ctx.difference(setup, &d0_adj, &mut rng),
                ProbeKind::Components => Ok(ctx.components(&mut rng)),
            }
        })
        .collect::<Result<_>>()?;
    let (ids, bounds): (&[&str], &[Option<f64>]) = match which {
        ProbeKind::Ambient => (&["ambient", "ambient_adjoint"], &[None, None]),
        ProbeKind::Key => (&["key_line2", "key_line3"], &[None, None]),
        ProbeKind::Difference => (&["difference"], &[None]),
        ProbeKind::Components => (
            &["components_line1", "components_line2", "components_line3", "components_line4"],
            &[Some(1.0), Some(1.0), Some(1.0), Some(1.0)],
        ),
    };
    Ok(ids
        .iter()
        .zip(bounds)
        .enumerate()
        .map(|(k, (id, bound))| {
            let ratios: Vec<f64> = per_eps.iter().map(|r| r[k]).collect();
            let within = bound.is_none_or(|b| ratios.iter().all(|r| *r <= b * (1.0 + 1e-12)));
            ProbeReport {
                inequality_id: id.to_string(),
                eps_values: eps_values.to_vec(),
                uniformly_bounded: within && no_growth(&ratios),
                max_ratio_per_eps: ratios,
                fields_tested: opts.n_random,
                bound: *bound,
            }
        })
        .collect())
}

struct Ctx<'a> {
    path: &'a BasePath,
    geo: &'a PathGeometry,
    eps: f64,
    opts: &'a ProbeOptions,
}

impl Ctx<'_> {
    /// ε⁻¹‖dH X‖ + ‖ℓ‖ + ‖X'‖ + ε‖ℓ'‖ against ‖D^ε Z‖ + ‖X‖, and the same for
    /// (D^ε)* acting on (V, h).
    fn ambient(&self, setup: &ProblemSetup, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (eps, path) = (self.eps, self.path);
        let d = assemble_deps(setup, path, eps, Variant::Operator)?;
        let dstar = d.adjoint();
        let mut worst = [0.0f64; 2];
        for _ in 0..self.opts.n_random {
            let z = d.project(&random_ambient_field(path.grid, path.dim(), rng).to_flat());
            let zf = field(&d, &z);
            let lhs = dh_nodes(path, &zf.x) / eps
                + zf.ell_l2_sq().sqrt()
                + zf.x_deriv_l2_sq().sqrt()
                + eps * zf.ell_deriv_l2_sq().sqrt();
            let rhs = residual(&d, &z).norm(eps) + zf.x_l2_sq().sqrt();
            worst[0] = worst[0].max(lhs / rhs);

            let y = random_residual_field(path.grid, path.dim(), rng);
            let out = field(&d, &dstar.apply(&y.to_flat()));
            let ds = path.grid.ds();
            let dh = half_l2(path, y.v.iter().zip(&self.geo.half_grad_h).map(|(v, g)| g.dot(v)));
            let dv = (y.v.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum::<f64>() / ds).sqrt();
            let dh_h = (y.h.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / ds).sqrt();
            let lhs = dh / eps + y.h_l2_sq().sqrt() + dv + eps * dh_h;
            let rhs = out.eps_norm(eps, NormKind::N02) + y.v_l2_sq().sqrt();
            worst[1] = worst[1].max(lhs / rhs);
        }
        Ok(worst.to_vec())
    }

    /// Key estimate on Z* = (D^ε)*Y for smooth Y.
    fn key(&self, setup: &ProblemSetup, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (eps, path) = (self.eps, self.path);
        let d = assemble_deps(setup, path, eps, Variant::Operator)?;
        let dstar = d.adjoint();
        let mut worst = [0.0f64; 2];
        for _ in 0..self.opts.n_random {
            let y = random_residual_field(path.grid, path.dim(), rng);
            let z = dstar.apply(&y.to_flat());
            let zf = field(&d, &z);
            let dz = residual(&d, &z).norm(eps);
            let line2 = eps.sqrt() * zf.eps_norm(eps, NormKind::N0Inf) + zf.eps_norm(eps, NormKind::N12);
            worst[0] = worst[0].max(line2 / dz);
            let line3 = dh_nodes(path, &zf.x)
                + eps * zf.ell_l2_sq().sqrt()
                + eps * zf.x_deriv_l2_sq().sqrt()
                + eps * eps * zf.ell_deriv_l2_sq().sqrt();
            worst[1] = worst[1].max(line3 / (eps * dz));
        }
        Ok(worst.to_vec())
    }

    /// ‖(D⁰)*π_ε Y − π_ε(D^ε)*Y‖ against ε(ε⁻¹‖dH V‖ + ε^{α−1}‖tan V‖ + ε‖h‖)
    /// for codomain fields Y = (V, h).
    fn difference(&self, setup: &ProblemSetup, d0_adj: &LinearOperator, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (eps, path, geo) = (self.eps, self.path, self.geo);
        let alpha = self.opts.pi.alpha;
        let d = assemble_deps(setup, path, eps, Variant::Operator)?;
        let dstar = d.adjoint();
        let n = path.grid.n;
        let mut worst = 0.0f64;
        for _ in 0..self.opts.n_random {
            let y = random_residual_field(path.grid, path.dim(), rng);
            let mut pi_half = Vec::with_capacity(n);
            let mut tan_sq = 0.0;
            for j in 0..n {
                let u = geo.half_grad_h[j].normalize();
                let h = 0.5 * (y.h[j] + y.h[j + 1]);
                pi_half.push(pi_point(&u, &geo.half_grad_chi[j], &y.v[j], h, eps, self.opts.pi));
                tan_sq += (&y.v[j] - &u * u.dot(&y.v[j])).norm_squared();
            }
            let a = geo.node_vectors(&d0_adj.apply(&geo.half_coords(&pi_half)));
            let b = pi_eps(path, &field(&d, &dstar.apply(&y.to_flat())), eps, self.opts.pi);
            let diff = node_l2(path, a.iter().zip(&b.x).map(|(a, b)| (a - b).norm()));
            let ds = path.grid.ds();
            let dh = half_l2(path, y.v.iter().zip(&geo.half_grad_h).map(|(v, g)| g.dot(v)));
            let rhs = eps * (dh / eps + eps.powf(alpha - 1.0) * (ds * tan_sq).sqrt() + eps * y.h_l2_sq().sqrt());
            worst = worst.max(diff / rhs);
        }
        Ok(vec![worst])
    }

    /// The four component bounds of π_ε with constants m_H = min |∇H| and
    /// μ∞ = max μ along the path; every ratio is at most one.
    fn components(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (eps, path) = (self.eps, self.path);
        let pi = self.opts.pi;
        let m_h = path.frames.iter().map(|f| f.grad_h.norm()).fold(f64::INFINITY, f64::min);
        let mu_inf = path.frames.iter().map(|f| f.mu).fold(0.0, f64::max);
        let mut worst = [0.0f64; 4];
        for _ in 0..self.opts.n_random {
            let z = random_node_field(path.grid, path.dim(), rng);
            let p = pi_eps(path, &z, eps, pi);
            let ip = embed_tangent(path, &p);
            let dh = dh_nodes(path, &z.x);
            let ptan = node_l2(
                path,
                path.frames.iter().zip(&z.x).map(|(f, x)| {
                    if f.mu == 0.0 {
                        0.0
                    } else {
                        f.grad_chi.dot(&f.tan(x)) / f.mu
                    }
                }),
            );
            let ell = z.ell_l2_sq().sqrt();
            let diff = z.sub(&ip);
            let l1 = diff.x_l2_sq().sqrt();
            let r1 = dh / m_h + eps.powf(pi.alpha) * mu_inf * mu_inf * ptan + eps * eps * mu_inf * ell;
            let l2 = diff.ell_l2_sq().sqrt();
            let r2 = mu_inf * ptan + 2.0 * ell;
            let l3 = diff.eps_norm(eps, NormKind::N02);
            let r3 = dh / m_h + 2.0 * mu_inf * mu_inf * eps * ptan + 4.0 * mu_inf * eps * ell;
            let l4 = ip.eps_norm(eps, NormKind::N02);
            let r4 = 2.0 * z.eps_norm(eps, NormKind::N02);
            // Line four chains ‖π_εZ‖ ≤ ‖I_qπ_εZ‖ ≤ 2‖Z‖; both ratios count.
            let l0 = p.x_l2_sq().sqrt() / l4;
            let ratios = [l1 / r1, l2 / r2, l3 / r3, (l4 / r4).max(l0)];
            for (w, r) in worst.iter_mut().zip(ratios) {
                *w = w.max(r);
            }
        }
        worst.to_vec()
    }
}
