use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::flows::BasePath;
use crate::grid::{Placement, Tangency, TangentField};
use crate::hypersurface::SurfaceFrame;

/// Exponents of the projection: α scales the rank-one shift, β the weight of
/// ℓ along ∇χ. α = β = 2 is the orthogonal projection onto im I_q.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PiParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PiParams {
    fn default() -> Self {
        Self { alpha: 2.0, beta: 2.0 }
    }
}

/// (1 + ε^α μ² P)⁻¹(tan X + ε^β ℓ ∇χ) at one point, with normal `u` and
/// surface gradient `grad_chi`; P is the projection onto ∇χ and vanishes
/// where μ = 0.
pub fn pi_point(
    u: &DVector<f64>,
    grad_chi: &DVector<f64>,
    x: &DVector<f64>,
    ell: f64,
    eps: f64,
    p: PiParams,
) -> DVector<f64> {
    let mut v = x - u * u.dot(x);
    v.axpy(eps.powf(p.beta) * ell, grad_chi, 1.0);
    let mu2 = grad_chi.norm_squared();
    if mu2 == 0.0 {
        return v;
    }
    let c = eps.powf(p.alpha) * mu2;
    let pv = grad_chi.dot(&v) / mu2;
    v.axpy(-pv * c / (1.0 + c), grad_chi, 1.0);
    v
}

/// π_ε Z along a base path. Half-node ℓ is first moved to the nodes. The
/// result is Σ-tangent with ℓ = 0.
pub fn pi_eps(path: &BasePath, z: &TangentField, eps: f64, p: PiParams) -> TangentField {
    let z = z.to_nodes();
    let mut out = TangentField::zeros(path.grid, path.dim(), Placement::Nodes);
    for (j, fr) in path.frames.iter().enumerate() {
        out.x[j] = pi_point(&fr.normal_u, &fr.grad_chi, &z.x[j], z.ell[j], eps, p);
    }
    out.tangency = Tangency::SigmaTangent;
    out
}

/// I_q ξ = (ξ, dχ ξ) at the nodes.
pub fn embed_tangent(path: &BasePath, xi: &TangentField) -> TangentField {
    let mut out = xi.clone();
    out.placement = Placement::Nodes;
    out.ell = path.frames.iter().zip(&xi.x).map(|(f, x)| f.dchi(x)).collect();
    out
}

/// Largest measured norms of B⁻¹ = (1 + ε^α μ² P)⁻¹ and of the three
/// refinements B⁻¹P, ε^{α/2}μB⁻¹P, ε^α μ²B⁻¹P acting on tangent vectors.
/// Bounds: 1, 1, ½, 1.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BInverseReport {
    pub b_inv: f64,
    pub b_inv_p: f64,
    pub b_inv_sqrt_shift: f64,
    pub b_inv_shift: f64,
    /// Largest ratio ‖B⁻¹ξ‖/‖ξ‖ over random tangent fields (L² along the path).
    pub random_field_ratio: f64,
    pub fields_tested: usize,
}

fn apply_b_inv(fr: &SurfaceFrame, v: &DVector<f64>, eps: f64, alpha: f64) -> DVector<f64> {
    let mu2 = fr.mu * fr.mu;
    if mu2 == 0.0 {
        return v.clone();
    }
    let c = eps.powf(alpha) * mu2;
    v - &fr.grad_chi * (fr.grad_chi.dot(v) / mu2 * c / (1.0 + c))
}

fn apply_p(fr: &SurfaceFrame, v: &DVector<f64>) -> DVector<f64> {
    if fr.mu == 0.0 {
        return DVector::zeros(v.len());
    }
    &fr.grad_chi * (fr.grad_chi.dot(v) / (fr.mu * fr.mu))
}

/// Measures the operator norms per node from the matrices in tangent-frame
/// coordinates, then checks B⁻¹ on `n_random` random tangent fields.
pub fn b_inverse_norms<R: Rng + ?Sized>(path: &BasePath, eps: f64, alpha: f64, n_random: usize, rng: &mut R) -> BInverseReport {
    let mut rep = BInverseReport::default();
    let sa = eps.powf(alpha / 2.0);
    for fr in &path.frames {
        let e = &fr.frame;
        let k = e.ncols();
        let col = |f: &dyn Fn(&DVector<f64>) -> DVector<f64>| {
            let mut m = nalgebra::DMatrix::zeros(k, k);
            for c in 0..k {
                let v = e.column(c).into_owned();
                m.set_column(c, &e.tr_mul(&f(&v)));
            }
            m.singular_values().max()
        };
        let mu = fr.mu;
        rep.b_inv = rep.b_inv.max(col(&|v| apply_b_inv(fr, v, eps, alpha)));
        rep.b_inv_p = rep.b_inv_p.max(col(&|v| apply_b_inv(fr, &apply_p(fr, v), eps, alpha)));
        rep.b_inv_sqrt_shift = rep
            .b_inv_sqrt_shift
            .max(col(&|v| apply_b_inv(fr, &apply_p(fr, v), eps, alpha) * (sa * mu)));
        rep.b_inv_shift = rep
            .b_inv_shift
            .max(col(&|v| apply_b_inv(fr, &apply_p(fr, v), eps, alpha) * (sa * sa * mu * mu)));
    }
    for _ in 0..n_random {
        let xi = super::random::random_tangent_field(path, rng);
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, fr) in path.frames.iter().enumerate() {
            let w = path.grid.trap(j);
            num += w * apply_b_inv(fr, &xi.x[j], eps, alpha).norm_squared();
            den += w * xi.x[j].norm_squared();
        }
        rep.random_field_ratio = rep.random_field_ratio.max((num / den).sqrt());
    }
    rep.fields_tested = n_random;
    rep
}
