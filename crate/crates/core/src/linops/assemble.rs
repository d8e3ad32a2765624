use nalgebra::{DMatrix, DVector};

use super::operator::{BoundaryBlock, LinearOperator, OperatorKind, Variant};
use crate::error::{Error, Result};
use crate::flows::{linearization, AmbientPath, BaseBoundary, BasePath};
use crate::grid::{Placement, ResidualField, Tangency, TangentField};
use crate::hypersurface::tangent_frame;
use crate::linalg::RowBuilder;
use crate::problem::ProblemSetup;

/// Frames and multipliers of the box scheme along a base path.
#[derive(Clone, Debug)]
pub struct PathGeometry {
    /// Tangent frame E_j at every node.
    pub node_frames: Vec<DMatrix<f64>>,
    /// Frame E_{j+½} orthogonal to ∇H_j + ∇H_{j+1}.
    pub half_frames: Vec<DMatrix<f64>>,
    /// Discrete multipliers σ_{j+½}.
    pub sigma: Vec<f64>,
    /// (∇H_j + ∇H_{j+1})/2.
    pub half_grad_h: Vec<DVector<f64>>,
    /// Averaged surface gradient of χ, projected onto the half-node frame.
    pub half_grad_chi: Vec<DVector<f64>>,
}

impl PathGeometry {
    pub fn new(path: &BasePath) -> Result<Self> {
        let fr = &path.frames;
        let n = path.grid.n;
        let mut half_frames = Vec::with_capacity(n);
        let mut half_grad_h = Vec::with_capacity(n);
        let mut half_grad_chi = Vec::with_capacity(n);
        for j in 0..n {
            let gh = (&fr[j].grad_h + &fr[j + 1].grad_h) * 0.5;
            let e = tangent_frame(&gh.normalize()).ok_or(Error::FrameDegenerate(j))?;
            let gc = (&fr[j].grad_chi + &fr[j + 1].grad_chi) * 0.5;
            half_grad_chi.push(&e * e.tr_mul(&gc));
            half_frames.push(e);
            half_grad_h.push(gh);
        }
        Ok(Self {
            node_frames: fr.iter().map(|f| f.frame.clone()).collect(),
            half_frames,
            sigma: path.multipliers()?,
            half_grad_h,
            half_grad_chi,
        })
    }

    fn k(&self) -> usize {
        self.node_frames[0].ncols()
    }

    /// Frame coordinates of node vectors, flattened.
    pub fn node_coords(&self, x: &[DVector<f64>]) -> DVector<f64> {
        flatten(x.iter().zip(&self.node_frames).map(|(v, e)| e.tr_mul(v)), self.k())
    }

    pub fn node_vectors(&self, c: &DVector<f64>) -> Vec<DVector<f64>> {
        let k = self.k();
        self.node_frames.iter().enumerate().map(|(j, e)| e * c.rows(j * k, k)).collect()
    }

    pub fn half_coords(&self, x: &[DVector<f64>]) -> DVector<f64> {
        flatten(x.iter().zip(&self.half_frames).map(|(v, e)| e.tr_mul(v)), self.k())
    }

    pub fn half_vectors(&self, c: &DVector<f64>) -> Vec<DVector<f64>> {
        let k = self.k();
        self.half_frames.iter().enumerate().map(|(j, e)| e * c.rows(j * k, k)).collect()
    }

    /// Σ-tangent node field with the given frame coordinates.
    pub fn tangent_field(&self, path: &BasePath, c: &DVector<f64>) -> TangentField {
        let mut z = TangentField::zeros(path.grid, path.dim(), Placement::Nodes);
        z.x = self.node_vectors(c);
        z.tangency = Tangency::SigmaTangent;
        z
    }
}

fn flatten(parts: impl Iterator<Item = DVector<f64>>, k: usize) -> DVector<f64> {
    let parts: Vec<DVector<f64>> = parts.collect();
    let mut out = DVector::zeros(parts.len() * k);
    for (j, p) in parts.iter().enumerate() {
        out.rows_mut(j * k, k).copy_from(p);
    }
    out
}

/// D⁰_q in tangent-frame coordinates: node coordinates c_j ↦ half-node
/// coordinates of (E_{j+1}c_{j+1} − E_j c_j)/ds + ½(K_j E_j c_j + K_{j+1}
/// E_{j+1}c_{j+1}) with K = HessF + σ_{j+½}HessH. This is the derivative of
/// the discrete base section along Σ at a zero.
pub fn assemble_d0(setup: &ProblemSetup, path: &BasePath, variant: Variant) -> Result<LinearOperator> {
    let geo = PathGeometry::new(path)?;
    let op = assemble_d0_with(setup, path, &geo)?;
    Ok(match variant {
        Variant::Operator => op,
        Variant::Adjoint => op.adjoint(),
    })
}

pub fn assemble_d0_with(setup: &ProblemSetup, path: &BasePath, geo: &PathGeometry) -> Result<LinearOperator> {
    let grid = path.grid;
    let (n, ds) = (grid.n, grid.ds());
    let m = path.dim();
    let k = m - 1;
    let fr = &path.frames;
    let id = DMatrix::<f64>::identity(m, m) / ds;
    let mut b = RowBuilder::new((n + 1) * k);
    for j in 0..n {
        let e = &geo.half_frames[j];
        let s = geo.sigma[j];
        let ka = fr[j].multiplier_hessian(s) * 0.5 - &id;
        let kb = fr[j + 1].multiplier_hessian(s) * 0.5 + &id;
        let ba = e.tr_mul(&(ka * &geo.node_frames[j]));
        let bb = e.tr_mul(&(kb * &geo.node_frames[j + 1]));
        for r in 0..k {
            for c in 0..k {
                b.push(j * k + c, ba[(r, c)]);
                b.push((j + 1) * k + c, bb[(r, c)]);
            }
            b.finish_row();
        }
    }
    let bc = BaseBoundary::new(setup, &path.x_minus, &path.x_plus)?;
    let boundary = [
        BoundaryBlock {
            offset: 0,
            rows: &bc.left * &geo.node_frames[0],
        },
        BoundaryBlock {
            offset: n * k,
            rows: &bc.right * &geo.node_frames[n],
        },
    ];
    Ok(LinearOperator {
        kind: OperatorKind::D0,
        eps: None,
        grid,
        m,
        matrix: b.build(),
        weight_domain: (0..=n).flat_map(|j| std::iter::repeat_n(grid.trap(j), k)).collect(),
        weight_codomain: vec![ds; n * k],
        boundary,
    })
}

/// D^ε along the canonical embedding (q, σ) of a base path.
pub fn assemble_deps(setup: &ProblemSetup, path: &BasePath, eps: f64, variant: Variant) -> Result<LinearOperator> {
    let z = AmbientPath::embedded(path, path.multipliers()?)?;
    assemble_deps_at(setup, &z, eps, variant)
}

/// D^ε at (u, τ): the derivative of the staggered ε-section,
/// V_{j+½} = ΔX/ds + ½(K_j X_j + K_{j+1}X_{j+1}) + ℓ_{j+½}·avg∇H with
/// K = HessF + τ_{j+½}HessH, and h_j = Δℓ/ds + ε⁻²⟨∇H(u_j), X_j⟩. The domain
/// is cut out by projection conditions at ±T: no component along the stable
/// directions of the ε-Hessian at (x⁻, χ(x⁻)), none along the unstable ones
/// at (x⁺, χ(x⁺)).
pub fn assemble_deps_at(setup: &ProblemSetup, z: &AmbientPath, eps: f64, variant: Variant) -> Result<LinearOperator> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps = {eps} must be positive")));
    }
    let grid = z.grid;
    let (n, ds) = (grid.n, grid.ds());
    let m = z.u[0].len();
    let w = m + 1;
    let mut gh = Vec::with_capacity(n + 1);
    let mut hf = Vec::with_capacity(n + 1);
    let mut hh = Vec::with_capacity(n + 1);
    for u in &z.u {
        let p = u.as_slice();
        gh.push(setup.h.grad(p)?);
        hf.push(setup.f.hess(p)?);
        hh.push(setup.h.hess(p)?);
    }
    let id = DMatrix::<f64>::identity(m, m) / ds;
    let ncols = n * w + m;
    let mut b = RowBuilder::new(ncols);
    let e2 = 1.0 / (eps * eps);
    for j in 0..n {
        let t = z.tau[j];
        let ka = (&hf[j] + &hh[j] * t) * 0.5 - &id;
        let kb = (&hf[j + 1] + &hh[j + 1] * t) * 0.5 + &id;
        let avg = (&gh[j] + &gh[j + 1]) * 0.5;
        for r in 0..m {
            for c in 0..m {
                b.push(j * w + c, ka[(r, c)]);
                b.push((j + 1) * w + c, kb[(r, c)]);
            }
            b.push(j * w + m, avg[r]);
            b.finish_row();
        }
        if j + 1 < n {
            // h at node j + 1.
            b.push(j * w + m, -1.0 / ds);
            b.push((j + 1) * w + m, 1.0 / ds);
            for c in 0..m {
                b.push((j + 1) * w + c, e2 * gh[j + 1][c]);
            }
            b.finish_row();
        }
    }
    let boundary = eps_boundary(setup, z, eps)?;
    let mut weight_domain = Vec::with_capacity(ncols);
    for j in 0..=n {
        weight_domain.extend(std::iter::repeat_n(grid.trap(j), m));
        if j < n {
            weight_domain.push(eps * eps * ds);
        }
    }
    let mut weight_codomain = Vec::with_capacity(n * w - 1);
    for j in 0..n {
        weight_codomain.extend(std::iter::repeat_n(ds, m));
        if j + 1 < n {
            weight_codomain.push(eps * eps * ds);
        }
    }
    let op = LinearOperator {
        kind: OperatorKind::Deps,
        eps: Some(eps),
        grid,
        m,
        matrix: b.build(),
        weight_domain,
        weight_codomain,
        boundary,
    };
    Ok(match variant {
        Variant::Operator => op,
        Variant::Adjoint => op.adjoint(),
    })
}

/// Projection conditions on (X_0, ℓ_½) and (ℓ_{N−½}, X_N).
fn eps_boundary(setup: &ProblemSetup, z: &AmbientPath, eps: f64) -> Result<[BoundaryBlock; 2]> {
    let m = z.u[0].len();
    let n = z.grid.n;
    let pick = |lin: Vec<(f64, DVector<f64>, DVector<f64>)>, positive: bool, tau_first: bool| {
        let rows: Vec<&DVector<f64>> = lin
            .iter()
            .filter(|e| if positive { e.0 > 0.0 } else { e.0 < 0.0 })
            .map(|e| &e.2)
            .collect();
        DMatrix::from_fn(rows.len(), m + 1, |r, c| {
            let idx = if tau_first {
                if c == 0 {
                    m
                } else {
                    c - 1
                }
            } else {
                c
            };
            rows[r][idx]
        })
    };
    Ok([
        BoundaryBlock {
            offset: 0,
            rows: pick(linearization(setup, &z.x_minus, eps)?, true, false),
        },
        BoundaryBlock {
            offset: n * (m + 1) - 1,
            rows: pick(linearization(setup, &z.x_plus, eps)?, false, true),
        },
    ])
}

/// Discretization of the formal adjoint (D^ε)*(V, h) = (−V' + KV + h∇H,
/// −h' + ε⁻²⟨∇H, V⟩) from its continuum formula; X is filled at interior
/// nodes only.
pub fn deps_adjoint_continuum(setup: &ProblemSetup, z: &AmbientPath, eps: f64, r: &ResidualField) -> Result<TangentField> {
    let grid = z.grid;
    let (n, ds) = (grid.n, grid.ds());
    let m = z.u[0].len();
    let tau = z.tau_nodes();
    let mut out = TangentField::zeros(grid, m, Placement::HalfNodes);
    for j in 1..n {
        let p = z.u[j].as_slice();
        let k = setup.f.hess(p)? + setup.h.hess(p)? * tau[j];
        let avg = (&r.v[j - 1] + &r.v[j]) * 0.5;
        out.x[j] = -(&r.v[j] - &r.v[j - 1]) / ds + k * avg + setup.h.grad(p)? * r.h[j];
    }
    for j in 0..n {
        let gh = (setup.h.grad(z.u[j].as_slice())? + setup.h.grad(z.u[j + 1].as_slice())?) * 0.5;
        out.ell[j] = -(r.h[j + 1] - r.h[j]) / ds + gh.dot(&r.v[j]) / (eps * eps);
    }
    Ok(out)
}

/// The formal adjoint (D⁰_q)*η = −η' + ∇_η(∇F + χ∇H) + 2 II(η, ∂_s q) for a
/// half-node tangent field η, evaluated as an ambient vector at the interior
/// nodes (ends are zero). Its normal part vanishes up to discretization
/// error.
pub fn d0_adjoint_continuum(path: &BasePath, eta: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let grid = path.grid;
    let (n, ds) = (grid.n, grid.ds());
    let v = path.velocity();
    let mut out = vec![DVector::zeros(path.dim()); n + 1];
    for j in 1..n {
        let fr = &path.frames[j];
        let e = fr.tan(&((&eta[j - 1] + &eta[j]) * 0.5));
        let de = (&eta[j] - &eta[j - 1]) / ds;
        let n2 = fr.grad_h.norm_squared();
        let ii = &fr.grad_h * (-e.dot(&(&fr.hess_h * &v[j])) / n2);
        out[j] = -de + fr.multiplier_hessian(fr.chi) * &e + &fr.grad_h * fr.dchi(&e) + ii * 2.0;
    }
    out
}

/// Zeroth-order part of D^ε at the nodes: (X, ℓ) ↦ (K X + ℓ∇H, ε⁻²⟨∇H, X⟩)
/// with K = HessF + τ HessH. It is symmetric in the (0,2,ε) inner product.
pub fn eps_hessian_apply(setup: &ProblemSetup, z: &AmbientPath, eps: f64, field: &TangentField) -> Result<TangentField> {
    let field = field.to_nodes();
    let tau = z.tau_nodes();
    let mut out = field.clone();
    for j in 0..=z.grid.n {
        let p = z.u[j].as_slice();
        let gh = setup.h.grad(p)?;
        let k = setup.f.hess(p)? + setup.h.hess(p)? * tau[j];
        out.x[j] = k * &field.x[j] + &gh * field.ell[j];
        out.ell[j] = gh.dot(&field.x[j]) / (eps * eps);
    }
    out.tangency = Tangency::Ambient;
    Ok(out)
}
