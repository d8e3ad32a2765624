use nalgebra::{DMatrix, DVector};

use super::{hermite, signed_eigenvectors, BasePath};
use crate::criticals::{frame_hessian, CriticalPoint};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hypersurface::{retract_to_sigma, tangent_frame, SurfaceFrame};
use crate::linalg::{MinNormSolver, RowBuilder, SparseMatrix};
use crate::problem::ProblemSetup;

#[derive(Clone, Debug)]
pub struct BaseFlowOptions {
    /// Initial displacement from x⁻ along the chosen unstable eigenvector.
    pub shoot_delta: f64,
    /// Which unstable eigenvector (ordered by increasing |eigenvalue|).
    pub branch: usize,
    /// Orientation of the eigenvector, ±1.
    pub sign: f64,
    pub max_time: f64,
    /// Converge the resampled path onto an exact zero of the discrete
    /// constrained box scheme.
    pub polish: bool,
}

impl Default for BaseFlowOptions {
    fn default() -> Self {
        Self {
            shoot_delta: 1e-5,
            branch: 0,
            sign: 1.0,
            max_time: 400.0,
            polish: true,
        }
    }
}

/// −(∇F + χ∇H)(q) with χ evaluated at q.
fn flow_field(setup: &ProblemSetup, q: &DVector<f64>) -> Result<DVector<f64>> {
    let p = q.as_slice();
    let gf = setup.f.grad(p)?;
    let gh = setup.h.grad(p)?;
    let chi = -gf.dot(&gh) / gh.norm_squared();
    Ok(-(gf + gh * chi))
}

pub fn integrate_base_flow(
    setup: &ProblemSetup,
    x_minus: &CriticalPoint,
    x_plus: &CriticalPoint,
    grid: TimeGrid,
    shoot_delta: f64,
) -> Result<BasePath> {
    let opts = BaseFlowOptions {
        shoot_delta,
        ..Default::default()
    };
    integrate_base_flow_with(setup, x_minus, x_plus, grid, &opts)
}

/// Shoots from x⁻ along an unstable direction with RK4 plus retraction,
/// anchors s = 0 at the mean critical level and resamples onto the grid.
pub fn integrate_base_flow_with(
    setup: &ProblemSetup,
    x_minus: &CriticalPoint,
    x_plus: &CriticalPoint,
    grid: TimeGrid,
    opts: &BaseFlowOptions,
) -> Result<BasePath> {
    if (&x_minus.x - &x_plus.x).norm() < 1e-9 {
        return Err(Error::NoConnection("start and end critical points coincide".into()));
    }
    if x_minus.index_f <= x_plus.index_f {
        return Err(Error::NoConnection(format!(
            "index difference {} - {} is not positive",
            x_minus.index_f, x_plus.index_f
        )));
    }
    let fr = SurfaceFrame::at(setup, &x_minus.x)?;
    let (unstable, _) = signed_eigenvectors(&frame_hessian(&fr));
    let Some((_, v)) = unstable.get(opts.branch.min(unstable.len().saturating_sub(1))) else {
        return Err(Error::NoConnection("x- has no unstable direction".into()));
    };
    let dir = (&fr.frame * v).normalize() * opts.sign;
    let delta = opts.shoot_delta;
    let mut q = retract_to_sigma(setup, &(&x_minus.x + dir * delta))?.0;

    let h = 0.5 * grid.ds();
    let mut ts = vec![0.0];
    let mut qs = vec![q.clone()];
    let mut ds_ = vec![flow_field(setup, &q)?];
    let mut t = 0.0;
    while (&q - &x_plus.x).norm() >= delta {
        let k1 = ds_.last().unwrap().clone();
        let k2 = flow_field(setup, &(&q + &k1 * (0.5 * h)))?;
        let k3 = flow_field(setup, &(&q + &k2 * (0.5 * h)))?;
        let k4 = flow_field(setup, &(&q + &k3 * h))?;
        let p = &q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        q = retract_to_sigma(setup, &p)
            .map_err(|e| Error::NoConnection(format!("trajectory left the band: {e}")))?
            .0;
        t += h;
        if !setup.in_box(&q) {
            return Err(Error::NoConnection("trajectory left the domain box".into()));
        }
        let d = flow_field(setup, &q)?;
        if d.norm() < 1e-10 && (&q - &x_plus.x).norm() > 1e-3 {
            return Err(Error::NoConnection("trajectory stalled away from x+".into()));
        }
        if t > opts.max_time {
            return Err(Error::NoConnection(format!("x+ not reached within time {}", opts.max_time)));
        }
        ts.push(t);
        qs.push(q.clone());
        ds_.push(d);
    }

    let f_mid = 0.5 * (x_minus.f_value + x_plus.f_value);
    let interp = |t: f64| -> DVector<f64> {
        let k = ((t / h).floor() as usize).min(ts.len() - 2);
        hermite(&qs[k], &ds_[k], &qs[k + 1], &ds_[k + 1], h, t - ts[k])
    };
    let fs: Vec<f64> = qs
        .iter()
        .map(|q| setup.f.eval(q.as_slice()))
        .collect::<Result<_>>()?;
    let k = fs
        .windows(2)
        .position(|w| w[0] >= f_mid && w[1] < f_mid)
        .ok_or_else(|| Error::NoConnection("mean level never crossed".into()))?;
    let (mut lo, mut hi) = (ts[k], ts[k + 1]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if setup.f.eval(interp(mid).as_slice())? >= f_mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let t_end = *ts.last().unwrap();
    let points = (0..=grid.n)
        .map(|j| {
            let t = t_star + grid.node(j);
            if t <= 0.0 {
                Ok(x_minus.x.clone())
            } else if t >= t_end {
                Ok(x_plus.x.clone())
            } else {
                Ok(retract_to_sigma(setup, &interp(t))?.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let path = BasePath::new(setup, grid, points, x_minus.clone(), x_plus.clone())?;
    if opts.polish {
        polish_base_path(setup, path)
    } else {
        Ok(path)
    }
}

/// Boundary conditions of the discrete base problem: no stable component at
/// x⁻, no unstable component at x⁺ (rows act on ambient displacements).
pub(crate) struct BaseBoundary {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl BaseBoundary {
    pub fn new(setup: &ProblemSetup, x_minus: &CriticalPoint, x_plus: &CriticalPoint) -> Result<Self> {
        let rows = |x: &CriticalPoint, want_positive: bool| -> Result<DMatrix<f64>> {
            let fr = SurfaceFrame::at(setup, &x.x)?;
            let (neg, pos) = signed_eigenvectors(&frame_hessian(&fr));
            let pick = if want_positive { pos } else { neg };
            let m = setup.dim();
            let mut out = DMatrix::zeros(pick.len(), m);
            for (r, (_, v)) in pick.iter().enumerate() {
                out.row_mut(r).copy_from(&(&fr.frame * v).transpose());
            }
            Ok(out)
        };
        Ok(Self {
            left: rows(x_minus, true)?,
            right: rows(x_plus, false)?,
        })
    }
}

/// Discrete multiplier σ_{j+½} = −⟨w, S⟩/|S|²·2 of the box scheme, where
/// w = Δq/ds + avg ∇F and S = ∇H_j + ∇H_{j+1}. On a zero of the scheme,
/// w + σ·avg∇H = 0.
pub(crate) fn interval_data(
    fa: &SurfaceFrame,
    fb: &SurfaceFrame,
    ds: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let s = &fa.grad_h + &fb.grad_h;
    let w = (&fb.q - &fa.q) / ds + (&fa.grad_f_ambient + &fb.grad_f_ambient) * 0.5;
    let sigma = -2.0 * w.dot(&s) / s.norm_squared();
    let e = tangent_frame(&s.normalize()).ok_or(Error::FrameDegenerate(0))?;
    Ok((w, e, sigma))
}

/// Residual and Jacobian of the discrete constrained base problem in frame
/// coordinates. Row order: left boundary, intervals before the middle node,
/// phase condition, remaining intervals, right boundary.
pub(crate) fn base_system(
    path: &BasePath,
    bc: &BaseBoundary,
    f_mid: f64,
    f_at_mid: f64,
) -> Result<(Vec<f64>, SparseMatrix)> {
    let grid = path.grid;
    let (n, ds) = (grid.n, grid.ds());
    let m = path.dim();
    let k = m - 1;
    let mut res = Vec::new();
    let mut jac = RowBuilder::new((n + 1) * k);
    let fr = &path.frames;

    let push_bc = |rows: &DMatrix<f64>, node: usize, x: &DVector<f64>, res: &mut Vec<f64>, jac: &mut RowBuilder<f64>| {
        let d = &path.points[node] - x;
        let jb = rows * &fr[node].frame;
        for r in 0..rows.nrows() {
            res.push(rows.row(r).transpose().dot(&d));
            for c in 0..k {
                jac.push(node * k + c, jb[(r, c)]);
            }
            jac.finish_row();
        }
    };
    push_bc(&bc.left, 0, &path.x_minus.x, &mut res, &mut jac);
    for j in 0..n {
        if j == grid.mid() {
            res.push(f_at_mid - f_mid);
            let g = fr[j].frame.tr_mul(&fr[j].grad_f_ambient);
            for c in 0..k {
                jac.push(j * k + c, g[c]);
            }
            jac.finish_row();
        }
        let (w, e, sigma) = interval_data(&fr[j], &fr[j + 1], ds)?;
        let r = e.tr_mul(&w);
        let ka = &fr[j].hess_f + &fr[j].hess_h * sigma;
        let kb = &fr[j + 1].hess_f + &fr[j + 1].hess_h * sigma;
        let id = DMatrix::<f64>::identity(m, m) / ds;
        let ba = e.tr_mul(&((ka * 0.5 - &id) * &fr[j].frame));
        let bb = e.tr_mul(&((kb * 0.5 + &id) * &fr[j + 1].frame));
        for row in 0..k {
            res.push(r[row]);
            for c in 0..k {
                jac.push(j * k + c, ba[(row, c)]);
                jac.push((j + 1) * k + c, bb[(row, c)]);
            }
            jac.finish_row();
        }
    }
    push_bc(&bc.right, n, &path.x_plus.x, &mut res, &mut jac);
    Ok((res, jac.build()))
}

/// Gauss–Newton (minimum-norm steps) onto an exact zero of the discrete
/// constrained box scheme, keeping f(q(0)) at the mean critical level.
pub fn polish_base_path(setup: &ProblemSetup, mut path: BasePath) -> Result<BasePath> {
    let bc = BaseBoundary::new(setup, &path.x_minus, &path.x_plus)?;
    let f_mid = 0.5 * (path.x_minus.f_value + path.x_plus.f_value);
    let k = path.dim() - 1;
    let mut last = f64::INFINITY;
    for _ in 0..40 {
        let fm = setup.f.eval(path.points[path.grid.mid()].as_slice())?;
        let (res, jac) = base_system(&path, &bc, f_mid, fm)?;
        let r = res.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if r <= 1e-12 || (r <= 1e-10 && r >= 0.5 * last) {
            return Ok(path);
        }
        last = r;
        let ncols = jac.ncols();
        let solver = MinNormSolver::new(jac, vec![1.0; ncols])
            .map_err(|_| Error::NoConnection("singular linearization of the base problem".into()))?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let c = solver.solve(&rhs);
        let points = path
            .points
            .iter()
            .zip(&path.frames)
            .enumerate()
            .map(|(j, (q, fr))| {
                let step = &fr.frame * DVector::from_column_slice(&c[j * k..(j + 1) * k]);
                Ok(retract_to_sigma(setup, &(q + step))?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        path = BasePath::new(setup, path.grid, points, path.x_minus, path.x_plus)?;
    }
    Err(Error::NoConnection(format!("base path polishing stalled at residual {last:.3e}")))
}
