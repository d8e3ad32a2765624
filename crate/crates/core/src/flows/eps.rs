use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{hermite, integrate_base_flow_with, AmbientPath, BaseFlowOptions};
use crate::criticals::CriticalPoint;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::ProblemSetup;

#[derive(Clone, Debug)]
pub struct EpsFlowOptions {
    /// Force the implicit midpoint rule; by default RK4 is used for ε ≥ 0.5.
    pub implicit: Option<bool>,
    pub max_iter: usize,
    /// Newton stops once the largest defect is below this.
    pub tol: f64,
    /// Starting guess; by default the embedded base-flow path.
    pub initial: Option<AmbientPath>,
    /// Options for the base-flow path used as starting guess.
    pub base: BaseFlowOptions,
}

impl Default for EpsFlowOptions {
    fn default() -> Self {
        Self {
            implicit: None,
            max_iter: 40,
            tol: 1e-11,
            initial: None,
            base: BaseFlowOptions::default(),
        }
    }
}

/// Integrator output with derivatives for Hermite interpolation.
#[derive(Clone, Debug, Default)]
pub struct DenseTrajectory {
    pub t: Vec<f64>,
    pub z: Vec<DVector<f64>>,
    pub dz: Vec<DVector<f64>>,
}

impl DenseTrajectory {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.z[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.z[n - 1].clone();
        }
        let k = self.t.partition_point(|&s| s <= t).saturating_sub(1).min(n - 2);
        let h = self.t[k + 1] - self.t[k];
        hermite(&self.z[k], &self.dz[k], &self.z[k + 1], &self.dz[k + 1], h, t - self.t[k])
    }
}

#[derive(Clone, Debug)]
pub struct EpsFlowResult {
    pub path: AmbientPath,
    /// Integrator states at every half step, in the time variable s.
    pub dense: DenseTrajectory,
    /// Largest mismatch between consecutive shooting segments.
    pub defect: f64,
    pub iterations: usize,
    pub segments: usize,
}

struct EpsField<'a> {
    setup: &'a ProblemSetup,
    eps: f64,
    m: usize,
}

impl EpsField<'_> {
    /// −∇^ε F_H(u, τ) = (−(∇F + τ∇H)(u), −ε⁻²H(u)).
    fn eval(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let u = &z.as_slice()[..self.m];
        let tau = z[self.m];
        let g = self.setup.f.grad(u)? + self.setup.h.grad(u)? * tau;
        let mut out = DVector::zeros(self.m + 1);
        out.rows_mut(0, self.m).copy_from(&(-g));
        out[self.m] = -self.setup.h.eval(u)? / (self.eps * self.eps);
        Ok(out)
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = self.m;
        let u = &z.as_slice()[..m];
        let k = self.setup.f.hess(u)? + self.setup.h.hess(u)? * z[m];
        let gh = self.setup.h.grad(u)?;
        let mut a = DMatrix::zeros(m + 1, m + 1);
        a.view_mut((0, 0), (m, m)).copy_from(&(-k));
        for i in 0..m {
            a[(i, m)] = -gh[i];
            a[(m, i)] = -gh[i] / (self.eps * self.eps);
        }
        Ok(a)
    }

    /// One implicit midpoint step solved by Newton.
    fn midpoint(&self, z: &DVector<f64>, k: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let n = z.len();
        let mut y = z + k * h;
        for _ in 0..25 {
            let mid = (z + &y) * 0.5;
            let g = &y - z - self.eval(&mid)? * h;
            let j = DMatrix::identity(n, n) - self.jacobian(&mid)? * (0.5 * h);
            let d = j
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::StiffnessFailure("singular Newton matrix".into()))?;
            y -= &d;
            if !y.iter().all(|v| v.is_finite()) {
                break;
            }
            if d.amax() <= 1e-14 * (1.0 + y.amax()) {
                return Ok(y);
            }
        }
        Err(Error::StiffnessFailure(format!("implicit midpoint Newton failed (eps = {})", self.eps)))
    }
}

/// Eigen-decomposition of the linearized ε-flow at a critical point of F_H
/// in (0,2,ε)-orthonormal coordinates. Returns (eigenvalue, right
/// eigenvector, left eigenvector) of the matrix A with z' = −A z.
pub(crate) fn linearization(setup: &ProblemSetup, x: &CriticalPoint, eps: f64) -> Result<Vec<(f64, DVector<f64>, DVector<f64>)>> {
    let m = setup.dim();
    let p = x.x.as_slice();
    let k = setup.f.hess(p)? + setup.h.hess(p)? * x.tau;
    let gh = setup.h.grad(p)?;
    let mut s = DMatrix::zeros(m + 1, m + 1);
    s.view_mut((0, 0), (m, m)).copy_from(&k);
    for i in 0..m {
        s[(i, m)] = gh[i] / eps;
        s[(m, i)] = gh[i] / eps;
    }
    let eig = SymmetricEigen::new(s);
    let mut out: Vec<_> = (0..=m)
        .map(|c| {
            let w = eig.eigenvectors.column(c).into_owned();
            let mut right = w.clone();
            right[m] /= eps;
            let mut left = w;
            left[m] *= eps;
            (eig.eigenvalues[c], right, left)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// One step of size h together with its derivative with respect to the
/// starting state.
fn step(field: &EpsField, z: &DVector<f64>, h: f64, implicit: bool) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = z.len();
    let id = DMatrix::<f64>::identity(n, n);
    if implicit {
        let k = field.eval(z)?;
        let y = field.midpoint(z, &k, h)?;
        let jm = field.jacobian(&((z + &y) * 0.5))? * (0.5 * h);
        let d = (&id - &jm)
            .lu()
            .solve(&(&id + &jm))
            .ok_or_else(|| Error::StiffnessFailure("singular midpoint derivative".into()))?;
        return Ok((y, d));
    }
    let k1 = field.eval(z)?;
    let d1 = field.jacobian(z)?;
    let y2 = z + &k1 * (0.5 * h);
    let k2 = field.eval(&y2)?;
    let d2 = field.jacobian(&y2)? * (&id + &d1 * (0.5 * h));
    let y3 = z + &k2 * (0.5 * h);
    let k3 = field.eval(&y3)?;
    let d3 = field.jacobian(&y3)? * (&id + &d2 * (0.5 * h));
    let y4 = z + &k3 * h;
    let k4 = field.eval(&y4)?;
    let d4 = field.jacobian(&y4)? * (&id + &d3 * h);
    let y = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    Ok((y, id + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0)))
}

struct Segment {
    /// States at every half step, including both ends.
    states: Vec<DVector<f64>>,
    /// Derivative of the end state with respect to the start state.
    flow_derivative: DMatrix<f64>,
}

fn integrate_segment(field: &EpsField, z0: &DVector<f64>, steps: usize, h: f64, implicit: bool) -> Result<Segment> {
    let n = z0.len();
    let mut z = z0.clone();
    let mut d = DMatrix::identity(n, n);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(z.clone());
    for _ in 0..steps {
        let (y, dy) = step(field, &z, h, implicit)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::StiffnessFailure(format!("non-finite state (eps = {})", field.eps)));
        }
        d = dy * d;
        z = y;
        states.push(z.clone());
    }
    Ok(Segment {
        states,
        flow_derivative: d,
    })
}

/// Smallest even number of segments dividing the grid such that each segment
/// spans at most `growth` e-foldings of the fastest linear rate.
fn segment_count(n: usize, ds: f64, rate: f64, growth: f64) -> usize {
    (2..=n)
        .step_by(2)
        .find(|k| n.is_multiple_of(*k) && (n / k) as f64 * ds * rate <= growth)
        .unwrap_or(n)
}

/// Connecting orbit of the ε-flow from (x⁻, χ(x⁻)) to (x⁺, χ(x⁺)) on the
/// window [−T, T] of `grid`, by multiple shooting. The end states are pinned
/// to the unstable subspace at x⁻ and the stable subspace at x⁺, and s = 0 is
/// placed on the mean level of F_H. Segments are integrated with RK4 or the
/// implicit midpoint rule at step ds/2, so u lands on the nodes and τ on the
/// half-nodes.
pub fn integrate_eps_flow(
    setup: &ProblemSetup,
    x_minus: &CriticalPoint,
    x_plus: &CriticalPoint,
    eps: f64,
    grid: TimeGrid,
    opts: &EpsFlowOptions,
) -> Result<EpsFlowResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("eps = {eps} outside (0, 1]")));
    }
    let m = setup.dim();
    let n = m + 1;
    let z_of = |x: &DVector<f64>, tau: f64| {
        let mut z = DVector::zeros(n);
        z.rows_mut(0, m).copy_from(x);
        z[m] = tau;
        z
    };
    let (zm, zp) = (z_of(&x_minus.x, x_minus.tau), z_of(&x_plus.x, x_plus.tau));
    if (&zm - &zp).norm() < 1e-9 {
        let path = AmbientPath {
            grid,
            u: vec![x_minus.x.clone(); grid.n + 1],
            tau: vec![x_minus.tau; grid.n],
            x_minus: x_minus.clone(),
            x_plus: x_plus.clone(),
        };
        let dense = DenseTrajectory {
            t: (0..=2 * grid.n).map(|k| grid.node(0) + 0.5 * k as f64 * grid.ds()).collect(),
            z: vec![zm.clone(); 2 * grid.n + 1],
            dz: vec![DVector::zeros(n); 2 * grid.n + 1],
        };
        return Ok(EpsFlowResult {
            path,
            dense,
            defect: 0.0,
            iterations: 0,
            segments: 0,
        });
    }
    let lin_m = linearization(setup, x_minus, eps)?;
    let lin_p = linearization(setup, x_plus, eps)?;
    let left_rows: Vec<&DVector<f64>> = lin_m.iter().filter(|e| e.0 > 0.0).map(|e| &e.2).collect();
    let right_rows: Vec<&DVector<f64>> = lin_p.iter().filter(|e| e.0 < 0.0).map(|e| &e.2).collect();
    let unstable_m = n - left_rows.len();
    if unstable_m <= right_rows.len() {
        return Err(Error::NoConnection(format!(
            "unstable dimensions ({unstable_m}, {}) admit no connecting orbit",
            right_rows.len()
        )));
    }
    let rate = lin_m.iter().chain(&lin_p).map(|e| e.0.abs()).fold(0.0, f64::max);
    let field = EpsField { setup, eps, m };
    let implicit = opts.implicit.unwrap_or(eps < 0.5);
    let (nn, ds) = (grid.n, grid.ds());
    let k_seg = segment_count(nn, ds, rate, 3.0);
    let per = nn / k_seg;
    let steps = 2 * per;
    let h = 0.5 * ds;

    let initial = match &opts.initial {
        Some(p) => p.clone(),
        None => {
            let base = integrate_base_flow_with(setup, x_minus, x_plus, grid, &opts.base)?;
            let chi = base.chi();
            AmbientPath {
                grid,
                tau: (0..nn).map(|j| 0.5 * (chi[j] + chi[j + 1])).collect(),
                u: base.points,
                x_minus: x_minus.clone(),
                x_plus: x_plus.clone(),
            }
        }
    };
    let mut starts: Vec<DVector<f64>> = (0..k_seg)
        .map(|k| {
            let j = k * per;
            let tau = if j == 0 { initial.tau[0] } else { 0.5 * (initial.tau[j - 1] + initial.tau[j]) };
            z_of(&initial.u[j], tau)
        })
        .collect();

    let level = 0.5 * (x_minus.f_value + x_plus.f_value);
    let mid = k_seg / 2;
    let rows = left_rows.len() + (k_seg - 1) * n + right_rows.len() + 1;
    let cols = k_seg * n;
    let integrate_all = |starts: &[DVector<f64>]| -> Result<Vec<Segment>> {
        starts.iter().map(|z| integrate_segment(&field, z, steps, h, implicit)).collect()
    };
    let residual = |starts: &[DVector<f64>], segs: &[Segment]| -> Result<DVector<f64>> {
        let mut r = DVector::zeros(rows);
        let mut i = 0;
        for l in &left_rows {
            r[i] = l.dot(&(&starts[0] - &zm));
            i += 1;
        }
        for k in 0..k_seg - 1 {
            r.rows_mut(i, n).copy_from(&(segs[k].states[steps].clone() - &starts[k + 1]));
            i += n;
        }
        let end = &segs[k_seg - 1].states[steps];
        for l in &right_rows {
            r[i] = l.dot(&(end - &zp));
            i += 1;
        }
        let zc = &starts[mid];
        r[i] = setup.lagrangian(&zc.as_slice()[..m], zc[m])? - level;
        Ok(r)
    };

    let mut segs = integrate_all(&starts)?;
    let mut r = residual(&starts, &segs)?;
    let mut iterations = 0;
    while r.amax() > opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NoConvergence(format!(
                "eps-flow shooting stalled at defect {:.3e} (eps = {eps})",
                r.amax()
            )));
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(rows, cols);
        let mut i = 0;
        for l in &left_rows {
            jac.view_mut((i, 0), (1, n)).copy_from(&l.transpose());
            i += 1;
        }
        for k in 0..k_seg - 1 {
            jac.view_mut((i, k * n), (n, n)).copy_from(&segs[k].flow_derivative);
            for a in 0..n {
                jac[(i + a, (k + 1) * n + a)] = -1.0;
            }
            i += n;
        }
        let dl = &segs[k_seg - 1].flow_derivative;
        for l in &right_rows {
            jac.view_mut((i, (k_seg - 1) * n), (1, n)).copy_from(&(l.transpose() * dl));
            i += 1;
        }
        let zc = &starts[mid];
        let u = &zc.as_slice()[..m];
        let g = setup.f.grad(u)? + setup.h.grad(u)? * zc[m];
        for a in 0..m {
            jac[(i, mid * n + a)] = g[a];
        }
        jac[(i, mid * n + m)] = setup.h.eval(u)?;
        let dx = if rows == cols {
            jac.lu().solve(&r)
        } else {
            let jt = jac.transpose();
            (&jac * &jt).cholesky().map(|c| jt * c.solve(&r))
        }
        .ok_or_else(|| Error::NoConvergence(format!("singular shooting Jacobian (eps = {eps})")))?;

        let r0 = r.norm();
        let mut lambda = 1.0;
        loop {
            let trial: Vec<DVector<f64>> = starts
                .iter()
                .enumerate()
                .map(|(k, z)| z - dx.rows(k * n, n) * lambda)
                .collect();
            let attempt = integrate_all(&trial).and_then(|s| residual(&trial, &s).map(|r| (s, r)));
            match attempt {
                Ok((s, rt)) if rt.norm() < r0 || lambda < 1e-3 => {
                    starts = trial;
                    segs = s;
                    r = rt;
                    break;
                }
                Err(e) if lambda < 1e-3 => return Err(e),
                _ => lambda *= 0.5,
            }
        }
    }

    let mut dense = DenseTrajectory::default();
    for (k, seg) in segs.iter().enumerate() {
        let skip = usize::from(k > 0);
        for (i, z) in seg.states.iter().enumerate().skip(skip) {
            dense.t.push(grid.node(k * per) + i as f64 * h);
            dense.dz.push(field.eval(z)?);
            dense.z.push(z.clone());
        }
    }
    // Later segments start from their own unknowns; the defect is below tol.
    let path = AmbientPath {
        grid,
        u: (0..=nn).map(|j| dense.z[2 * j].rows(0, m).into_owned()).collect(),
        tau: (0..nn).map(|j| dense.z[2 * j + 1][m]).collect(),
        x_minus: x_minus.clone(),
        x_plus: x_plus.clone(),
    };
    Ok(EpsFlowResult {
        path,
        dense,
        defect: r.amax(),
        iterations,
        segments: k_seg,
    })
}
