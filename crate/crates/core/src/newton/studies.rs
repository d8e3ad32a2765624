use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::iterate::{newton_iterate, t_eps, NewtonOptions, NewtonReport};
use super::section::{displaced_path, section_flat};
use crate::error::{Error, Result};
use crate::flows::{AmbientPath, BasePath, DenseTrajectory};
use crate::grid::{NormKind, ResidualField, TangentField};
use crate::linops::random::{random_ambient_field, random_residual_field};
use crate::linops::{assemble_deps, assemble_deps_at, Variant};
use crate::problem::ProblemSetup;

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub norm_z_12eps: f64,
    pub norm_x_inf: f64,
    pub norm_ell_inf: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slope_z_12eps: f64,
    pub slope_x_inf: f64,
    pub slope_ell_inf: f64,
    /// max over the sweep of ‖X‖_∞/ε^{3/2}.
    pub max_x_ratio: f64,
    /// max over the sweep of ‖ℓ‖_∞/ε^{1/2}.
    pub max_ell_ratio: f64,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,norm_Z_12eps,norm_X_inf,norm_ell_inf,iterations,residual\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{},{:e}\n",
                r.eps, r.norm_z_12eps, r.norm_x_inf, r.norm_ell_inf, r.iterations, r.residual
            ));
        }
        s
    }
}

/// Runs Newton independently at every ε and fits the decay exponents of
/// ‖Z^ε‖₁,₂,ε, ‖X‖_∞ and ‖ℓ‖_∞.
pub fn scaling_study(setup: &ProblemSetup, path: &BasePath, eps_list: &[f64], opts: &NewtonOptions) -> Result<ScalingReport> {
    if eps_list.len() < 2 {
        return Err(Error::InsufficientData("need at least two values of eps".into()));
    }
    let (lo, hi) = eps_list
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!("eps range [{lo}, {hi}] spans less than a decade")));
    }
    let reports: Vec<NewtonReport> = eps_list
        .par_iter()
        .map(|&eps| t_eps(setup, path, eps, opts).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    let rows: Vec<ScalingRow> = reports
        .iter()
        .map(|r| ScalingRow {
            eps: r.eps,
            norm_z_12eps: r.norm_z_12eps,
            norm_x_inf: r.norm_x_inf,
            norm_ell_inf: r.norm_ell_inf,
            iterations: r.iterations.len(),
            residual: r.residual_final,
        })
        .collect();
    if rows.iter().any(|r| r.norm_z_12eps == 0.0) {
        return Err(Error::InsufficientData("Z vanishes identically; exponents undefined".into()));
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let col = |f: fn(&ScalingRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let ratio = |f: fn(&ScalingRow) -> f64, p: f64| rows.iter().map(|r| f(r) / r.eps.powf(p)).fold(0.0, f64::max);
    Ok(ScalingReport {
        slope_z_12eps: loglog_slope(&eps, &col(|r| r.norm_z_12eps)),
        slope_x_inf: loglog_slope(&eps, &col(|r| r.norm_x_inf)),
        slope_ell_inf: loglog_slope(&eps, &col(|r| r.norm_ell_inf)),
        max_x_ratio: ratio(|r| r.norm_x_inf, 1.5),
        max_ell_ratio: ratio(|r| r.norm_ell_inf, 0.5),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub eps: f64,
    pub delta0: f64,
    /// ‖X₀' − X^ε‖_∞ of every perturbed start.
    pub start_offsets: Vec<f64>,
    /// (1,2,ε) distance of every limit from Z^ε; `None` if Newton failed.
    pub distances: Vec<Option<f64>>,
    pub max_distance: f64,
}

/// Distance in the (1,2,ε) norm below which two Newton limits are equal.
pub const UNIQUENESS_TOL: f64 = 1e-8;

/// Restarts Newton from Z^ε + (D^ε)*y for random smooth y, scaled so that
/// ‖X₀' − X^ε‖_∞ lies in [½, 1]·δ₀√ε, and checks every run returns to Z^ε.
/// The report is returned in full unless a perturbation inside the ball
/// lands elsewhere.
pub fn uniqueness_probe<R: Rng + ?Sized>(
    setup: &ProblemSetup,
    path: &BasePath,
    eps: f64,
    n_perturbations: usize,
    delta0: f64,
    opts: &NewtonOptions,
    rng: &mut R,
) -> Result<UniquenessReport> {
    let base = t_eps(setup, path, eps, opts)?.1;
    let z_flat = base.z_final.to_flat();
    let adj = assemble_deps(setup, path, eps, Variant::Operator)?.adjoint();
    let (grid, m) = (path.grid, path.dim());
    let radius = delta0 * eps.sqrt();
    let starts: Vec<DVector<f64>> = (0..n_perturbations)
        .map(|_| {
            let y = random_residual_field(grid, m, rng).to_flat();
            let dz = adj.apply(&y);
            let size = TangentField::from_flat(grid, m, &dz).x_sup();
            let target = radius * rng.random_range(0.5..=1.0);
            if size > 0.0 {
                dz * (target / size)
            } else {
                dz
            }
        })
        .collect();
    let outcomes: Vec<(f64, Option<f64>)> = starts
        .par_iter()
        .map(|dz| {
            let offset = TangentField::from_flat(grid, m, dz).x_sup();
            let o = NewtonOptions {
                initial: Some(&z_flat + dz),
                ..opts.clone()
            };
            let dist = newton_iterate(setup, path, eps, &o)
                .ok()
                .filter(|r| r.converged)
                .map(|r| r.z_final.sub(&base.z_final).eps_norm(eps, NormKind::N12));
            (offset, dist)
        })
        .collect();
    let distances: Vec<Option<f64>> = outcomes.iter().map(|o| o.1).collect();
    let rep = UniquenessReport {
        eps,
        delta0,
        start_offsets: outcomes.iter().map(|o| o.0).collect(),
        max_distance: distances.iter().map(|d| d.unwrap_or(f64::INFINITY)).fold(0.0, f64::max),
        distances,
    };
    for (i, d) in rep.distances.iter().enumerate() {
        let d = d.unwrap_or(f64::INFINITY);
        if !(d <= UNIQUENESS_TOL) && rep.start_offsets[i] <= radius * (1.0 + 1e-12) {
            return Err(Error::UniquenessViolated { index: i, distance: d });
        }
    }
    Ok(rep)
}

/// Scale factors of the remainder ladder.
pub const T_LADDER: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

#[derive(Clone, Debug, Serialize)]
pub struct QuadraticReport {
    pub eps: f64,
    pub delta: f64,
    pub fields_tested: usize,
    /// Per field, slope of ‖F(Z+tζ) − F(Z) − dF(Z)tζ‖₀,₂,ε against t.
    pub remainder_slopes: Vec<f64>,
    /// Same slope restricted to the constraint row.
    pub constraint_row_slopes: Vec<f64>,
    /// Per field, slope of ‖(dF(tZ) − dF(0))ζ‖₀,₂,ε against t.
    pub derivative_slopes: Vec<f64>,
    /// Largest ε‖f‖/(ε⁻¹‖X̂‖_∞‖X̂‖) of the constraint-row remainder.
    pub remainder_constant: f64,
    /// Largest ε‖𝔣‖/(ε⁻¹‖X‖_∞‖X̂‖) of the constraint-row derivative difference.
    pub derivative_constant: f64,
}

impl QuadraticReport {
    pub fn min_remainder_slope(&self) -> f64 {
        self.remainder_slopes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_derivative_slope(&self) -> f64 {
        self.derivative_slopes.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// F^ε_q(Z+ζ) − F^ε_q(Z) − dF^ε_q(Z)ζ, with dF^ε_q(Z) the operator
/// linearized at (q + X, σ + ℓ).
pub fn quadratic_remainder(
    setup: &ProblemSetup,
    path: &BasePath,
    eps: f64,
    z: &TangentField,
    zeta: &TangentField,
) -> Result<ResidualField> {
    let sigma = path.multipliers()?;
    let (zf, df) = (z.to_flat(), zeta.to_flat());
    let at = assemble_deps_at(setup, &displaced_path(path, &sigma, z)?, eps, Variant::Operator)?;
    let r = section_flat(setup, path, &sigma, eps, &(&zf + &df))? - section_flat(setup, path, &sigma, eps, &zf)? - at.apply(&df);
    Ok(ResidualField::from_flat(path.grid, path.dim(), &r))
}

/// (dF^ε_q(Z) − dF^ε_q(0))ζ.
pub fn derivative_difference(
    setup: &ProblemSetup,
    path: &BasePath,
    eps: f64,
    z: &TangentField,
    zeta: &TangentField,
) -> Result<ResidualField> {
    let sigma = path.multipliers()?;
    let df = zeta.to_flat();
    let at = assemble_deps_at(setup, &displaced_path(path, &sigma, z)?, eps, Variant::Operator)?;
    let at0 = assemble_deps(setup, path, eps, Variant::Operator)?;
    Ok(ResidualField::from_flat(path.grid, path.dim(), &(at.apply(&df) - at0.apply(&df))))
}

fn scaled_to_sup(z: TangentField, delta: f64) -> TangentField {
    let s = z.x_sup();
    z.scaled(delta / s)
}

/// Samples `n_fields` pairs Z, ζ with ‖X‖_∞ = ‖X̂‖_∞ = δ and measures the
/// decay of the Taylor remainder under ζ → tζ and of the derivative
/// difference under Z → tZ along [`T_LADDER`].
pub fn quadratic_remainder_check<R: Rng + ?Sized>(
    setup: &ProblemSetup,
    path: &BasePath,
    eps: f64,
    n_fields: usize,
    delta: f64,
    rng: &mut R,
) -> Result<QuadraticReport> {
    let (grid, m) = (path.grid, path.dim());
    let pairs: Vec<(TangentField, TangentField)> = (0..n_fields)
        .map(|_| {
            let z = scaled_to_sup(random_ambient_field(grid, m, rng), delta);
            let zeta = scaled_to_sup(random_ambient_field(grid, m, rng), delta);
            (z, zeta)
        })
        .collect();
    let h_norm = |r: &ResidualField| eps * r.h_l2_sq().sqrt();
    let per_field: Vec<(f64, f64, f64, f64, f64)> = pairs
        .par_iter()
        .map(|(z, zeta)| -> Result<_> {
            let mut rem = Vec::new();
            let mut rem_h = Vec::new();
            let mut der = Vec::new();
            let mut c_rem: f64 = 0.0;
            let mut c_der: f64 = 0.0;
            for &t in &T_LADDER {
                let zt = zeta.scaled(t);
                let r = quadratic_remainder(setup, path, eps, z, &zt)?;
                rem.push(r.norm(eps));
                rem_h.push(h_norm(&r));
                c_rem = c_rem.max(h_norm(&r) / (zt.x_sup() * zt.x_l2_sq().sqrt() / eps));
                let d = derivative_difference(setup, path, eps, &z.scaled(t), zeta)?;
                der.push(d.norm(eps));
                c_der = c_der.max(h_norm(&d) / (t * z.x_sup() * zeta.x_l2_sq().sqrt() / eps));
            }
            Ok((
                loglog_slope(&T_LADDER, &rem),
                loglog_slope(&T_LADDER, &rem_h),
                loglog_slope(&T_LADDER, &der),
                c_rem,
                c_der,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(QuadraticReport {
        eps,
        delta,
        fields_tested: n_fields,
        remainder_slopes: per_field.iter().map(|p| p.0).collect(),
        constraint_row_slopes: per_field.iter().map(|p| p.1).collect(),
        derivative_slopes: per_field.iter().map(|p| p.2).collect(),
        remainder_constant: per_field.iter().map(|p| p.3).fold(0.0, f64::max),
        derivative_constant: per_field.iter().map(|p| p.4).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InjectivityReport {
    pub eps: f64,
    /// max_j |u¹_j − u²_j|.
    pub distance: f64,
    /// Larger of the two correction sizes ‖X‖_∞.
    pub correction: f64,
    pub distinct: bool,
}

/// Applies T^ε to two base trajectories and compares the outputs against
/// the size of the corrections. Distinct inputs must stay distinct.
pub fn injectivity_check(
    setup: &ProblemSetup,
    a: &BasePath,
    b: &BasePath,
    eps: f64,
    opts: &NewtonOptions,
) -> Result<InjectivityReport> {
    let (za, ra) = t_eps(setup, a, eps, opts)?;
    let (zb, rb) = t_eps(setup, b, eps, opts)?;
    let distance = za.u.iter().zip(&zb.u).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let correction = ra.norm_x_inf.max(rb.norm_x_inf);
    Ok(InjectivityReport {
        eps,
        distance,
        correction,
        distinct: distance > 10.0 * correction,
    })
}

/// Largest pointwise distance between u of a discrete ε-trajectory and a
/// dense reference trajectory, after shifting the reference so that F_H
/// agrees at the middle node. The reference state is (u, τ).
pub fn flow_agreement(setup: &ProblemSetup, z: &AmbientPath, reference: &DenseTrajectory) -> Result<f64> {
    let m = z.u[0].len();
    let mid = z.grid.mid();
    let level = z.lagrangian_values(setup)?[mid];
    let value = |s: f64| -> Result<f64> {
        let v = reference.eval(s);
        setup.lagrangian(&v.as_slice()[..m], v[m])
    };
    // F_H decreases along the flow; bracket the level on the reference.
    let (mut lo, mut hi) = (reference.t[0], *reference.t.last().expect("nonempty trajectory"));
    if !(value(lo)? >= level && value(hi)? <= level) {
        return Err(Error::NoConvergence("level of the middle node not attained by the reference".into()));
    }
    for _ in 0..200 {
        let c = 0.5 * (lo + hi);
        if value(c)? > level {
            lo = c;
        } else {
            hi = c;
        }
    }
    let shift = 0.5 * (lo + hi) - z.grid.node(mid);
    Ok((0..=z.grid.n)
        .map(|j| {
            let r = reference.eval(z.grid.node(j) + shift);
            (&z.u[j] - r.rows(0, m)).norm()
        })
        .fold(0.0, f64::max))
}
