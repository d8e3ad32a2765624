//! Critical points of f = F|Σ and of F_H(x, τ) = F(x) + τH(x), their Hessians
//! and Morse indices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypersurface::{chi, retract_to_sigma, SurfaceFrame};
use crate::problem::ProblemSetup;

pub const DEGENERACY_TOL: f64 = 1e-8;
/// Largest |∇f| accepted at a critical point.
pub const CRITICAL_TOL: f64 = 1e-10;
const DEDUPE_DIST: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Spectra {
    pub f: Vec<f64>,
    #[serde(rename = "FH")]
    pub fh: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    #[serde(serialize_with = "ser_vec")]
    pub x: DVector<f64>,
    pub tau: f64,
    pub f_value: f64,
    pub index_f: usize,
    #[serde(rename = "index_FH")]
    pub index_fh: usize,
    pub eigs: Spectra,
    pub nondegenerate: bool,
}

pub(crate) fn ser_vec<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

impl CriticalPoint {
    /// Hessians, spectra and indices at a critical point of f.
    pub fn analyze(setup: &ProblemSetup, x: &DVector<f64>) -> Result<Self> {
        let hf = hessian_f(setup, x)?;
        let tau = chi(setup, x.as_slice())?;
        let hfh = hessian_fh(setup, x, tau)?;
        let (index_f, nd_f) = morse_index(&hf, DEGENERACY_TOL);
        let (index_fh, nd_fh) = morse_index(&hfh, DEGENERACY_TOL);
        Ok(Self {
            x: x.clone(),
            tau,
            f_value: setup.f.eval(x.as_slice())?,
            index_f,
            index_fh,
            eigs: Spectra {
                f: sorted_eigenvalues(&hf),
                fh: sorted_eigenvalues(&hfh),
            },
            nondegenerate: nd_f && nd_fh,
        })
    }

    pub fn hessian_f(&self, setup: &ProblemSetup) -> Result<DMatrix<f64>> {
        hessian_f(setup, &self.x)
    }
}

/// Eigenvalues in ascending order.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Number of eigenvalues below `−tol·ρ` (ρ the spectral radius) and whether
/// none lies in `[−tol·ρ, tol·ρ]`.
pub fn morse_index(a: &DMatrix<f64>, tol: f64) -> (usize, bool) {
    let e = sorted_eigenvalues(a);
    let rho = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if rho == 0.0 {
        return (0, e.is_empty());
    }
    let thr = tol * rho;
    let index = e.iter().filter(|&&x| x < -thr).count();
    let nondegenerate = e.iter().all(|x| x.abs() > thr);
    (index, nondegenerate)
}

/// Tangential Hessian ⟨e_i, (HessF + χ HessH) e_j⟩ of f in the tangent frame.
pub fn hessian_f(setup: &ProblemSetup, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let fr = SurfaceFrame::at(setup, x)?;
    let g = fr.grad_f_sigma().norm();
    if g > 1e-8 {
        return Err(Error::NotCritical(g));
    }
    Ok(frame_hessian(&fr))
}

pub(crate) fn frame_hessian(fr: &SurfaceFrame) -> DMatrix<f64> {
    let a = fr.frame.tr_mul(&(fr.multiplier_hessian(fr.chi) * &fr.frame));
    (&a + a.transpose()) * 0.5
}

/// Ambient Hessian [[HessF + τHessH, ∇H], [∇Hᵀ, 0]] of F_H at (x, τ).
pub fn hessian_fh(setup: &ProblemSetup, x: &DVector<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let p = x.as_slice();
    let gh = setup.h.grad(p)?;
    let res = (setup.f.grad(p)? + &gh * tau).norm().max(setup.h.eval(p)?.abs());
    if res > 1e-8 {
        return Err(Error::NotCritical(res));
    }
    lagrangian_hessian(setup, x, tau)
}

fn lagrangian_hessian(setup: &ProblemSetup, x: &DVector<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let p = x.as_slice();
    let m = setup.dim();
    let gh = setup.h.grad(p)?;
    let k = setup.f.hess(p)? + setup.h.hess(p)? * tau;
    let mut a = DMatrix::zeros(m + 1, m + 1);
    a.view_mut((0, 0), (m, m)).copy_from(&k);
    for i in 0..m {
        a[(i, m)] = gh[i];
        a[(m, i)] = gh[i];
    }
    Ok(a)
}

/// Moves a point onto Σ: by retraction inside the κ-band, otherwise by
/// damped Newton steps along ∇H first.
pub fn project_to_sigma(setup: &ProblemSetup, p: &DVector<f64>) -> Result<DVector<f64>> {
    let mut q = p.clone();
    for _ in 0..100 {
        let hq = setup.h.eval(q.as_slice())?;
        if hq.abs() <= setup.kappa * 0.5 {
            return Ok(retract_to_sigma(setup, &q)?.0);
        }
        let g = setup.h.grad(q.as_slice())?;
        let mut step = &g * (hq / g.norm_squared().max(1e-300));
        let n = step.norm();
        if n > 0.5 {
            step *= 0.5 / n;
        }
        q -= step;
    }
    Err(Error::RetractFailed("seed could not be moved into the band".into()))
}

/// Newton on the frame coordinates of ∇f, retracting after every step.
fn newton_on_sigma(setup: &ProblemSetup, seed: &DVector<f64>) -> Result<DVector<f64>> {
    let mut q = project_to_sigma(setup, seed)?;
    for _ in 0..60 {
        let fr = SurfaceFrame::at(setup, &q)?;
        let g = fr.grad_f_sigma();
        if g.norm() <= 1e-13 {
            return Ok(q);
        }
        let r = fr.coords(&g);
        let j = frame_hessian(&fr);
        let c = j
            .lu()
            .solve(&(-r))
            .ok_or_else(|| Error::NoConvergence("singular tangential Hessian".into()))?;
        let mut step = &fr.frame * c;
        let n = step.norm();
        if !n.is_finite() {
            return Err(Error::NoConvergence("non-finite Newton step".into()));
        }
        if n > 0.3 {
            step *= 0.3 / n;
        }
        q = retract_to_sigma(setup, &(&q + step))?.0;
    }
    let fr = SurfaceFrame::at(setup, &q)?;
    if fr.grad_f_sigma().norm() <= CRITICAL_TOL {
        Ok(q)
    } else {
        Err(Error::NoConvergence(format!("seed {:?}", seed.as_slice())))
    }
}

/// Critical points of f reached by Newton from the given seeds (the setup's
/// own seeds when `seeds` is empty), deduplicated and sorted by decreasing f.
pub fn find_critical_points(setup: &ProblemSetup, seeds: &[DVector<f64>]) -> Result<Vec<CriticalPoint>> {
    let seeds = if seeds.is_empty() { &setup.seeds[..] } else { seeds };
    let mut found: Vec<DVector<f64>> = Vec::new();
    for s in seeds {
        match newton_on_sigma(setup, s) {
            Ok(x) => {
                if setup.in_box(&x) && found.iter().all(|y| (y - &x).norm() >= DEDUPE_DIST) {
                    found.push(x);
                }
            }
            Err(e) => log::debug!("critical point search from {:?} failed: {e}", s.as_slice()),
        }
    }
    let mut out = found
        .iter()
        .map(|x| CriticalPoint::analyze(setup, x))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.f_value.total_cmp(&a.f_value));
    Ok(out)
}

/// Critical points of F_H on M × ℝ found by Newton in ℝ^{m+1}, independently
/// of the constrained search.
pub fn find_lagrange_critical_points(
    setup: &ProblemSetup,
    seeds: &[DVector<f64>],
) -> Result<Vec<(DVector<f64>, f64)>> {
    let m = setup.dim();
    let seeds = if seeds.is_empty() { &setup.seeds[..] } else { seeds };
    let mut found: Vec<(DVector<f64>, f64)> = Vec::new();
    'seeds: for s in seeds {
        let mut x = s.clone();
        let Ok(mut tau) = chi(setup, x.as_slice()) else { continue };
        for _ in 0..80 {
            let p = x.as_slice();
            let (Ok(gf), Ok(gh), Ok(hv)) = (setup.f.grad(p), setup.h.grad(p), setup.h.eval(p)) else {
                continue 'seeds;
            };
            let mut r = DVector::zeros(m + 1);
            r.rows_mut(0, m).copy_from(&(gf + gh * tau));
            r[m] = hv;
            if r.norm() <= 1e-13 {
                if found.iter().all(|(y, _)| (y - &x).norm() >= DEDUPE_DIST) {
                    found.push((x.clone(), tau));
                }
                continue 'seeds;
            }
            let Ok(a) = lagrangian_hessian(setup, &x, tau) else { continue 'seeds };
            let Some(mut d) = a.lu().solve(&(-r)) else { continue 'seeds };
            let n = d.norm();
            if !n.is_finite() {
                continue 'seeds;
            }
            if n > 0.3 {
                d *= 0.3 / n;
            }
            x += d.rows(0, m);
            tau += d[m];
        }
    }
    Ok(found)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceEntry {
    #[serde(serialize_with = "ser_vec")]
    pub x: DVector<f64>,
    pub chi: f64,
    /// Multiplier of the matching critical point of F_H.
    pub tau: Option<f64>,
    pub lagrange_residual: f64,
    pub index_f: usize,
    #[serde(rename = "index_FH")]
    pub index_fh: usize,
    pub nondegenerate: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceReport {
    pub entries: Vec<CorrespondenceEntry>,
    pub unmatched_lagrange_points: usize,
    pub max_tau_deviation: f64,
    pub pass: bool,
}

/// Checks that (x, χ(x)) is critical for F_H with index one higher than x
/// has for f, and that the independently found critical set of F_H projects
/// bijectively onto Crit f with τ = χ(x).
pub fn verify_crit_correspondence(setup: &ProblemSetup, crits: &[CriticalPoint]) -> Result<CorrespondenceReport> {
    let lagrange = find_lagrange_critical_points(setup, &[])?;
    let mut used = vec![false; lagrange.len()];
    let mut entries = Vec::new();
    let mut max_dev: f64 = 0.0;
    for c in crits {
        let p = c.x.as_slice();
        let res = (setup.f.grad(p)? + setup.h.grad(p)? * c.tau).norm();
        let hit = lagrange
            .iter()
            .enumerate()
            .find(|(k, (y, _))| !used[*k] && (y - &c.x).norm() < DEDUPE_DIST);
        let tau = hit.map(|(k, (_, t))| {
            used[k] = true;
            *t
        });
        let dev = tau.map_or(f64::INFINITY, |t| (t - c.tau).abs());
        max_dev = max_dev.max(dev);
        let index_ok = !c.nondegenerate || c.index_fh == c.index_f + 1;
        entries.push(CorrespondenceEntry {
            x: c.x.clone(),
            chi: c.tau,
            tau,
            lagrange_residual: res,
            index_f: c.index_f,
            index_fh: c.index_fh,
            nondegenerate: c.nondegenerate,
            pass: res <= 1e-8 && dev <= 1e-8 && index_ok,
        });
    }
    let unmatched = used.iter().filter(|u| !**u).count();
    let pass = entries.iter().all(|e| e.pass) && unmatched == 0;
    if let Some(bad) = entries.iter().find(|e| !e.pass) {
        return Err(Error::CorrespondenceFailed(bad.x.iter().copied().collect()));
    }
    Ok(CorrespondenceReport {
        entries,
        unmatched_lagrange_points: unmatched,
        max_tau_deviation: max_dev,
        pass,
    })
}
