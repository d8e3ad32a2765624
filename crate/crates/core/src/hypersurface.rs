//! Geometry of Σ = H⁻¹(0): tangent/normal splitting, the multiplier χ and
//! its surface gradient, the second fundamental form, the canonical
//! embedding q ↦ (q, χ(q)) and the retraction onto Σ along ∇H/|∇H|².

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::ProblemSetup;

/// Tolerance on |H| for a point to count as lying on Σ.
pub const ON_SURFACE_TOL: f64 = 1e-8;
/// Relative tolerance for tangency checks.
pub const TANGENCY_TOL: f64 = 1e-8;

/// Per-point geometric data at a point of Σ (or near it).
#[derive(Clone, Debug)]
pub struct SurfaceFrame {
    pub q: DVector<f64>,
    pub grad_h: DVector<f64>,
    /// U = ∇H/|∇H|.
    pub normal_u: DVector<f64>,
    /// Columns form an orthonormal basis of the orthogonal complement of U.
    pub frame: DMatrix<f64>,
    pub chi: f64,
    /// Surface gradient of χ.
    pub grad_chi: DVector<f64>,
    pub mu: f64,
    pub grad_f_ambient: DVector<f64>,
    pub hess_f: DMatrix<f64>,
    pub hess_h: DMatrix<f64>,
}

impl SurfaceFrame {
    pub fn at(setup: &ProblemSetup, q: &DVector<f64>) -> Result<Self> {
        let p = q.as_slice();
        let grad_h = setup.h.grad(p)?;
        let n2 = grad_h.norm_squared();
        let nh = n2.sqrt();
        if nh < setup.m_h_floor {
            return Err(Error::DegenerateGradient(nh));
        }
        let grad_f_ambient = setup.f.grad(p)?;
        let hess_f = setup.f.hess(p)?;
        let hess_h = setup.h.hess(p)?;
        let normal_u = &grad_h / nh;
        let frame = tangent_frame(&normal_u).ok_or(Error::FrameDegenerate(0))?;
        let chi = -grad_f_ambient.dot(&grad_h) / n2;
        let amb = chi_gradient_ambient(&grad_f_ambient, &grad_h, &hess_f, &hess_h);
        let grad_chi = project_out(&amb, &normal_u);
        let mu = grad_chi.norm();
        Ok(Self {
            q: q.clone(),
            grad_h,
            normal_u,
            frame,
            chi,
            grad_chi,
            mu,
            grad_f_ambient,
            hess_f,
            hess_h,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Splits X into its tangent part and its normal part (dH·X/|∇H|²)∇H.
    pub fn tan_nor_split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nu = &self.normal_u * self.normal_u.dot(x);
        (x - &nu, nu)
    }

    pub fn tan(&self, x: &DVector<f64>) -> DVector<f64> {
        project_out(x, &self.normal_u)
    }

    /// ∇F + χ∇H, which is tangent to Σ at points of Σ.
    pub fn grad_f_sigma(&self) -> DVector<f64> {
        &self.grad_f_ambient + &self.grad_h * self.chi
    }

    /// HessF + χ HessH, the zeroth-order coefficient of the linearized flows.
    pub fn multiplier_hessian(&self, tau: f64) -> DMatrix<f64> {
        &self.hess_f + &self.hess_h * tau
    }

    /// Frame coordinates of a vector.
    pub fn coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.frame.tr_mul(x)
    }

    pub fn is_tangent(&self, x: &DVector<f64>) -> bool {
        self.normal_u.dot(x).abs() <= TANGENCY_TOL * x.norm().max(1.0)
    }

    /// dχ(q)ξ for a tangent vector ξ.
    pub fn dchi(&self, xi: &DVector<f64>) -> f64 {
        self.grad_chi.dot(xi)
    }

    /// Derivative of the canonical embedding: ξ ↦ (ξ, dχ ξ).
    pub fn embed_derivative(&self, xi: &DVector<f64>) -> (DVector<f64>, f64) {
        (xi.clone(), self.dchi(xi))
    }

    /// II(ξ, η) = −(HessH(ξ, η)/|∇H|²) ∇H for tangent ξ, η.
    pub fn second_fundamental_form(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
        for v in [xi, eta] {
            if !self.is_tangent(v) {
                return Err(Error::NotTangent(self.normal_u.dot(v)));
            }
        }
        let c = -xi.dot(&(&self.hess_h * eta)) / self.grad_h.norm_squared();
        Ok(&self.grad_h * c)
    }
}

/// χ = −⟨∇F, ∇H⟩/|∇H|² at an arbitrary regular point.
pub fn chi(setup: &ProblemSetup, p: &[f64]) -> Result<f64> {
    let gh = setup.h.grad(p)?;
    let n2 = gh.norm_squared();
    if n2.sqrt() < setup.m_h_floor {
        return Err(Error::DegenerateGradient(n2.sqrt()));
    }
    Ok(-setup.f.grad(p)?.dot(&gh) / n2)
}

/// Ambient gradient of the extension χ = −⟨∇F,∇H⟩/|∇H|² by the quotient rule.
pub fn chi_gradient_ambient(
    gf: &DVector<f64>,
    gh: &DVector<f64>,
    hf: &DMatrix<f64>,
    hh: &DMatrix<f64>,
) -> DVector<f64> {
    let n2 = gh.norm_squared();
    let num = gf.dot(gh);
    -(hf * gh + hh * gf) / n2 + hh * gh * (2.0 * num / (n2 * n2))
}

/// Orthonormal basis of U^⊥ built from the m−1 standard basis vectors least
/// aligned with U, by Gram–Schmidt.
pub fn tangent_frame(u: &DVector<f64>) -> Option<DMatrix<f64>> {
    let m = u.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()).then(a.cmp(&b)));
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m - 1);
    for &i in order.iter().take(m - 1) {
        let mut v = DVector::zeros(m);
        v[i] = 1.0;
        v = project_out(&v, u);
        for c in &cols {
            v -= c * c.dot(&v);
        }
        let n = v.norm();
        if n < 1e-8 {
            return None;
        }
        cols.push(v / n);
    }
    Some(DMatrix::from_columns(&cols))
}

fn project_out(x: &DVector<f64>, unit: &DVector<f64>) -> DVector<f64> {
    x - unit * unit.dot(x)
}

/// The canonical embedding q ↦ (q, χ(q)).
pub fn canonical_embed(setup: &ProblemSetup, q: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let hq = setup.h.eval(q.as_slice())?;
    if hq.abs() > ON_SURFACE_TOL {
        return Err(Error::NotOnSurface(hq.abs()));
    }
    Ok((q.clone(), chi(setup, q.as_slice())?))
}

fn minus_v(setup: &ProblemSetup, p: &DVector<f64>) -> Result<DVector<f64>> {
    let g = setup.h.grad(p.as_slice())?;
    let n2 = g.norm_squared();
    if n2.sqrt() < setup.m_h_floor {
        return Err(Error::DegenerateGradient(n2.sqrt()));
    }
    Ok(-g / n2)
}

/// Flows along −V = −∇H/|∇H|² for parameter time `t` with RK4. Along V the
/// value of H grows at unit rate, so this lowers H by exactly `t` in exact
/// arithmetic.
fn flow_minus_v(setup: &ProblemSetup, p: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let n = ((t.abs() / 0.02).ceil() as usize).max(1);
    let h = t / n as f64;
    let mut y = p.clone();
    for _ in 0..n {
        let k1 = minus_v(setup, &y)?;
        let k2 = minus_v(setup, &(&y + &k1 * (0.5 * h)))?;
        let k3 = minus_v(setup, &(&y + &k2 * (0.5 * h)))?;
        let k4 = minus_v(setup, &(&y + &k3 * h))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(y)
}

/// Retracts a point of the band H⁻¹[−κ, κ] onto Σ. Returns the foot point q
/// and the normal-form coordinate r = H(p).
pub fn retract_to_sigma(setup: &ProblemSetup, p: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let r = setup.h.eval(p.as_slice())?;
    if r.abs() > setup.kappa {
        return Err(Error::RetractFailed(format!(
            "|H(p)| = {:.3e} outside the band of half-width {}",
            r.abs(),
            setup.kappa
        )));
    }
    if r == 0.0 {
        return Ok((p.clone(), 0.0));
    }
    let mut q = flow_minus_v(setup, p, r)?;
    for _ in 0..50 {
        let hq = setup.h.eval(q.as_slice())?;
        if hq.abs() <= 1e-12 {
            return Ok((q, r));
        }
        // H changes at unit rate along V, so this is the Newton correction.
        q = flow_minus_v(setup, &q, hq)?;
    }
    Err(Error::RetractFailed("no convergence in 50 corrections".into()))
}

/// Projects an arbitrary point onto Σ by Newton steps along ∇H. Used only for
/// sampling, where the starting point may lie far outside the κ-band.
fn newton_project(setup: &ProblemSetup, p: &DVector<f64>) -> Option<DVector<f64>> {
    let mut q = p.clone();
    for _ in 0..80 {
        let hq = setup.h.eval(q.as_slice()).ok()?;
        if hq.abs() <= 1e-13 {
            return Some(q);
        }
        let g = setup.h.grad(q.as_slice()).ok()?;
        let n2 = g.norm_squared();
        if n2 < 1e-20 {
            return None;
        }
        let mut step = g * (hq / n2);
        let sn = step.norm();
        if sn > 0.5 {
            step *= 0.5 / sn;
        }
        q -= step;
    }
    None
}

/// Random points of Σ inside the domain box.
pub fn sample_sigma<R: Rng + ?Sized>(setup: &ProblemSetup, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let w = setup.domain_halfwidth;
    let m = setup.dim();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 20 * n {
        attempts += 1;
        let p = DVector::from_fn(m, |_, _| rng.random_range(-w..w));
        if let Some(q) = newton_project(setup, &p) {
            if setup.in_box(&q) {
                out.push(q);
            }
        }
    }
    out
}

/// Minimum of |∇H| over sampled points of Σ.
pub fn m_h_estimate(setup: &ProblemSetup, n_samples: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.sampler.seed);
    let pts = sample_sigma(setup, n_samples, &mut rng);
    if pts.is_empty() {
        return Err(Error::InsufficientData("no points of the hypersurface sampled".into()));
    }
    let mut m = f64::INFINITY;
    for q in &pts {
        m = m.min(setup.h.grad(q.as_slice())?.norm());
    }
    if m < setup.m_h_floor {
        return Err(Error::DegenerateGradient(m));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;
    use crate::problem::unit_sphere;

    fn height_circle() -> ProblemSetup {
        let f = ScalarField::from_terms(2, &[(&[0, 1], 1.0)]).unwrap();
        ProblemSetup::new("height", f, unit_sphere(2).unwrap()).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
        (a - v(b)).amax() <= tol
    }

    #[test]
    fn splits_vectors_at_circle_point() {
        let fr = SurfaceFrame::at(&height_circle(), &v(&[1.0, 0.0])).unwrap();
        let (xi, nu) = fr.tan_nor_split(&v(&[0.0, 1.0]));
        assert!(close(&xi, &[0.0, 1.0], 1e-15) && close(&nu, &[0.0, 0.0], 1e-15));
        let (xi, nu) = fr.tan_nor_split(&v(&[1.0, 0.0]));
        assert!(close(&xi, &[0.0, 0.0], 1e-15) && close(&nu, &[1.0, 0.0], 1e-15));
        let (xi, nu) = fr.tan_nor_split(&v(&[3.0, 4.0]));
        assert!(close(&xi, &[0.0, 4.0], 1e-15) && close(&nu, &[3.0, 0.0], 1e-15));
    }

    #[test]
    fn multiplier_values() {
        let s = height_circle();
        assert!((chi(&s, &[0.0, 1.0]).unwrap() + 0.5).abs() < 1e-15);
        assert!((chi(&s, &[0.0, -1.0]).unwrap() - 0.5).abs() < 1e-15);
        let flat = ProblemSetup::new(
            "flat",
            ScalarField::from_terms(2, &[(&[0, 0], 3.0)]).unwrap(),
            unit_sphere(2).unwrap(),
        )
        .unwrap();
        assert_eq!(chi(&flat, &[0.6, 0.8]).unwrap(), 0.0);
        let fr = SurfaceFrame::at(&flat, &v(&[0.6, 0.8])).unwrap();
        assert_eq!(fr.mu, 0.0);
    }

    #[test]
    fn surface_gradients() {
        let s = height_circle();
        let fr = SurfaceFrame::at(&s, &v(&[1.0, 0.0])).unwrap();
        assert!(close(&fr.grad_f_sigma(), &[0.0, 1.0], 1e-15));
        assert!(close(&fr.tan(&fr.grad_f_ambient), &[0.0, 1.0], 1e-15));
        assert!(close(&fr.grad_chi, &[0.0, -0.5], 1e-15));
        assert!((fr.mu - 0.5).abs() < 1e-15);
        for y in [1.0, -1.0] {
            let fr = SurfaceFrame::at(&s, &v(&[0.0, y])).unwrap();
            assert!(fr.grad_f_sigma().norm() < 1e-15);
            assert!(fr.mu < 1e-15);
        }
    }

    #[test]
    fn second_fundamental_form_of_circle() {
        let fr = SurfaceFrame::at(&height_circle(), &v(&[1.0, 0.0])).unwrap();
        let t = v(&[0.0, 1.0]);
        assert!(close(&fr.second_fundamental_form(&t, &t).unwrap(), &[-1.0, 0.0], 1e-15));
        assert!(close(&fr.second_fundamental_form(&v(&[0.0, 0.0]), &t).unwrap(), &[0.0, 0.0], 0.0));
        assert!(matches!(
            fr.second_fundamental_form(&v(&[1.0, 0.0]), &t),
            Err(Error::NotTangent(_))
        ));
    }

    #[test]
    fn canonical_embedding() {
        let s = height_circle();
        let (q, c) = canonical_embed(&s, &v(&[0.0, 1.0])).unwrap();
        assert!(close(&q, &[0.0, 1.0], 0.0) && (c + 0.5).abs() < 1e-15);
        let fr = SurfaceFrame::at(&s, &v(&[1.0, 0.0])).unwrap();
        let (xi, l) = fr.embed_derivative(&v(&[0.0, 1.0]));
        assert!(close(&xi, &[0.0, 1.0], 0.0) && (l + 0.5).abs() < 1e-15);
        assert_eq!(fr.embed_derivative(&v(&[0.0, 0.0])).1, 0.0);
        assert!(matches!(canonical_embed(&s, &v(&[1.1, 0.0])), Err(Error::NotOnSurface(_))));
    }

    #[test]
    fn retraction() {
        let s = height_circle();
        let (q, r) = retract_to_sigma(&s, &v(&[1.1, 0.0])).unwrap();
        assert!(close(&q, &[1.0, 0.0], 1e-12));
        assert!((r - 0.21).abs() < 1e-15);
        let p = v(&[0.6, 0.8]);
        let (q, r) = retract_to_sigma(&s, &p).unwrap();
        assert!(close(&q, &[0.6, 0.8], 1e-12) && r.abs() < 1e-15);
        assert!(matches!(retract_to_sigma(&s, &v(&[2.0, 0.0])), Err(Error::RetractFailed(_))));
    }

    #[test]
    fn regularity_constant() {
        let c = m_h_estimate(&ProblemSetup::builtin("circle").unwrap(), 500).unwrap();
        assert!((c - 2.0).abs() < 1e-10);
        let e = m_h_estimate(&ProblemSetup::builtin("ellipse").unwrap(), 2000).unwrap();
        assert!((1.0 - 1e-12..1.0 + 1e-3).contains(&e), "{e}");
        let sp = m_h_estimate(&ProblemSetup::builtin("sphere").unwrap(), 500).unwrap();
        assert!((sp - 2.0).abs() < 1e-10);
    }
}
