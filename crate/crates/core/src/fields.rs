//! Scalar fields on ℝ^m: exact polynomial calculus with a finite-difference
//! fallback for callback fields.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Scalar};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar types the field calculus is generic over.
pub trait Real: Float + FromPrimitive + Scalar + Send + Sync + fmt::Debug + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A monomial `coef · Π p_i^{exps_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial<T> {
    pub exps: Vec<u32>,
    pub coef: T,
}

type ValueFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
type GradFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind<T> {
    Polynomial(Vec<Monomial<T>>),
    /// Value closure plus an optional analytic gradient.
    Callback {
        value: ValueFn<T>,
        grad: Option<GradFn<T>>,
    },
}

impl<T: Real> fmt::Debug for FieldKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Polynomial(m) => f.debug_tuple("Polynomial").field(m).finish(),
            FieldKind::Callback { grad, .. } => f
                .debug_struct("Callback")
                .field("analytic_grad", &grad.is_some())
                .finish(),
        }
    }
}

/// A smooth function ℝ^m → ℝ. Immutable after construction.
#[derive(Clone, Debug)]
pub struct ScalarField<T: Real = f64> {
    dim: usize,
    kind: FieldKind<T>,
    fd_step: T,
}

/// JSON form of a polynomial field.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PolynomialSpec {
    pub dim: usize,
    pub monomials: Vec<MonomialSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MonomialSpec {
    pub exps: Vec<u32>,
    pub coef: f64,
}

/// Outcome of [`ScalarField::derivative_check`].
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeReport {
    pub n_points: usize,
    pub max_grad_deviation: f64,
    pub max_hess_deviation: f64,
    pub worst_point: Vec<f64>,
    pub tol: f64,
}

impl<T: Real> ScalarField<T> {
    pub fn polynomial(dim: usize, monomials: Vec<Monomial<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("field dimension must be positive".into()));
        }
        if let Some(m) = monomials.iter().find(|m| m.exps.len() != dim) {
            return Err(Error::Config(format!(
                "monomial {:?} has {} exponents, expected {dim}",
                m.exps,
                m.exps.len()
            )));
        }
        Ok(Self {
            dim,
            kind: FieldKind::Polynomial(monomials),
            fd_step: T::lit(1e-6),
        })
    }

    /// Convenience constructor from `(exponents, coefficient)` pairs.
    pub fn from_terms(dim: usize, terms: &[(&[u32], f64)]) -> Result<Self> {
        let monomials = terms
            .iter()
            .map(|(e, c)| Monomial {
                exps: e.to_vec(),
                coef: T::lit(*c),
            })
            .collect();
        Self::polynomial(dim, monomials)
    }

    pub fn callback<V>(dim: usize, value: V) -> Self
    where
        V: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        Self {
            dim,
            kind: FieldKind::Callback {
                value: Arc::new(value),
                grad: None,
            },
            fd_step: T::lit(1e-6),
        }
    }

    pub fn callback_with_grad<V, G>(dim: usize, value: V, grad: G) -> Self
    where
        V: Fn(&[T]) -> T + Send + Sync + 'static,
        G: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        Self {
            dim,
            kind: FieldKind::Callback {
                value: Arc::new(value),
                grad: Some(Arc::new(grad)),
            },
            fd_step: T::lit(1e-6),
        }
    }

    pub fn with_fd_step(mut self, h: T) -> Self {
        self.fd_step = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FieldKind<T> {
        &self.kind
    }

    pub fn fd_step(&self) -> T {
        self.fd_step
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.kind, FieldKind::Polynomial(_))
    }

    fn check_point(&self, p: &[T]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::Config(format!(
                "point has dimension {}, field expects {}",
                p.len(),
                self.dim
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("field argument".into()));
        }
        Ok(())
    }

    fn raw_eval(&self, p: &[T]) -> T {
        match &self.kind {
            FieldKind::Polynomial(ms) => ms.iter().fold(T::zero(), |acc, m| {
                acc + m.coef * monomial_value(&m.exps, p, None)
            }),
            FieldKind::Callback { value, .. } => value(p),
        }
    }

    pub fn eval(&self, p: &[T]) -> Result<T> {
        self.check_point(p)?;
        let v = self.raw_eval(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical("field value".into()))
        }
    }

    pub fn grad(&self, p: &[T]) -> Result<DVector<T>> {
        self.check_point(p)?;
        let g = match &self.kind {
            FieldKind::Polynomial(ms) => self.poly_grad(ms, p),
            FieldKind::Callback { grad: Some(g), .. } => DVector::from_vec(g(p)),
            FieldKind::Callback { grad: None, .. } => self.fd_grad(p),
        };
        if g.len() != self.dim || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("field gradient".into()));
        }
        Ok(g)
    }

    pub fn hess(&self, p: &[T]) -> Result<DMatrix<T>> {
        self.check_point(p)?;
        let h = match &self.kind {
            FieldKind::Polynomial(ms) => self.poly_hess(ms, p),
            FieldKind::Callback { .. } => self.fd_hess(p),
        };
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("field Hessian".into()));
        }
        Ok(h)
    }

    fn poly_grad(&self, ms: &[Monomial<T>], p: &[T]) -> DVector<T> {
        let mut g = DVector::from_element(self.dim, T::zero());
        for m in ms {
            for i in 0..self.dim {
                if m.exps[i] == 0 {
                    continue;
                }
                let e = T::from_u32(m.exps[i]).unwrap();
                g[i] = g[i] + m.coef * e * monomial_value(&m.exps, p, Some((i, 1)));
            }
        }
        g
    }

    fn poly_hess(&self, ms: &[Monomial<T>], p: &[T]) -> DMatrix<T> {
        let n = self.dim;
        let mut h = DMatrix::from_element(n, n, T::zero());
        for m in ms {
            for i in 0..n {
                for j in i..n {
                    let v = if i == j {
                        let e = m.exps[i];
                        if e < 2 {
                            continue;
                        }
                        T::from_u32(e * (e - 1)).unwrap()
                            * monomial_value(&m.exps, p, Some((i, 2)))
                    } else {
                        if m.exps[i] == 0 || m.exps[j] == 0 {
                            continue;
                        }
                        let mut e = m.exps.clone();
                        e[i] -= 1;
                        let c = T::from_u32(m.exps[i] * m.exps[j]).unwrap();
                        c * monomial_value(&e, p, Some((j, 1)))
                    };
                    h[(i, j)] = h[(i, j)] + m.coef * v;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    /// Central-difference gradient with step `fd_step`.
    pub fn fd_grad(&self, p: &[T]) -> DVector<T> {
        let h = self.fd_step;
        let two = T::lit(2.0);
        let mut x = p.to_vec();
        DVector::from_fn(self.dim, |i, _| {
            let xi = x[i];
            x[i] = xi + h;
            let fp = self.raw_eval(&x);
            x[i] = xi - h;
            let fm = self.raw_eval(&x);
            x[i] = xi;
            (fp - fm) / (two * h)
        })
    }

    /// Second-order central stencil. The step is `fd_step^{2/3}`, which
    /// balances truncation against roundoff for a second difference.
    pub fn fd_hess(&self, p: &[T]) -> DMatrix<T> {
        let h = self.fd_step.powf(T::lit(2.0 / 3.0));
        let n = self.dim;
        let f0 = self.raw_eval(p);
        let mut x = p.to_vec();
        let mut out = DMatrix::from_element(n, n, T::zero());
        for i in 0..n {
            let xi = x[i];
            x[i] = xi + h;
            let fp = self.raw_eval(&x);
            x[i] = xi - h;
            let fm = self.raw_eval(&x);
            x[i] = xi;
            out[(i, i)] = (fp - T::lit(2.0) * f0 + fm) / (h * h);
            for j in 0..i {
                let xj = x[j];
                let mut quad = [T::zero(); 4];
                for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                    .iter()
                    .enumerate()
                {
                    x[i] = xi + T::lit(*si) * h;
                    x[j] = xj + T::lit(*sj) * h;
                    quad[k] = self.raw_eval(&x);
                }
                x[i] = xi;
                x[j] = xj;
                let v = (quad[0] - quad[1] - quad[2] + quad[3]) / (T::lit(4.0) * h * h);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Compares the field's own derivatives against finite differences at
    /// `n_points` random points of the box `[-2, 2]^m`. Deviations are
    /// measured relative to `max(1, |value|)` entrywise.
    pub fn derivative_check<R: Rng + ?Sized>(
        &self,
        n_points: usize,
        tol: f64,
        rng: &mut R,
    ) -> Result<DerivativeReport> {
        if n_points == 0 {
            return Err(Error::Config("derivative_check needs n_points >= 1".into()));
        }
        let mut report = DerivativeReport {
            n_points,
            max_grad_deviation: 0.0,
            max_hess_deviation: 0.0,
            worst_point: vec![0.0; self.dim],
            tol,
        };
        let mut worst = 0.0;
        for _ in 0..n_points {
            let p: Vec<T> = (0..self.dim)
                .map(|_| T::lit(rng.random_range(-2.0..2.0)))
                .collect();
            let g = self.grad(&p)?;
            let gfd = self.fd_grad(&p);
            let dg = rel_dev(g.iter().copied(), gfd.iter().copied());
            // Callback Hessians are themselves finite differences, so only
            // polynomial fields have an independent Hessian to compare.
            let dh = if self.is_polynomial() {
                let h = self.hess(&p)?;
                rel_dev(h.iter().copied(), self.fd_hess(&p).iter().copied())
            } else {
                0.0
            };
            report.max_grad_deviation = report.max_grad_deviation.max(dg);
            report.max_hess_deviation = report.max_hess_deviation.max(dh);
            if dg.max(dh) > worst {
                worst = dg.max(dh);
                report.worst_point = p.iter().map(|x| x.to_f64().unwrap()).collect();
            }
        }
        if worst > tol {
            return Err(Error::CheckFailed {
                point: report.worst_point,
                deviation: worst,
                tol,
            });
        }
        Ok(report)
    }
}

impl ScalarField<f64> {
    pub fn from_spec(spec: &PolynomialSpec) -> Result<Self> {
        let ms = spec
            .monomials
            .iter()
            .map(|m| Monomial {
                exps: m.exps.clone(),
                coef: m.coef,
            })
            .collect();
        Self::polynomial(spec.dim, ms)
    }

    /// Polynomial fields only; callbacks have no serialized form.
    pub fn to_spec(&self) -> Option<PolynomialSpec> {
        match &self.kind {
            FieldKind::Polynomial(ms) => Some(PolynomialSpec {
                dim: self.dim,
                monomials: ms
                    .iter()
                    .map(|m| MonomialSpec {
                        exps: m.exps.clone(),
                        coef: m.coef,
                    })
                    .collect(),
            }),
            FieldKind::Callback { .. } => None,
        }
    }

    /// Maximum total degree of a polynomial field.
    pub fn degree(&self) -> Option<u32> {
        match &self.kind {
            FieldKind::Polynomial(ms) => {
                Some(ms.iter().map(|m| m.exps.iter().sum()).max().unwrap_or(0))
            }
            FieldKind::Callback { .. } => None,
        }
    }
}

/// Value of `Π p_i^{e_i}` with the exponent of one variable lowered by `drop`.
fn monomial_value<T: Real>(exps: &[u32], p: &[T], drop: Option<(usize, u32)>) -> T {
    let mut v = T::one();
    for (i, (&e, &x)) in exps.iter().zip(p).enumerate() {
        let e = match drop {
            Some((k, d)) if k == i => e - d,
            _ => e,
        };
        if e > 0 {
            v = v * x.powi(e as i32);
        }
    }
    v
}

fn rel_dev<T: Real>(a: impl Iterator<Item = T>, b: impl Iterator<Item = T>) -> f64 {
    a.zip(b)
        .map(|(x, y)| {
            let (x, y) = (x.to_f64().unwrap(), y.to_f64().unwrap());
            (x - y).abs() / x.abs().max(1.0)
        })
        .fold(0.0, f64::max)
}
