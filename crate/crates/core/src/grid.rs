//! Uniform time grids on [−T, T] and the grid fields living on them.
//!
//! Operator domains use a staggered layout: the vector part X sits at the
//! N+1 nodes s_j and the scalar part ℓ at the N half-nodes s_{j+½}. Operator
//! codomains ([`ResidualField`]) hold the first row at half-nodes and the
//! second row at interior nodes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl TimeGrid {
    /// `n` must be even so that s = 0 is a node.
    pub fn new(t: f64, n: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config(format!("grid half-width T = {t} must be positive")));
        }
        if n < 16 {
            return Err(Error::Config(format!("grid needs N >= 16 intervals, got {n}")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::Config(format!("grid needs an even N, got {n}")));
        }
        Ok(Self { t, n })
    }

    pub fn ds(&self) -> f64 {
        2.0 * self.t / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.t + j as f64 * self.ds()
    }

    /// s_{j+½}.
    pub fn half(&self, j: usize) -> f64 {
        -self.t + (j as f64 + 0.5) * self.ds()
    }

    /// Index of the node s = 0.
    pub fn mid(&self) -> usize {
        self.n / 2
    }

    /// Trapezoid quadrature weight of node j.
    pub fn trap(&self, j: usize) -> f64 {
        if j == 0 || j == self.n {
            0.5 * self.ds()
        } else {
            self.ds()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tangency {
    SigmaTangent,
    Ambient,
}

/// Where the scalar component ℓ is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    Nodes,
    HalfNodes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    /// ‖X‖² + ε²‖ℓ‖².
    N02,
    /// ‖X‖² + ε²‖ℓ‖² + ε²‖X'‖² + ε⁴‖ℓ'‖².
    N12,
    /// ‖X‖∞ + ε‖ℓ‖∞.
    N0Inf,
}

/// A pair Z = (X, ℓ) along a path.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub ell: Vec<f64>,
    pub placement: Placement,
    pub tangency: Tangency,
}

impl TangentField {
    pub fn zeros(grid: TimeGrid, m: usize, placement: Placement) -> Self {
        let nl = match placement {
            Placement::Nodes => grid.n + 1,
            Placement::HalfNodes => grid.n,
        };
        Self {
            grid,
            x: vec![DVector::zeros(m); grid.n + 1],
            ell: vec![0.0; nl],
            placement,
            tangency: Tangency::Ambient,
        }
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Same field with ℓ moved to the nodes (interior nodes average the two
    /// neighbouring half-node values, end nodes copy the nearest one).
    pub fn to_nodes(&self) -> Self {
        match self.placement {
            Placement::Nodes => self.clone(),
            Placement::HalfNodes => {
                let n = self.grid.n;
                let ell = (0..=n)
                    .map(|j| match j {
                        0 => self.ell[0],
                        j if j == n => self.ell[n - 1],
                        j => 0.5 * (self.ell[j - 1] + self.ell[j]),
                    })
                    .collect();
                Self {
                    ell,
                    placement: Placement::Nodes,
                    ..self.clone()
                }
            }
        }
    }

    pub fn x_l2_sq(&self) -> f64 {
        (0..=self.grid.n).map(|j| self.grid.trap(j) * self.x[j].norm_squared()).sum()
    }

    pub fn ell_l2_sq(&self) -> f64 {
        let ds = self.grid.ds();
        match self.placement {
            Placement::Nodes => (0..=self.grid.n).map(|j| self.grid.trap(j) * self.ell[j].powi(2)).sum(),
            Placement::HalfNodes => self.ell.iter().map(|l| ds * l * l).sum(),
        }
    }

    pub fn x_deriv_l2_sq(&self) -> f64 {
        let ds = self.grid.ds();
        self.x.windows(2).map(|w| (&w[1] - &w[0]).norm_squared() / ds).sum()
    }

    pub fn ell_deriv_l2_sq(&self) -> f64 {
        let ds = self.grid.ds();
        self.ell.windows(2).map(|w| (w[1] - w[0]).powi(2) / ds).sum()
    }

    pub fn x_inf(&self) -> f64 {
        self.x.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// Max of the Euclidean norms |X_j|.
    pub fn x_sup(&self) -> f64 {
        self.x.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn ell_inf(&self) -> f64 {
        self.ell.iter().fold(0.0, |m, l| m.max(l.abs()))
    }

    pub fn eps_norm(&self, eps: f64, which: NormKind) -> f64 {
        let e2 = eps * eps;
        match which {
            NormKind::N02 => (self.x_l2_sq() + e2 * self.ell_l2_sq()).sqrt(),
            NormKind::N12 => (self.x_l2_sq()
                + e2 * self.ell_l2_sq()
                + e2 * self.x_deriv_l2_sq()
                + e2 * e2 * self.ell_deriv_l2_sq())
            .sqrt(),
            NormKind::N0Inf => self.x_sup() + eps * self.ell_inf(),
        }
    }

    /// (0,2,ε) inner product; both fields must share grid and placement.
    pub fn dot(&self, other: &Self, eps: f64) -> f64 {
        debug_assert_eq!(self.placement, other.placement);
        let xs: f64 = (0..=self.grid.n)
            .map(|j| self.grid.trap(j) * self.x[j].dot(&other.x[j]))
            .sum();
        let ls: f64 = match self.placement {
            Placement::Nodes => (0..=self.grid.n)
                .map(|j| self.grid.trap(j) * self.ell[j] * other.ell[j])
                .sum(),
            Placement::HalfNodes => self
                .ell
                .iter()
                .zip(&other.ell)
                .map(|(a, b)| self.grid.ds() * a * b)
                .sum(),
        };
        xs + eps * eps * ls
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.x.iter_mut().zip(&other.x) {
            x.axpy(a, y, 1.0);
        }
        for (l, k) in self.ell.iter_mut().zip(&other.ell) {
            *l += a * k;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.x.iter_mut().for_each(|x| *x *= a);
        out.ell.iter_mut().for_each(|l| *l *= a);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Flattened coordinates in the staggered operator-domain ordering
    /// (X_0, ℓ_½, X_1, ℓ_{3/2}, …, X_N).
    pub fn to_flat(&self) -> DVector<f64> {
        assert_eq!(self.placement, Placement::HalfNodes);
        let m = self.dim();
        let n = self.grid.n;
        let mut out = DVector::zeros(n * (m + 1) + m);
        for j in 0..=n {
            out.rows_mut(j * (m + 1), m).copy_from(&self.x[j]);
            if j < n {
                out[j * (m + 1) + m] = self.ell[j];
            }
        }
        out
    }

    pub fn from_flat(grid: TimeGrid, m: usize, v: &DVector<f64>) -> Self {
        let n = grid.n;
        assert_eq!(v.len(), n * (m + 1) + m);
        Self {
            grid,
            x: (0..=n).map(|j| v.rows(j * (m + 1), m).into_owned()).collect(),
            ell: (0..n).map(|j| v[j * (m + 1) + m]).collect(),
            placement: Placement::HalfNodes,
            tangency: Tangency::Ambient,
        }
    }
}

/// Element of an operator codomain: V at the N half-nodes and h at the
/// interior nodes (h[0] and h[N] are unused and kept at zero).
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField {
    pub grid: TimeGrid,
    pub v: Vec<DVector<f64>>,
    pub h: Vec<f64>,
}

impl ResidualField {
    pub fn zeros(grid: TimeGrid, m: usize) -> Self {
        Self {
            grid,
            v: vec![DVector::zeros(m); grid.n],
            h: vec![0.0; grid.n + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.v[0].len()
    }

    pub fn v_l2_sq(&self) -> f64 {
        self.grid.ds() * self.v.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    pub fn h_l2_sq(&self) -> f64 {
        self.grid.ds() * self.h.iter().map(|h| h * h).sum::<f64>()
    }

    /// (0,2,ε) norm.
    pub fn norm(&self, eps: f64) -> f64 {
        (self.v_l2_sq() + eps * eps * self.h_l2_sq()).sqrt()
    }

    /// Flattened coordinates (V_½, h_1, V_{3/2}, h_2, …, V_{N−½}).
    pub fn to_flat(&self) -> DVector<f64> {
        let m = self.dim();
        let n = self.grid.n;
        let mut out = DVector::zeros(n * (m + 1) - 1);
        for j in 0..n {
            out.rows_mut(j * (m + 1), m).copy_from(&self.v[j]);
            if j + 1 < n {
                out[j * (m + 1) + m] = self.h[j + 1];
            }
        }
        out
    }

    pub fn from_flat(grid: TimeGrid, m: usize, r: &DVector<f64>) -> Self {
        let n = grid.n;
        assert_eq!(r.len(), n * (m + 1) - 1);
        let mut h = vec![0.0; n + 1];
        for (j, hj) in h.iter_mut().enumerate().take(n).skip(1) {
            *hj = r[(j - 1) * (m + 1) + m];
        }
        Self {
            grid,
            v: (0..n).map(|j| r.rows(j * (m + 1), m).into_owned()).collect(),
            h,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(12.0, 8).is_err());
        assert!(TimeGrid::new(12.0, 17).is_err());
        assert!(TimeGrid::new(-1.0, 32).is_err());
        let g = TimeGrid::new(12.0, 1200).unwrap();
        assert!((g.ds() - 0.02).abs() < 1e-15);
        assert_eq!(g.node(g.mid()), 0.0);
    }

    #[test]
    fn norm_scalings() {
        let g = TimeGrid::new(4.0, 400).unwrap();
        let mut z = TangentField::zeros(g, 2, Placement::HalfNodes);
        for j in 0..=g.n {
            let s = g.node(j);
            z.x[j][0] = (-s * s).exp();
        }
        let n_x = z.eps_norm(0.3, NormKind::N02);
        assert!((n_x - z.eps_norm(1.0, NormKind::N02)).abs() < 1e-15);

        let mut w = TangentField::zeros(g, 2, Placement::HalfNodes);
        for j in 0..g.n {
            w.ell[j] = (-(g.half(j)).powi(4)).exp();
        }
        let l = w.ell_l2_sq().sqrt();
        assert!((w.eps_norm(0.1, NormKind::N02) - 0.1 * l).abs() < 1e-15);
    }

    #[test]
    fn flat_round_trips() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let v = DVector::from_fn(16 * 3 + 2, |i, _| i as f64);
        let z = TangentField::from_flat(g, 2, &v);
        assert_eq!(z.to_flat(), v);
        let r = DVector::from_fn(16 * 3 - 1, |i, _| i as f64);
        assert_eq!(ResidualField::from_flat(g, 2, &r).to_flat(), r);
    }
}
