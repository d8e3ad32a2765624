//! Connecting trajectories of the constrained flow on Σ and of the ε-flow on
//! M × ℝ, their energies and residuals.

mod base;
mod energy;
mod eps;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use base::{integrate_base_flow, integrate_base_flow_with, polish_base_path, BaseFlowOptions};
pub use energy::{
    base_energy, energy_identity_residual, eps_energy, residual_section_base, residual_section_eps,
    EnergyReport,
};
pub use eps::{integrate_eps_flow, DenseTrajectory, EpsFlowOptions, EpsFlowResult};
pub(crate) use base::BaseBoundary;
pub(crate) use eps::linearization;

use crate::criticals::CriticalPoint;
use crate::error::{Error, Result};
use crate::grid::{Placement, TangentField, TimeGrid};
use crate::hypersurface::SurfaceFrame;
use crate::problem::ProblemSetup;

pub const BOUNDARY_TOL: f64 = 1e-4;

/// Discretized base trajectory q : [−T, T] → Σ.
#[derive(Clone, Debug)]
pub struct BasePath {
    pub grid: TimeGrid,
    pub points: Vec<DVector<f64>>,
    pub x_minus: CriticalPoint,
    pub x_plus: CriticalPoint,
    pub frames: Vec<SurfaceFrame>,
}

impl BasePath {
    pub fn new(
        setup: &ProblemSetup,
        grid: TimeGrid,
        points: Vec<DVector<f64>>,
        x_minus: CriticalPoint,
        x_plus: CriticalPoint,
    ) -> Result<Self> {
        if points.len() != grid.n + 1 {
            return Err(Error::Config(format!(
                "path has {} points for a grid of {} intervals",
                points.len(),
                grid.n
            )));
        }
        let frames = points
            .iter()
            .enumerate()
            .map(|(j, q)| {
                SurfaceFrame::at(setup, q).map_err(|e| match e {
                    Error::FrameDegenerate(_) => Error::FrameDegenerate(j),
                    e => e,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            points,
            x_minus,
            x_plus,
            frames,
        })
    }

    /// Constant path at a critical point.
    pub fn stationary(setup: &ProblemSetup, grid: TimeGrid, x: &CriticalPoint) -> Result<Self> {
        Self::new(setup, grid, vec![x.x.clone(); grid.n + 1], x.clone(), x.clone())
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Window of `n` intervals starting at node `start`, re-centred so the
    /// window's middle node is s = 0.
    pub fn window(&self, setup: &ProblemSetup, start: usize, n: usize) -> Result<Self> {
        let grid = TimeGrid::new(0.5 * n as f64 * self.grid.ds(), n)?;
        Self::new(
            setup,
            grid,
            self.points[start..=start + n].to_vec(),
            self.x_minus.clone(),
            self.x_plus.clone(),
        )
    }

    /// Largest distance of the end points from their critical labels.
    pub fn boundary_deviation(&self) -> (f64, f64) {
        (
            (&self.points[0] - &self.x_minus.x).norm(),
            (&self.points[self.grid.n] - &self.x_plus.x).norm(),
        )
    }

    /// χ(q_j) at every node.
    pub fn chi(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.chi).collect()
    }

    /// Discrete multipliers σ_{j+½} of the box scheme; on a discrete solution
    /// Δq/ds + avg∇F + σ·avg∇H = 0 on every interval.
    pub fn multipliers(&self) -> Result<Vec<f64>> {
        let ds = self.grid.ds();
        self.frames
            .windows(2)
            .map(|w| base::interval_data(&w[0], &w[1], ds).map(|d| d.2))
            .collect()
    }

    /// Central differences of q at interior nodes, one-sided at the ends.
    pub fn velocity(&self) -> Vec<DVector<f64>> {
        central_differences(&self.points, self.grid.ds())
    }
}

pub(crate) fn central_differences(p: &[DVector<f64>], ds: f64) -> Vec<DVector<f64>> {
    let n = p.len() - 1;
    (0..=n)
        .map(|j| match j {
            0 => (&p[1] - &p[0]) / ds,
            j if j == n => (&p[n] - &p[n - 1]) / ds,
            j => (&p[j + 1] - &p[j - 1]) / (2.0 * ds),
        })
        .collect()
}

/// Discretized ε-trajectory z = (u, τ); u at the nodes, τ at the half-nodes.
#[derive(Clone, Debug)]
pub struct AmbientPath {
    pub grid: TimeGrid,
    pub u: Vec<DVector<f64>>,
    pub tau: Vec<f64>,
    pub x_minus: CriticalPoint,
    pub x_plus: CriticalPoint,
}

impl AmbientPath {
    /// (q, τ) with u = q at the nodes and the given half-node multipliers.
    pub fn embedded(path: &BasePath, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != path.grid.n {
            return Err(Error::Config(format!(
                "{} multipliers for {} intervals",
                tau.len(),
                path.grid.n
            )));
        }
        Ok(Self {
            grid: path.grid,
            u: path.points.clone(),
            tau,
            x_minus: path.x_minus.clone(),
            x_plus: path.x_plus.clone(),
        })
    }

    /// Canonical embedding (q, χ(q)), χ averaged onto the half-nodes.
    pub fn embed_chi(path: &BasePath) -> Self {
        let chi = path.chi();
        let tau = chi.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::embedded(path, tau).expect("one multiplier per interval")
    }

    /// τ interpolated to the nodes.
    pub fn tau_nodes(&self) -> Vec<f64> {
        let n = self.grid.n;
        (0..=n)
            .map(|j| match j {
                0 => self.tau[0],
                j if j == n => self.tau[n - 1],
                j => 0.5 * (self.tau[j - 1] + self.tau[j]),
            })
            .collect()
    }

    /// Distances of (u, τ) at ±T from (x∓, χ(x∓)).
    pub fn boundary_deviation(&self) -> (f64, f64) {
        let n = self.grid.n;
        let l = ((&self.u[0] - &self.x_minus.x).norm_squared() + (self.tau[0] - self.x_minus.tau).powi(2)).sqrt();
        let r = ((&self.u[n] - &self.x_plus.x).norm_squared()
            + (self.tau[n - 1] - self.x_plus.tau).powi(2))
        .sqrt();
        (l, r)
    }

    /// ∂_s z in the staggered layout: central differences of u at the nodes
    /// and of τ at the half-nodes, one-sided at the ends.
    pub fn velocity(&self) -> TangentField {
        let ds = self.grid.ds();
        let mut out = TangentField::zeros(self.grid, self.u[0].len(), Placement::HalfNodes);
        out.x = central_differences(&self.u, ds);
        let tau: Vec<DVector<f64>> = self.tau.iter().map(|t| DVector::from_element(1, *t)).collect();
        out.ell = central_differences(&tau, ds).iter().map(|v| v[0]).collect();
        out
    }

    /// F_H(u_j, τ_j) at the nodes.
    pub fn lagrangian_values(&self, setup: &ProblemSetup) -> Result<Vec<f64>> {
        self.u
            .iter()
            .zip(self.tau_nodes())
            .map(|(u, t)| setup.lagrangian(u.as_slice(), t))
            .collect()
    }
}

/// Eigenvectors of a symmetric matrix split by the sign of their eigenvalue:
/// (negative, positive), each sorted by increasing |eigenvalue|.
pub(crate) fn signed_eigenvectors(a: &DMatrix<f64>) -> (Vec<(f64, DVector<f64>)>, Vec<(f64, DVector<f64>)>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k).into_owned();
        if l < 0.0 {
            neg.push((l, v));
        } else {
            pos.push((l, v));
        }
    }
    neg.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    pos.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    (neg, pos)
}

/// Cubic Hermite interpolation between (y0, d0) at 0 and (y1, d1) at h.
pub(crate) fn hermite(y0: &DVector<f64>, d0: &DVector<f64>, y1: &DVector<f64>, d1: &DVector<f64>, h: f64, t: f64) -> DVector<f64> {
    let x = t / h;
    let h00 = 2.0 * x.powi(3) - 3.0 * x * x + 1.0;
    let h10 = x.powi(3) - 2.0 * x * x + x;
    let h01 = -2.0 * x.powi(3) + 3.0 * x * x;
    let h11 = x.powi(3) - x * x;
    y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h)
}
