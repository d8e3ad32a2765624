//! Smooth random test fields. Every field is a short random Fourier series
//! times the envelope (1 − (s/T)²)², so it vanishes with its derivative at
//! ±T and satisfies any homogeneous boundary condition there.

use nalgebra::DVector;
use rand::Rng;

use crate::flows::BasePath;
use crate::grid::{Placement, ResidualField, Tangency, TangentField, TimeGrid};

const MODES: usize = 4;
/// Largest angular frequency of a mode.
const MAX_FREQ: f64 = 3.0;

/// Random smooth function of s with values in ℝ^dim, sampled at `points`.
pub fn smooth_samples<R: Rng + ?Sized>(grid: TimeGrid, points: &[f64], dim: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let modes: Vec<(f64, f64, DVector<f64>)> = (0..MODES)
        .map(|_| {
            let w = rng.random_range(0.0..MAX_FREQ);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let a = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            (w, phase, a)
        })
        .collect();
    points
        .iter()
        .map(|&s| {
            let r = s / grid.t;
            let env = (1.0 - r * r).max(0.0).powi(2);
            let mut v = DVector::zeros(dim);
            for (w, phase, a) in &modes {
                v.axpy(env * (w * s + phase).cos(), a, 1.0);
            }
            v
        })
        .collect()
}

fn nodes(grid: TimeGrid) -> Vec<f64> {
    (0..=grid.n).map(|j| grid.node(j)).collect()
}

fn halves(grid: TimeGrid) -> Vec<f64> {
    (0..grid.n).map(|j| grid.half(j)).collect()
}

/// Ambient field (X, ℓ) with ℓ at the half-nodes, the operator-domain layout.
pub fn random_ambient_field<R: Rng + ?Sized>(grid: TimeGrid, m: usize, rng: &mut R) -> TangentField {
    let mut z = TangentField::zeros(grid, m, Placement::HalfNodes);
    z.x = smooth_samples(grid, &nodes(grid), m, rng);
    z.ell = smooth_samples(grid, &halves(grid), 1, rng).iter().map(|v| v[0]).collect();
    z
}

/// Ambient field with both parts at the nodes.
pub fn random_node_field<R: Rng + ?Sized>(grid: TimeGrid, m: usize, rng: &mut R) -> TangentField {
    let mut z = TangentField::zeros(grid, m, Placement::Nodes);
    let pts = nodes(grid);
    z.x = smooth_samples(grid, &pts, m, rng);
    z.ell = smooth_samples(grid, &pts, 1, rng).iter().map(|v| v[0]).collect();
    z
}

/// Σ-tangent field along a base path (ℓ = 0, nodes).
pub fn random_tangent_field<R: Rng + ?Sized>(path: &BasePath, rng: &mut R) -> TangentField {
    let mut z = TangentField::zeros(path.grid, path.dim(), Placement::Nodes);
    z.x = smooth_samples(path.grid, &nodes(path.grid), path.dim(), rng)
        .iter()
        .zip(&path.frames)
        .map(|(v, f)| f.tan(v))
        .collect();
    z.tangency = Tangency::SigmaTangent;
    z
}

/// Codomain field (V at half-nodes, h at interior nodes).
pub fn random_residual_field<R: Rng + ?Sized>(grid: TimeGrid, m: usize, rng: &mut R) -> ResidualField {
    let mut r = ResidualField::zeros(grid, m);
    r.v = smooth_samples(grid, &halves(grid), m, rng);
    let h = smooth_samples(grid, &nodes(grid), 1, rng);
    for j in 1..grid.n {
        r.h[j] = h[j][0];
    }
    r
}

/// Vector of independent uniform entries in [−1, 1].
pub fn random_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}
