use super::{BandedCholesky, PivotFailure, SparseMatrix};

/// Minimum-norm solutions of M x = b for a full-row-rank banded M, with norm
/// ‖x‖² = Σ w_i x_i². Factors the Gram matrix M W⁻¹ Mᵀ once.
#[derive(Clone, Debug)]
pub struct MinNormSolver {
    m: SparseMatrix,
    winv: Vec<f64>,
    scale: Vec<f64>,
    chol: BandedCholesky,
    /// Whether the factorization only succeeded after a diagonal shift.
    pub jitter_used: bool,
}

impl MinNormSolver {
    pub fn new(m: SparseMatrix, winv: Vec<f64>) -> Result<Self, PivotFailure> {
        let mut g = m.weighted_gram(&winv);
        let n = g.n();
        // Jacobi scaling: rows of very different magnitude (ε⁻² rows next to
        // O(1) rows) otherwise spoil the relative pivot test.
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let d = g.get(i, i);
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let bw = g.bandwidth();
        let mut scaled = super::BandedSym::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                scaled.add(i, j, g.get(i, j) * scale[i] * scale[j]);
            }
        }
        g = scaled;
        let (chol, jitter_used) = match BandedCholesky::factor(&g, 0.0, 1e-13) {
            Ok(c) => (c, false),
            Err(_) => {
                let jitter = 1e-14 * g.trace();
                (BandedCholesky::factor(&g, jitter, 0.0)?, true)
            }
        };
        Ok(Self {
            m,
            winv,
            scale,
            chol,
            jitter_used,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.m
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = b.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        self.chol.solve_in_place(&mut y);
        for (y, s) in y.iter_mut().zip(&self.scale) {
            *y *= s;
        }
        let mut x = self.m.tr_mul_vec(&y);
        for (x, w) in x.iter_mut().zip(&self.winv) {
            *x *= w;
        }
        x
    }

    /// x = W⁻¹Mᵀ(MW⁻¹Mᵀ)⁻¹ b, refined once against the residual.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(b);
        let r: Vec<f64> = self.m.mul_vec(&x).iter().zip(b).map(|(mx, b)| b - mx).collect();
        let dx = self.solve_once(&r);
        for (x, d) in x.iter_mut().zip(dx) {
            *x += d;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RowBuilder;

    #[test]
    fn minimum_norm_of_underdetermined_system() {
        // x0 + x1 = 2 with weights (1, 3): minimizer x = (1.5, 0.5).
        let mut b = RowBuilder::new(2);
        b.push(0, 1.0);
        b.push(1, 1.0);
        b.finish_row();
        let s = MinNormSolver::new(b.build(), vec![1.0, 1.0 / 3.0]).unwrap();
        let x = s.solve(&[2.0]);
        assert!((x[0] - 1.5).abs() < 1e-14 && (x[1] - 0.5).abs() < 1e-14);
        assert!(!s.jitter_used);
    }

    #[test]
    fn rank_deficient_rows_need_jitter() {
        let mut b = RowBuilder::new(2);
        for _ in 0..2 {
            b.push(0, 1.0);
            b.push(1, 2.0);
            b.finish_row();
        }
        let s = MinNormSolver::new(b.build(), vec![1.0, 1.0]).unwrap();
        assert!(s.jitter_used);
    }
}
