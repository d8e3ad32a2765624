use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::operator::LinearOperator;
use crate::error::{Error, Result};
use crate::linalg::{BandedCholesky, BandedSym, RowBuilder, SparseMatrix};

pub const DEFAULT_RANK_TOL: f64 = 1e-7;
/// Required separation factor between the rank threshold and the nearest
/// singular value on either side.
const GAP_FACTOR: f64 = 10.0;
/// Number of smallest singular values resolved.
const SMALLEST: usize = 6;

#[derive(Clone, Debug, Serialize)]
pub struct FredholmReport {
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub index: i64,
    pub sigma_max: f64,
    /// Smallest singular values divided by σ_max, ascending.
    pub smallest_relative: Vec<f64>,
    pub rank_tol: f64,
    /// A kernel element in domain coordinates when the kernel is nontrivial.
    #[serde(skip)]
    pub kernel: Option<DVector<f64>>,
}

/// Weighted operator restricted to the boundary-constrained domain, written
/// in orthonormal coordinates on both sides.
struct Reduced {
    mat: SparseMatrix,
    /// Columns of the original domain: either a scaled copy of one reduced
    /// coordinate or part of a block with a dense basis.
    direct: Vec<Option<(usize, f64)>>,
    blocks: Vec<(usize, DMatrix<f64>, usize)>,
}

impl Reduced {
    fn new(op: &LinearOperator) -> Self {
        let nd = op.domain_dim();
        let w = &op.weight_domain;
        let mut direct: Vec<Option<(usize, f64)>> = vec![None; nd];
        let mut blocks = Vec::new();
        let mut sorted: Vec<_> = op.boundary.iter().collect();
        sorted.sort_by_key(|b| b.offset);
        let mut next = 0;
        let mut col = 0;
        for blk in sorted {
            while col < blk.offset {
                direct[col] = Some((next, 1.0 / w[col].sqrt()));
                next += 1;
                col += 1;
            }
            let width = blk.width();
            let c = blk.rows.nrows();
            // Orthonormal basis of the null space of C W^{-1/2}.
            let cw = DMatrix::from_fn(c, width, |r, k| blk.rows[(r, k)] / w[blk.offset + k].sqrt());
            let eig = SymmetricEigen::new(cw.transpose() * &cw);
            let mut order: Vec<usize> = (0..width).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let free = width - c;
            let basis = DMatrix::from_fn(width, free, |k, r| {
                eig.eigenvectors[(k, order[r])] / w[blk.offset + k].sqrt()
            });
            blocks.push((blk.offset, basis, next));
            next += free;
            col = blk.offset + width;
        }
        while col < nd {
            direct[col] = Some((next, 1.0 / w[col].sqrt()));
            next += 1;
            col += 1;
        }
        let mut b = RowBuilder::new(next);
        for i in 0..op.codomain_dim() {
            let sw = op.weight_codomain[i].sqrt();
            let mut dense: Vec<DVector<f64>> = blocks.iter().map(|bk| DVector::zeros(bk.1.ncols())).collect();
            let mut touched = vec![false; blocks.len()];
            for (c, v) in op.matrix.row(i) {
                if let Some((r, s)) = direct[c] {
                    b.push(r, sw * v * s);
                    continue;
                }
                let k = blocks
                    .iter()
                    .position(|bk| (bk.0..bk.0 + bk.1.nrows()).contains(&c))
                    .expect("column lies in a boundary block");
                let row = blocks[k].1.row(c - blocks[k].0).transpose();
                dense[k].axpy(sw * v, &row, 1.0);
                touched[k] = true;
            }
            for k in 0..blocks.len() {
                if touched[k] {
                    for (r, v) in dense[k].iter().enumerate() {
                        b.push(blocks[k].2 + r, *v);
                    }
                }
            }
            b.finish_row();
        }
        Self {
            mat: b.build(),
            direct,
            blocks,
        }
    }

    /// Maps reduced coordinates back to domain coordinates.
    fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.direct.len());
        for (c, d) in self.direct.iter().enumerate() {
            if let Some((r, s)) = d {
                out[c] = y[*r] * s;
            }
        }
        for (off, basis, start) in &self.blocks {
            let seg = basis * y.rows(*start, basis.ncols());
            out.rows_mut(*off, basis.nrows()).copy_from(&seg);
        }
        out
    }
}

/// Gram matrix with a factorization that tolerates (near) singularity.
struct Gram {
    g: BandedSym,
    chol: BandedCholesky,
}

impl Gram {
    fn new(g: BandedSym) -> Result<Self> {
        let chol = match BandedCholesky::factor(&g, 0.0, 0.0) {
            Ok(c) => c,
            Err(_) => BandedCholesky::factor(&g, 1e-14 * g.trace(), 0.0)
                .map_err(|e| Error::Numerical(format!("Gram factorization failed at pivot {}", e.0)))?,
        };
        Ok(Self { g, chol })
    }

    fn n(&self) -> usize {
        self.g.n()
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.g.mul_vec(x.as_slice()))
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.as_slice().to_vec();
        self.chol.solve_in_place(&mut x);
        DVector::from_vec(x)
    }

    fn largest_eigenvalue(&self) -> f64 {
        let n = self.n();
        let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
        x /= x.norm();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let y = self.mul(&x);
            let l = x.dot(&y);
            x = &y / y.norm();
            if (l - lambda).abs() <= 1e-10 * l {
                return l;
            }
            lambda = l;
        }
        lambda
    }

    /// Smallest `k` eigenvalues by subspace inverse iteration with a final
    /// Rayleigh–Ritz step, ascending.
    fn smallest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let n = self.n();
        let k = k.min(n);
        let mut x = DMatrix::from_fn(n, k, |i, c| (((i + 1) * (c + 3)) as f64 * 0.7548776662).sin());
        for _ in 0..60 {
            for c in 0..k {
                let col = self.solve(&x.column(c).into_owned());
                x.set_column(c, &col);
            }
            x = x.qr().q();
        }
        let mut gx = DMatrix::zeros(n, k);
        for c in 0..k {
            gx.set_column(c, &self.mul(&x.column(c).into_owned()));
        }
        let h = x.transpose() * gx;
        let mut ev: Vec<f64> = SymmetricEigen::new((&h + h.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Counts kernel and cokernel dimensions of a discretized operator from its
/// numerical rank on the boundary-constrained domain, measured in the
/// weighted inner products. Singular values below `rank_tol·σ_max` count as
/// zero; a singular value within a factor 10 of the threshold on either side
/// makes the count ambiguous. Adjoint kinds are handled through their forward
/// operator with kernel and cokernel exchanged.
pub fn fredholm_index_estimate(op: &LinearOperator, rank_tol: f64) -> Result<FredholmReport> {
    if op.kind.is_adjoint() {
        let mut r = fredholm_index_estimate(&op.adjoint(), rank_tol)?;
        std::mem::swap(&mut r.dim_ker, &mut r.dim_coker);
        r.index = -r.index;
        r.kernel = None;
        return Ok(r);
    }
    let red = Reduced::new(op);
    let rows = red.mat.nrows();
    let cols = red.mat.ncols();
    let by_rows = rows <= cols;
    let short = if by_rows { red.mat.clone() } else { red.mat.transpose() };
    let gram = Gram::new(short.weighted_gram(&vec![1.0; short.ncols()]))?;
    let lmax = gram.largest_eigenvalue();
    let sigma_max = lmax.sqrt();
    let rel: Vec<f64> = gram
        .smallest_eigenvalues(SMALLEST)
        .iter()
        .map(|l| l.max(0.0).sqrt() / sigma_max)
        .collect();
    let deficiency = rel.iter().filter(|&&s| s < rank_tol).count();
    if deficiency == rel.len() {
        return Err(Error::IllConditioned {
            gap: 1.0,
            threshold: rank_tol,
        });
    }
    if deficiency > 0 {
        let below = rel[deficiency - 1];
        if below * GAP_FACTOR > rank_tol {
            return Err(Error::IllConditioned {
                gap: rank_tol / below,
                threshold: rank_tol,
            });
        }
    }
    let above = rel[deficiency];
    if above < GAP_FACTOR * rank_tol {
        return Err(Error::IllConditioned {
            gap: above / rank_tol,
            threshold: rank_tol,
        });
    }
    let rank = rows.min(cols) - deficiency;
    let (dim_ker, dim_coker) = (cols - rank, rows - rank);
    let kernel = (dim_ker > 0 && by_rows && deficiency == 0).then(|| {
        // v minus its projection onto the row space.
        let mut v = DVector::from_fn(cols, |i, _| 1.0 + 0.5 * (i as f64 * 0.61803398875).sin());
        for _ in 0..2 {
            let av = DVector::from_vec(red.mat.mul_vec(v.as_slice()));
            let y = gram.solve(&av);
            v -= DVector::from_vec(red.mat.tr_mul_vec(y.as_slice()));
        }
        red.lift(&v)
    });
    Ok(FredholmReport {
        dim_ker,
        dim_coker,
        index: dim_ker as i64 - dim_coker as i64,
        sigma_max,
        smallest_relative: rel,
        rank_tol,
        kernel,
    })
}

/// |⟨a, b⟩_W|/(‖a‖_W‖b‖_W) in the domain inner product of `op`.
pub fn domain_correlation(op: &LinearOperator, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    op.dot_domain(a, b).abs() / (op.norm_domain(a) * op.norm_domain(b))
}
