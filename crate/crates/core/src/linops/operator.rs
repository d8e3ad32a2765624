use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::grid::TimeGrid;
use crate::linalg::{RowBuilder, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    D0,
    D0Adjoint,
    Deps,
    DepsAdjoint,
}

impl OperatorKind {
    pub fn is_adjoint(self) -> bool {
        matches!(self, Self::D0Adjoint | Self::DepsAdjoint)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    Operator,
    Adjoint,
}

/// Boundary rows acting on the contiguous domain coordinates
/// `offset..offset + rows.ncols()`.
#[derive(Clone, Debug)]
pub struct BoundaryBlock {
    pub offset: usize,
    pub rows: DMatrix<f64>,
}

impl BoundaryBlock {
    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    /// I − W⁻¹Cᵀ(CW⁻¹Cᵀ)⁻¹C on the block, the W-orthogonal projection onto
    /// the kernel of the rows.
    pub fn projector(&self, weights: &[f64]) -> DMatrix<f64> {
        let w = self.width();
        let winv = DVector::from_iterator(w, (0..w).map(|i| 1.0 / weights[self.offset + i]));
        let id = DMatrix::identity(w, w);
        if self.rows.nrows() == 0 {
            return id;
        }
        let cw = DMatrix::from_fn(self.rows.nrows(), w, |r, c| self.rows[(r, c)] * winv[c]);
        let g = &cw * self.rows.transpose();
        let ginv = g.try_inverse().expect("boundary rows are independent");
        id - cw.transpose() * ginv * &self.rows
    }
}

/// A banded discretized operator with the diagonal weights of the discrete
/// inner products on its domain and codomain.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub kind: OperatorKind,
    pub eps: Option<f64>,
    pub grid: TimeGrid,
    /// Ambient dimension m.
    pub m: usize,
    pub matrix: SparseMatrix,
    pub weight_domain: Vec<f64>,
    pub weight_codomain: Vec<f64>,
    /// Boundary conditions cutting out the domain of the forward operator
    /// (for adjoint kinds, the subspace their values lie in).
    pub boundary: [BoundaryBlock; 2],
}

impl LinearOperator {
    pub fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn codomain_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.matrix.mul_vec(x.as_slice()))
    }

    /// Largest column span of a row.
    pub fn bandwidth(&self) -> usize {
        (0..self.matrix.nrows())
            .filter_map(|i| {
                let cols: Vec<usize> = self.matrix.row(i).map(|e| e.0).collect();
                Some(cols.last()? - cols.first()? + 1)
            })
            .max()
            .unwrap_or(0)
    }

    /// Weights of the space the boundary conditions live in.
    fn constrained_weights(&self) -> &[f64] {
        if self.kind.is_adjoint() {
            &self.weight_codomain
        } else {
            &self.weight_domain
        }
    }

    /// Boundary rows as a sparse matrix on the constrained space.
    pub fn boundary_matrix(&self) -> SparseMatrix {
        let n = if self.kind.is_adjoint() {
            self.codomain_dim()
        } else {
            self.domain_dim()
        };
        let mut b = RowBuilder::new(n);
        for blk in &self.boundary {
            for r in 0..blk.rows.nrows() {
                for c in 0..blk.width() {
                    b.push(blk.offset + c, blk.rows[(r, c)]);
                }
                b.finish_row();
            }
        }
        b.build()
    }

    /// Number of boundary conditions.
    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().map(|b| b.rows.nrows()).sum()
    }

    /// W-orthogonal projection onto the subspace cut out by the boundary
    /// conditions.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = self.constrained_weights();
        let mut out = x.clone();
        for blk in &self.boundary {
            let p = blk.projector(w);
            let seg = &p * x.rows(blk.offset, blk.width());
            out.rows_mut(blk.offset, blk.width()).copy_from(&seg);
        }
        out
    }

    pub fn dot_domain(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(&self.weight_domain).map(|((a, b), w)| a * b * w).sum()
    }

    pub fn dot_codomain(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(&self.weight_codomain).map(|((a, b), w)| a * b * w).sum()
    }

    pub fn norm_domain(&self, a: &DVector<f64>) -> f64 {
        self.dot_domain(a, a).sqrt()
    }

    pub fn norm_codomain(&self, a: &DVector<f64>) -> f64 {
        self.dot_codomain(a, a).sqrt()
    }

    /// Exact adjoint with respect to the weighted inner products. For a
    /// forward operator A with boundary projection P this is P W_d⁻¹AᵀW_c, so
    /// ⟨Ỹ, AZ⟩ = ⟨A*Ỹ, Z⟩ for every admissible Z; for an adjoint kind it
    /// returns A P.
    pub fn adjoint(&self) -> LinearOperator {
        let winv_out: Vec<f64> = self.weight_domain.iter().map(|w| 1.0 / w).collect();
        let t = self.matrix.transpose().scaled(&winv_out, &self.weight_codomain);
        let matrix = if self.kind.is_adjoint() {
            t
        } else {
            let mut out = t;
            for blk in &self.boundary {
                out = mix_rows(&out, blk.offset, &blk.projector(&self.weight_domain));
            }
            out
        };
        let kind = match self.kind {
            OperatorKind::D0 => OperatorKind::D0Adjoint,
            OperatorKind::D0Adjoint => OperatorKind::D0,
            OperatorKind::Deps => OperatorKind::DepsAdjoint,
            OperatorKind::DepsAdjoint => OperatorKind::Deps,
        };
        LinearOperator {
            kind,
            eps: self.eps,
            grid: self.grid,
            m: self.m,
            matrix,
            weight_domain: self.weight_codomain.clone(),
            weight_codomain: self.weight_domain.clone(),
            boundary: self.boundary.clone(),
        }
    }
}

/// Replaces rows `offset..offset + p.nrows()` of `a` by p times those rows.
fn mix_rows(a: &SparseMatrix, offset: usize, p: &DMatrix<f64>) -> SparseMatrix {
    let w = p.nrows();
    let mut b = RowBuilder::new(a.ncols());
    for i in 0..a.nrows() {
        if (offset..offset + w).contains(&i) {
            let r = i - offset;
            for k in 0..w {
                let c = p[(r, k)];
                if c != 0.0 {
                    for (col, v) in a.row(offset + k) {
                        b.push(col, c * v);
                    }
                }
            }
        } else {
            for (col, v) in a.row(i) {
                b.push(col, v);
            }
        }
        b.finish_row();
    }
    b.build()
}
