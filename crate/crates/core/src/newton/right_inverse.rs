use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{MinNormSolver, RowBuilder, SparseMatrix};
use crate::linops::LinearOperator;

/// Relative residual a factorization that needed a diagonal shift must still
/// reach for the operator to count as surjective.
const SURJECTIVITY_TOL: f64 = 1e-8;

/// R r = minimum-norm ζ with D ζ = r and ζ in the boundary-constrained
/// domain. With C the boundary rows this is W⁻¹Mᵀ(MW⁻¹Mᵀ)⁻¹(r, 0) for
/// M = [D; C], so ζ lies in the range of the weighted adjoint (D)*.
#[derive(Clone, Debug)]
pub struct RightInverse {
    op: LinearOperator,
    solver: MinNormSolver,
    /// The Gram matrix needed a diagonal shift; surjectivity was then checked
    /// on a probe right-hand side.
    pub jitter_used: bool,
    left: usize,
}

impl RightInverse {
    pub fn new(op: &LinearOperator) -> Result<Self> {
        if op.kind.is_adjoint() {
            return Err(Error::Config("right inverse needs a forward operator".into()));
        }
        let bc = op.boundary_matrix();
        let rows = op.codomain_dim() + bc.nrows();
        if rows > op.domain_dim() {
            return Err(Error::NotSurjective(format!(
                "{rows} equations for {} unknowns",
                op.domain_dim()
            )));
        }
        let winv = op.weight_domain.iter().map(|w| 1.0 / w).collect();
        // Left conditions go first and right ones last so the Gram matrix
        // stays banded.
        let left = op.boundary[0].rows.nrows();
        let mut m = RowBuilder::new(op.domain_dim());
        let rows_of = |a: &SparseMatrix, r: std::ops::Range<usize>, m: &mut RowBuilder| {
            for i in r {
                for (c, v) in a.row(i) {
                    m.push(c, v);
                }
                m.finish_row();
            }
        };
        rows_of(&bc, 0..left, &mut m);
        rows_of(&op.matrix, 0..op.codomain_dim(), &mut m);
        rows_of(&bc, left..bc.nrows(), &mut m);
        let solver = MinNormSolver::new(m.build(), winv)
            .map_err(|e| Error::NotSurjective(format!("Gram matrix not positive definite at pivot {}", e.0)))?;
        let out = Self {
            op: op.clone(),
            jitter_used: solver.jitter_used,
            solver,
            left,
        };
        if out.jitter_used {
            let r = DVector::from_fn(op.codomain_dim(), |i, _| (i as f64 * 0.37).sin());
            let err = op.norm_codomain(&(op.apply(&out.apply(&r)) - &r)) / op.norm_codomain(&r);
            if !(err <= SURJECTIVITY_TOL) {
                return Err(Error::NotSurjective(format!("probe residual {err:.3e} after regularization")));
            }
        }
        Ok(out)
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.op
    }

    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut b = vec![0.0; self.left];
        b.extend_from_slice(r.as_slice());
        b.resize(self.solver.matrix().nrows(), 0.0);
        DVector::from_vec(self.solver.solve(&b))
    }
}
