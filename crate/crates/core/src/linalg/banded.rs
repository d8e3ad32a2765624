use nalgebra::DMatrix;

use crate::fields::Real;

/// Symmetric matrix stored as its lower band.
#[derive(Clone, Debug)]
pub struct BandedSym<T: Real = f64> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSym<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Entry (i, j) with j ≤ i.
    pub fn get(&self, i: usize, j: usize) -> T {
        if i - j > self.bw {
            T::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.data[k] = self.data[k] + v;
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |s, i| s + self.get(i, i))
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::from_element(self.n, self.n, T::zero());
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                m[(i, j)] = self.get(i, j);
                m[(j, i)] = self.get(i, j);
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.get(i, j);
                y[i] = y[i] + a * x[j];
                if j != i {
                    y[j] = y[j] + a * x[i];
                }
            }
        }
        y
    }
}

/// Banded Cholesky factor L with A = L Lᵀ.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T: Real = f64> {
    l: BandedSym<T>,
    /// Diagonal shift that was added before factorizing.
    pub jitter: T,
}

/// Index of the first pivot that was not safely positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PivotFailure(pub usize);

impl<T: Real> BandedCholesky<T> {
    /// Factors `a + jitter·I`. Pivots below `pivot_tol · max diag` count as
    /// failure.
    pub fn factor(a: &BandedSym<T>, jitter: T, pivot_tol: T) -> Result<Self, PivotFailure> {
        let (n, bw) = (a.n, a.bw);
        let mut l = a.clone();
        let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a.get(i, i)));
        let floor = pivot_tol * max_diag;
        for i in 0..n {
            let k = l.idx(i, i);
            l.data[k] = l.data[k] + jitter;
        }
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l.get(j, j);
            for k in lo..j {
                let v = l.get(j, k);
                d = d - v * v;
            }
            if !(d > floor) {
                return Err(PivotFailure(j));
            }
            let d = d.sqrt();
            let kj = l.idx(j, j);
            l.data[kj] = d;
            for i in (j + 1)..(j + bw + 1).min(n) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = l.get(i, j);
                for k in lo_i..j {
                    s = s - l.get(i, k) * l.get(j, k);
                }
                let ki = l.idx(i, j);
                l.data[ki] = s / d;
            }
        }
        Ok(Self { l, jitter })
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw) = (self.l.n, self.l.bw);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s = s - self.l.get(i, k) * b[k];
            }
            b[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s = s - self.l.get(k, i) * b[k];
            }
            b[i] = s / self.l.get(i, i);
        }
    }
}
