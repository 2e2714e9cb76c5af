//! Dense linear-algebra helpers: jittered Cholesky, log-sum-exp and
//! deterministic pairwise reductions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter levels tried in order; each is scaled by `trace / dim`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky factor of a symmetric positive-definite matrix, possibly after
/// diagonal jitter.
#[derive(Clone, Debug)]
pub struct PdFactor {
    chol: Cholesky<f64, Dyn>,
    /// Absolute jitter that was added to the diagonal (zero if none).
    pub jitter: f64,
}

impl PdFactor {
    /// Factorizes `m` (only its lower triangle is read), escalating through
    /// [`JITTER_LADDER`] until the factorization succeeds.
    pub fn new(m: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        Self::with_state(m, context, None)
    }

    pub fn with_state(
        m: &DMatrix<f64>,
        context: &'static str,
        state: Option<&dyn Fn() -> String>,
    ) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::dims(context, "square matrix", format!("{}x{}", n, m.ncols())));
        }
        if n == 0 {
            return Ok(PdFactor {
                chol: Cholesky::new(DMatrix::zeros(0, 0)).expect("empty cholesky"),
                jitter: 0.0,
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                context,
                state: state.map(|f| f()),
                condition: f64::INFINITY,
            });
        }
        let scale = m.trace() / n as f64;
        for eps in JITTER_LADDER {
            let jitter = eps * scale;
            if eps > 0.0 && !(jitter > 0.0) {
                break;
            }
            let mut work = m.clone();
            for i in 0..n {
                work[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(work) {
                let l = chol.l_dirty();
                if (0..n).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                    return Ok(PdFactor { chol, jitter });
                }
            }
        }
        Err(Error::NumericalFailure {
            context,
            state: state.map(|f| f()),
            condition: condition_estimate(m),
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Lower-triangular factor `L` with `A = L Lᵀ` (upper part is garbage).
    pub fn l_dirty(&self) -> &DMatrix<f64> {
        self.chol.l_dirty()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }

    /// `xᵀ A⁻¹ x` via one triangular solve.
    pub fn inv_quad(&self, x: &DVector<f64>) -> f64 {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let mut w = x.clone();
        for i in 0..n {
            let mut acc = w[i];
            for j in 0..i {
                acc -= l[(i, j)] * w[j];
            }
            w[i] = acc / l[(i, i)];
        }
        w.norm_squared()
    }
}

/// Ratio of extreme absolute eigenvalues; `inf` for singular input.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Clamps the eigenvalues of a symmetric matrix from below at `floor`.
/// Returns `true` if any eigenvalue was raised.
pub fn clamp_eigenvalues(m: &mut DMatrix<f64>, floor: f64) -> bool {
    let mut s = m.clone();
    symmetrize(&mut s);
    let mut eig = SymmetricEigen::new(s);
    let mut changed = false;
    for v in eig.eigenvalues.iter_mut() {
        if *v < floor {
            *v = floor;
            changed = true;
        }
    }
    if changed {
        *m = eig.recompose();
        symmetrize(m);
    }
    changed
}

/// Numerically stable `ln Σ exp(x_i)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Values that can be combined associatively, used by the fixed-shape
/// reduction tree.
pub trait Merge: Sized {
    fn merge(&mut self, other: Self);
}

/// Reduces `items` pairwise in a fixed binary tree over their index order.
///
/// The shape of the tree depends only on `items.len()`, so the floating
/// point result does not depend on how the items were produced (serially
/// or by any number of workers).
pub fn tree_reduce<T: Merge>(mut items: Vec<T>) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.merge(b);
            }
            next.push(a);
        }
        items = next;
    }
    items.pop()
}

/// Gathers the sub-matrix at rows/cols `idx`.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Columns of `m` at `idx`.
pub fn subcolumns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, j| m[(r, idx[j])])
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank one, PSD but singular
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let f = PdFactor::new(&m, "test").unwrap();
        assert!(f.jitter > 0.0);
        assert!(f.jitter <= 1e-6 * m.trace() / 3.0 + 1e-18);
    }

    #[test]
    fn indefinite_fails_with_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match PdFactor::new(&m, "test") {
            Err(Error::NumericalFailure { condition, .. }) => assert!((condition - 1.0).abs() < 1e-12),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn log_det_and_quad() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = PdFactor::new(&m, "test").unwrap();
        assert!((f.log_det() - 11f64.ln()).abs() < 1e-12);
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let expect = (x.transpose() * m.try_inverse().unwrap() * &x)[0];
        assert!((f.inv_quad(&x) - expect).abs() < 1e-12);
    }

    #[test]
    fn lse_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, f64::NEG_INFINITY]) - 0.0).abs() < 1e-15);
    }

    struct S(f64);
    impl Merge for S {
        fn merge(&mut self, other: Self) {
            self.0 += other.0;
        }
    }

    #[test]
    fn tree_reduce_sums() {
        let v: Vec<S> = (1..=10).map(|i| S(i as f64)).collect();
        assert_eq!(tree_reduce(v).unwrap().0, 55.0);
        assert!(tree_reduce(Vec::<S>::new()).is_none());
    }
}
