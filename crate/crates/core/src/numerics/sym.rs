//! Dense symmetric matrices, a semi-definite Cholesky factorisation and the
//! sweep operator.
//!
//! # Sweep convention
//!
//! `sweep` uses the symmetric form of Goodnight's operator. Sweeping a pivot
//! `k` that has not been swept yet, with `d = a[k][k]`:
//!
//! ```text
//! a[k][k] <- -1 / d
//! a[i][k] <- a[i][k] / d                      (i != k, and symmetrically)
//! a[i][j] <- a[i][j] - a[i][k] * a[k][j] / d  (i, j != k)
//! ```
//!
//! Sweeping a pivot that is already swept applies the inverse transform
//! (`a[i][k] <- -a[i][k] / d` instead), so `sweep(sweep(S, K), K) == S`.
//! The matrix records which pivots are swept to make that bookkeeping
//! automatic.
//!
//! After sweeping the index set `K` of a covariance matrix, the blocks read:
//!
//! * `[K, K]` holds `-(S_KK)^-1`,
//! * `[R, K]` holds the regression coefficients `S_RK S_KK^-1` of the rest `R` on `K`,
//! * `[R, R]` holds the conditional covariance `S_RR - S_RK S_KK^-1 S_KR`.
//!
//! Sweeping every index yields `-S^-1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpcError};

/// Pivot tolerance for semi-definite factorisation and for sweeping.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
    swept: Vec<bool>,
}

impl SymMatrix {
    /// Wraps a square matrix, rejecting it unless it is exactly symmetric.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(SpcError::InvalidArgument(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(SpcError::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            entries,
            swept: vec![false; n],
        })
    }

    /// Builds a matrix from the lower triangle, `f(i, j)` with `i >= j`.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let mut entries = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Self {
            entries,
            swept: vec![false; dim],
        }
    }

    /// Averages `m` with its transpose.
    pub fn symmetrize(m: &DMatrix<f64>) -> Self {
        Self::from_lower_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_lower_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_lower_fn(dim, |_, _| 0.0)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[(i, j)] = value;
        self.entries[(j, i)] = value;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.entries.diagonal()
    }

    pub fn is_swept(&self, index: usize) -> bool {
        self.swept[index]
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> SymMatrix {
        Self::from_lower_fn(indices.len(), |i, j| self.entries[(indices[i], indices[j])])
    }

    /// Largest absolute diagonal entry, floored at one. Used to scale
    /// absolute tolerances to the matrix.
    pub fn scale(&self) -> f64 {
        self.entries.diagonal().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Lower-triangular `L` with `L Lᵀ = S`.
///
/// Pivots in `(-tol, tol)` are clamped to zero and the corresponding column
/// of `L` is zeroed, which handles matrices on the semi-definite boundary.
pub fn cholesky(s: &SymMatrix, tol: f64) -> Result<DMatrix<f64>> {
    let n = s.dim();
    let a = s.as_matrix();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot < -tol || pivot.is_nan() {
            return Err(SpcError::NotPsd { index: j, pivot });
        }
        if pivot < tol {
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Sweeps `s` on each of `indices` in turn. See the module docs for the
/// sign convention; pivots already swept are reverse-swept.
pub fn sweep(s: &SymMatrix, indices: &[usize], tol: f64) -> Result<SymMatrix> {
    let mut out = s.clone();
    for &k in indices {
        sweep_in_place(&mut out, k, tol)?;
    }
    Ok(out)
}

fn sweep_in_place(s: &mut SymMatrix, k: usize, tol: f64) -> Result<()> {
    let n = s.dim();
    if k >= n {
        return Err(SpcError::InvalidArgument(format!(
            "sweep index {k} out of range for dimension {n}"
        )));
    }
    let a = &mut s.entries;
    let d = a[(k, k)];
    if d.abs() < tol || !d.is_finite() {
        return Err(SpcError::SingularPivot { index: k, pivot: d });
    }
    let reverse = s.swept[k];
    let col: Vec<f64> = (0..n).map(|i| a[(i, k)]).collect();
    for i in 0..n {
        if i == k {
            continue;
        }
        for j in 0..=i {
            if j == k {
                continue;
            }
            let v = a[(i, j)] - col[i] * col[j] / d;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let sign = if reverse { -1.0 } else { 1.0 };
    for i in 0..n {
        if i != k {
            let v = sign * col[i] / d;
            a[(i, k)] = v;
            a[(k, i)] = v;
        }
    }
    a[(k, k)] = -1.0 / d;
    s.swept[k] = !reverse;
    Ok(())
}

/// Parameters of the conditional normal of the `rest` coordinates given the
/// `given` coordinates.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub given: Vec<usize>,
    pub rest: Vec<usize>,
    /// `rest × given` regression coefficients.
    pub coefficients: DMatrix<f64>,
    pub covariance: SymMatrix,
}

impl Conditional {
    /// Conditional mean of the `rest` block given observed values of the
    /// `given` block.
    pub fn mean(&self, mean: &DVector<f64>, observed: &[f64]) -> DVector<f64> {
        let mut out = DVector::from_iterator(self.rest.len(), self.rest.iter().map(|&r| mean[r]));
        for (g, (&gi, &y)) in self.given.iter().zip(observed).enumerate() {
            let residual = y - mean[gi];
            for r in 0..self.rest.len() {
                out[r] += self.coefficients[(r, g)] * residual;
            }
        }
        out
    }
}

/// Sweeps `cov` on `given` and reads off the regression coefficients and
/// conditional covariance of the remaining coordinates.
pub fn conditional_by_sweep(cov: &SymMatrix, given: &[usize], tol: f64) -> Result<Conditional> {
    let n = cov.dim();
    let rest: Vec<usize> = (0..n).filter(|i| !given.contains(i)).collect();
    let swept = sweep(cov, given, tol)?;
    let coefficients = DMatrix::from_fn(rest.len(), given.len(), |r, g| swept.get(rest[r], given[g]));
    let covariance = swept.submatrix(&rest);
    Ok(Conditional {
        given: given.to_vec(),
        rest,
        coefficients,
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[&[f64]]) -> SymMatrix {
        let n = rows.len();
        SymMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymMatrix::identity(3), PSD_TOL).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let s = mat(&[&[1.0, 0.8], &[0.8, 1.0]]);
        let l = cholesky(&s, PSD_TOL).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 0.6, epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        let back = &l * l.transpose();
        assert!((back - s.as_matrix()).amax() < 2.0 * PSD_TOL);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = mat(&[&[1.0, 1.2], &[1.2, 1.0]]);
        assert!(matches!(cholesky(&s, PSD_TOL), Err(SpcError::NotPsd { index: 1, .. })));
    }

    #[test]
    fn cholesky_accepts_boundary() {
        let s = mat(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let l = cholesky(&s, PSD_TOL).unwrap();
        assert_eq!(l[(1, 1)], 0.0);
        assert!((&l * l.transpose() - s.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn new_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn sweep_twice_restores() {
        let s = mat(&[&[2.0, 0.3, 0.1], &[0.3, 1.5, -0.2], &[0.1, -0.2, 1.0]]);
        let once = sweep(&s, &[1], PSD_TOL).unwrap();
        assert!(once.is_swept(1));
        let twice = sweep(&once, &[1], PSD_TOL).unwrap();
        assert!(!twice.is_swept(1));
        assert!((twice.as_matrix() - s.as_matrix()).amax() < 1e-14);
    }

    #[test]
    fn full_sweep_is_negative_inverse_2x2() {
        let (a, b, c) = (2.0, 0.6, 1.5);
        let s = mat(&[&[a, b], &[b, c]]);
        let det = a * c - b * b;
        let swept = sweep(&s, &[0, 1], PSD_TOL).unwrap();
        assert_abs_diff_eq!(swept.get(0, 0), -c / det, epsilon = 1e-14);
        assert_abs_diff_eq!(swept.get(1, 1), -a / det, epsilon = 1e-14);
        assert_abs_diff_eq!(swept.get(0, 1), b / det, epsilon = 1e-14);
    }

    #[test]
    fn sweep_order_commutes() {
        let s = mat(&[&[2.0, 0.3, 0.1], &[0.3, 1.5, -0.2], &[0.1, -0.2, 1.0]]);
        let a = sweep(&s, &[0, 2], PSD_TOL).unwrap();
        let b = sweep(&s, &[2, 0], PSD_TOL).unwrap();
        assert!((a.as_matrix() - b.as_matrix()).amax() < 1e-14);
    }

    #[test]
    fn swept_conditional_variance_two_arms() {
        let (rho, s0, s1) = (0.73_f64, 0.9_f64, 1.3_f64);
        let s = mat(&[&[s0 * s0, rho * s0 * s1], &[rho * s0 * s1, s1 * s1]]);
        let swept = sweep(&s, &[0], PSD_TOL).unwrap();
        assert_abs_diff_eq!(swept.get(1, 1), (1.0 - rho * rho) * s1 * s1, epsilon = 1e-14);
        assert_abs_diff_eq!(swept.get(1, 0), rho * s1 / s0, epsilon = 1e-14);
    }

    #[test]
    fn sweep_singular_pivot() {
        let s = mat(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            sweep(&s, &[0], PSD_TOL),
            Err(SpcError::SingularPivot { index: 0, .. })
        ));
    }
}
