//! Preconditioners for the Krylov solvers.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub trait Preconditioner<T> {
    /// Applies the preconditioner, z = P⁻¹ r.
    fn apply(&self, r: &[T], z: &mut [T]);
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// No preconditioning.
#[derive(Debug, Clone)]
pub struct IdentityPrecond {
    n: usize,
}

impl IdentityPrecond {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl<T: Float> Preconditioner<T> for IdentityPrecond {
    fn apply(&self, r: &[T], z: &mut [T]) {
        z.copy_from_slice(r);
    }
    fn len(&self) -> usize {
        self.n
    }
}

/// Diagonal (Jacobi) preconditioner.
#[derive(Debug, Clone)]
pub struct JacobiPrecond<T> {
    inv_diag: Vec<T>,
}

/// Builds the Jacobi preconditioner from the diagonal of `a`.
/// A non-positive diagonal entry is rejected: the preconditioner must be SPD.
pub fn jacobi<T: Float>(a: &CsrMatrix<T>) -> Result<JacobiPrecond<T>> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "jacobi preconditioner of a {}x{} matrix",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let mut inv_diag = Vec::with_capacity(a.n_rows());
    for (i, d) in a.diagonal().into_iter().enumerate() {
        if d <= T::zero() {
            return Err(Error::InvalidMatrix(format!(
                "non-positive diagonal entry a[{i},{i}] = {:.3e}",
                d.to_f64().unwrap_or(f64::NAN)
            )));
        }
        inv_diag.push(T::one() / d);
    }
    Ok(JacobiPrecond { inv_diag })
}

impl<T: Float> Preconditioner<T> for JacobiPrecond<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        for ((zi, &ri), &di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
    fn len(&self) -> usize {
        self.inv_diag.len()
    }
}

/// Zero-fill incomplete Cholesky factor on the lower-triangular pattern of A.
///
/// Applying the preconditioner solves L Lᵀ z = r by forward and backward
/// substitution. `diagonal_boost` records the shift that was added to the
/// diagonal to rescue non-positive pivots (zero in the regular case).
#[derive(Debug, Clone)]
pub struct IncompleteCholesky<T> {
    lower: CsrMatrix<T>,
    pub diagonal_boost: T,
}

/// IC(0) factorization of an SPD matrix with symmetric sparsity pattern.
///
/// A non-positive pivot restarts the factorization with the diagonal shifted
/// by 1e-12·max|diag|, growing tenfold per retry.
pub fn incomplete_cholesky<T: Float>(a: &CsrMatrix<T>) -> Result<IncompleteCholesky<T>> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "incomplete Cholesky of a {}x{} matrix",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if !a.has_symmetric_pattern() {
        return Err(Error::InvalidMatrix(
            "incomplete Cholesky requires a symmetric sparsity pattern".into(),
        ));
    }
    let max_abs_diag = a
        .diagonal()
        .into_iter()
        .fold(T::zero(), |m, d| m.max(d.abs()));
    let base_shift = T::from(1e-12).expect("small constant") * max_abs_diag;

    let mut shift = T::zero();
    for _ in 0..60 {
        match try_factorize(a, shift) {
            Some(lower) => {
                return Ok(IncompleteCholesky {
                    lower,
                    diagonal_boost: shift,
                })
            }
            None => {
                shift = if shift == T::zero() {
                    if base_shift > T::zero() {
                        base_shift
                    } else {
                        T::from(1e-12).expect("small constant")
                    }
                } else {
                    shift * T::from(10.0).expect("small constant")
                };
            }
        }
    }
    Err(Error::InvalidMatrix(
        "incomplete Cholesky pivots stayed non-positive under diagonal boosting".into(),
    ))
}

fn try_factorize<T: Float>(a: &CsrMatrix<T>, shift: T) -> Option<CsrMatrix<T>> {
    let n = a.n_rows();
    // Lower-triangular pattern of A, values overwritten in place.
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals: Vec<T> = Vec::new();
    offsets.push(0);
    for i in 0..n {
        let (rcols, rvals) = a.row(i);
        for (&j, &v) in rcols.iter().zip(rvals) {
            if j < i {
                cols.push(j);
                vals.push(v);
            } else if j == i {
                cols.push(j);
                vals.push(v + shift);
            }
        }
        offsets.push(cols.len());
    }

    for i in 0..n {
        let row_span = offsets[i]..offsets[i + 1];
        // Row i must contain its diagonal entry last.
        if row_span.is_empty() || cols[row_span.end - 1] != i {
            return None;
        }
        for k in row_span.clone() {
            let j = cols[k];
            // l_ij = (a_ij - sum_{m<j} l_im l_jm) / l_jj, restricted to the pattern.
            let mut sum = vals[k];
            let mut pi = offsets[i];
            let mut pj = offsets[j];
            let i_end = k; // entries of row i left of column j
            let j_end = offsets[j + 1] - 1; // entries of row j left of its diagonal
            while pi < i_end && pj < j_end {
                match cols[pi].cmp(&cols[pj]) {
                    std::cmp::Ordering::Equal => {
                        sum = sum - vals[pi] * vals[pj];
                        pi += 1;
                        pj += 1;
                    }
                    std::cmp::Ordering::Less => pi += 1,
                    std::cmp::Ordering::Greater => pj += 1,
                }
            }
            if j == i {
                if sum <= T::zero() {
                    return None;
                }
                vals[k] = sum.sqrt();
            } else {
                vals[k] = sum / vals[offsets[j + 1] - 1];
            }
        }
    }
    Some(CsrMatrix::from_pattern(n, n, offsets, cols, vals))
}

impl<T: Float> IncompleteCholesky<T> {
    pub fn lower(&self) -> &CsrMatrix<T> {
        &self.lower
    }
}

impl<T: Float> Preconditioner<T> for IncompleteCholesky<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        let n = self.lower.n_rows();
        let offsets = self.lower.row_offsets();
        let cols = self.lower.col_indices();
        let vals = self.lower.values();
        z.copy_from_slice(r);
        // Forward solve L y = r.
        for i in 0..n {
            let diag = vals[offsets[i + 1] - 1];
            let mut acc = z[i];
            for k in offsets[i]..offsets[i + 1] - 1 {
                acc = acc - vals[k] * z[cols[k]];
            }
            z[i] = acc / diag;
        }
        // Backward solve Lᵀ z = y, sweeping rows in reverse.
        for i in (0..n).rev() {
            let diag = vals[offsets[i + 1] - 1];
            z[i] = z[i] / diag;
            let zi = z[i];
            for k in offsets[i]..offsets[i + 1] - 1 {
                z[cols[k]] = z[cols[k]] - vals[k] * zi;
            }
        }
    }
    fn len(&self) -> usize {
        self.lower.n_rows()
    }
}
