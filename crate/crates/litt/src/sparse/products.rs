//! Mass-matrix-weighted inner products, the discrete realization of the
//! L²(Ω) pairing used throughout the optimizer.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

fn check_weight<T: Float>(m: &CsrMatrix<T>, len: usize) -> Result<()> {
    if m.n_rows() != m.n_cols() || m.n_rows() != len {
        return Err(Error::DimensionMismatch(format!(
            "weighted product with {}x{} matrix and vectors of length {len}",
            m.n_rows(),
            m.n_cols()
        )));
    }
    for (i, d) in m.diagonal().into_iter().enumerate() {
        if d <= T::zero() {
            return Err(Error::InvalidMatrix(format!(
                "weight matrix has non-positive diagonal entry m[{i},{i}] = {:.3e}",
                d.to_f64().unwrap_or(f64::NAN)
            )));
        }
    }
    Ok(())
}

/// uᵀ M v for an SPD weight matrix M.
pub fn weighted_dot<T: Float>(u: &[T], v: &[T], m: &CsrMatrix<T>) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "weighted_dot of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    check_weight(m, u.len())?;
    let mut acc = T::zero();
    for i in 0..u.len() {
        let (cols, vals) = m.row(i);
        let mut row = T::zero();
        for (&j, &w) in cols.iter().zip(vals) {
            row = row + w * v[j];
        }
        acc = acc + u[i] * row;
    }
    Ok(acc)
}

/// √(uᵀ M u); tiny negative rounding is clamped to zero.
pub fn weighted_norm<T: Float>(u: &[T], m: &CsrMatrix<T>) -> Result<T> {
    Ok(weighted_dot(u, u, m)?.max(T::zero()).sqrt())
}
