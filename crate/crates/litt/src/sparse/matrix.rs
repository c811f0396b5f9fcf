//! Compressed sparse row matrices.
//!
//! Symmetric matrices are stored with both triangles so that mat-vec stays a
//! plain row sweep. Column indices are sorted and unique within each row.

use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Float> CsrMatrix<T> {
    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            if i >= n_rows || j >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut iter = entries.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v = v + v2;
                    iter.next();
                } else {
                    break;
                }
            }
            col_indices.push(j);
            values.push(v);
            row_offsets[i + 1] = col_indices.len();
        }
        // Rows without entries inherit the previous offset.
        for i in 1..=n_rows {
            if row_offsets[i] < row_offsets[i - 1] {
                row_offsets[i] = row_offsets[i - 1];
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Builds a matrix from a fixed sparsity pattern and its value array.
    /// `row_offsets`/`col_indices` must describe sorted, unique columns.
    pub(crate) fn from_pattern(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), n_rows + 1);
        debug_assert_eq!(col_indices.len(), values.len());
        debug_assert_eq!(*row_offsets.last().unwrap(), col_indices.len());
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) -> Result<()> {
        if x.len() != self.n_cols || y.len() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "matvec with {}x{} matrix, x of length {}, y of length {}",
                self.n_rows,
                self.n_cols,
                x.len(),
                y.len()
            )));
        }
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                acc = acc + v * x[j];
            }
            y[i] = acc;
        }
        Ok(())
    }

    /// Sum of scaled matrices on the union pattern.
    pub fn linear_combination(terms: &[(T, &CsrMatrix<T>)]) -> Result<Self> {
        let (n_rows, n_cols) = match terms.first() {
            Some((_, m)) => (m.n_rows, m.n_cols),
            None => return Err(Error::DimensionMismatch("empty linear combination".into())),
        };
        for (_, m) in terms {
            if m.n_rows != n_rows || m.n_cols != n_cols {
                return Err(Error::DimensionMismatch(
                    "linear combination of differently shaped matrices".into(),
                ));
            }
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values: Vec<T> = Vec::new();
        // Merge the sorted rows of every term.
        let mut cursors = vec![0usize; terms.len()];
        for i in 0..n_rows {
            for (t, (_, m)) in terms.iter().enumerate() {
                cursors[t] = m.row_offsets[i];
            }
            loop {
                let mut next_col = usize::MAX;
                for (t, (_, m)) in terms.iter().enumerate() {
                    if cursors[t] < m.row_offsets[i + 1] {
                        next_col = next_col.min(m.col_indices[cursors[t]]);
                    }
                }
                if next_col == usize::MAX {
                    break;
                }
                let mut acc = T::zero();
                for (t, (c, m)) in terms.iter().enumerate() {
                    if cursors[t] < m.row_offsets[i + 1] && m.col_indices[cursors[t]] == next_col {
                        acc = acc + *c * m.values[cursors[t]];
                        cursors[t] += 1;
                    }
                }
                col_indices.push(next_col);
                values.push(acc);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = *v * c;
        }
        out
    }

    /// True when every stored (i, j) has a stored (j, i).
    pub fn has_symmetric_pattern(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &j in cols {
                let (jcols, _) = self.row(j);
                if jcols.binary_search(&i).is_err() {
                    return false;
                }
            }
        }
        true
    }

    /// Maximum |a_ij - a_ji| over the stored pattern.
    pub fn symmetry_defect(&self) -> T {
        let mut defect = T::zero();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let d = (v - self.get(j, i)).abs();
                if d > defect {
                    defect = d;
                }
            }
        }
        defect
    }
}
