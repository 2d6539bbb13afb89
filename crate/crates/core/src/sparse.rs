//! Compressed-sparse-row storage for interaction matrices.

use serde::{Deserialize, Serialize};

/// Row-major compressed sparse matrix with `f64` values.
///
/// Column indices within each row are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    /// An all-zero matrix.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets that are already sorted by
    /// `(row, col)` with no duplicates.
    ///
    /// Panics if the ordering contract is violated or an index is out of bounds.
    pub fn from_sorted_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Self {
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            assert!((r as usize) < n_rows && (c as usize) < n_cols, "triplet out of bounds");
            if let Some(prev) = last {
                assert!(prev < (r, c), "triplets must be strictly increasing by (row, col)");
            }
            last = Some((r, c));
            indptr[r as usize + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices of row `r`.
    pub fn row_indices(&self, r: usize) -> &[u32] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    /// Values of row `r`, aligned with [`Csr::row_indices`].
    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    /// Range of flat entry positions belonging to row `r`.
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.indptr[r]..self.indptr[r + 1]
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    /// Value at `(r, c)` if stored.
    pub fn get(&self, r: usize, c: u32) -> Option<f64> {
        let idx = self.row_indices(r);
        idx.binary_search(&c).ok().map(|k| self.row_values(r)[k])
    }

    /// Stored-entry count per column.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.indices {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            self.row_range(r)
                .map(move |k| (r as u32, self.indices[k], self.values[k]))
        })
    }

    /// Transpose, also in CSR layout (rows become columns).
    pub fn transpose(&self) -> Csr {
        let mut indptr = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            indptr[c as usize + 1] += 1;
        }
        for c in 0..self.n_cols {
            indptr[c + 1] += indptr[c];
        }
        let mut next = indptr.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        // Rows are visited in order, so each transposed row stays sorted.
        for r in 0..self.n_rows {
            for k in self.row_range(r) {
                let c = self.indices[k] as usize;
                let dst = next[c];
                indices[dst] = r as u32;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Keeps the entries whose flat position is `true` in `mask`.
    pub fn select(&self, mask: &[bool]) -> Csr {
        assert_eq!(mask.len(), self.nnz());
        let mut indptr = Vec::with_capacity(self.n_rows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.n_rows {
            for k in self.row_range(r) {
                if mask[k] {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Copy with every stored value replaced by 1.0.
    pub fn binarized(&self) -> Csr {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = 1.0);
        out
    }

    /// Checks the structural invariants; used by tests and checkpoint loading.
    pub fn is_well_formed(&self) -> bool {
        self.indptr.len() == self.n_rows + 1
            && self.indptr[0] == 0
            && *self.indptr.last().unwrap() == self.indices.len()
            && self.indices.len() == self.values.len()
            && self.indptr.windows(2).all(|w| w[0] <= w[1])
            && (0..self.n_rows).all(|r| {
                let row = self.row_indices(r);
                row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&c| (c as usize) < self.n_cols)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Csr {
        Csr::from_sorted_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)])
    }

    #[test]
    fn transpose_twice_is_identity() {
        let m = sample();
        let t = m.transpose();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.row_indices(2), &[0]);
        assert_eq!(t.transpose(), m);
        assert!(t.is_well_formed());
    }

    #[test]
    fn select_keeps_shape() {
        let m = sample();
        let s = m.select(&[true, false, true]);
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.n_cols(), 3);
        assert_eq!(s.get(0, 2), None);
        assert_eq!(s.get(1, 1), Some(3.0));
    }

    #[test]
    #[should_panic]
    fn unsorted_triplets_rejected() {
        Csr::from_sorted_triplets(2, 2, vec![(1, 0, 1.0), (0, 0, 1.0)]);
    }
}
