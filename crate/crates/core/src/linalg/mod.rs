//! Matrix storage, row-level access and small vector helpers.
//!
//! [`MatrixHandle`] holds the system matrix either densely (row-major) or in
//! compressed sparse row form, together with the precomputed squared row
//! norms used by every row-action update. Both layouts visit the nonzeros of
//! a row in ascending column order, so row dot products agree bit-for-bit.

mod decomp;
pub mod mm;

pub use decomp::{min_norm_solution, nullspace_basis, singular_values, NullSpace, NULLSPACE_MAX_ENTRIES};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Row-major `rows * cols` values.
    Dense(Vec<f64>),
    Csr {
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// The system matrix `A` with cached squared row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixHandle {
    rows: usize,
    cols: usize,
    storage: Storage,
    row_norms_sq: Vec<f64>,
}

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl<'a> Row<'a> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            Row::Dense(vals) => vals.iter().zip(x).map(|(a, b)| a * b).sum(),
            Row::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&c, v)| v * x[c]).sum()
            }
        }
    }

    /// `x += alpha * row`
    pub fn axpy(&self, alpha: f64, x: &mut [f64]) {
        match *self {
            Row::Dense(vals) => {
                for (xi, a) in x.iter_mut().zip(vals) {
                    *xi += alpha * a;
                }
            }
            Row::Sparse { indices, values } => {
                for (&c, v) in indices.iter().zip(values) {
                    x[c] += alpha * v;
                }
            }
        }
    }

    /// Inner product of two rows of the same matrix.
    pub fn dot_row(&self, other: &Row<'_>) -> f64 {
        match (*self, *other) {
            (Row::Dense(a), Row::Dense(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (Row::Dense(a), Row::Sparse { indices, values })
            | (Row::Sparse { indices, values }, Row::Dense(a)) => {
                indices.iter().zip(values).map(|(&c, v)| v * a[c]).sum()
            }
            (
                Row::Sparse {
                    indices: ia,
                    values: va,
                },
                Row::Sparse {
                    indices: ib,
                    values: vb,
                },
            ) => {
                let (mut p, mut q, mut acc) = (0, 0, 0.0);
                while p < ia.len() && q < ib.len() {
                    match ia[p].cmp(&ib[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc += va[p] * vb[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match *self {
            Row::Dense(vals) => Box::new(vals.iter().copied().enumerate()),
            Row::Sparse { indices, values } => {
                Box::new(indices.iter().copied().zip(values.iter().copied()))
            }
        }
    }
}

fn sum_sq(row: Row<'_>) -> f64 {
    match row {
        Row::Dense(v) => v.iter().map(|a| a * a).sum(),
        Row::Sparse { values, .. } => values.iter().map(|a| a * a).sum(),
    }
}

impl MatrixHandle {
    /// Dense matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("row-major data", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self::finish(rows, cols, Storage::Dense(data)))
    }

    /// Dense matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::dims("row length", n, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(m, n, data)
    }

    /// Sparse matrix from 0-based `(row, col, value)` triplets. Duplicates are
    /// summed and explicit zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &t {
            if r >= rows {
                return Err(Error::Param(format!("row index {r} out of range {rows}")));
            }
            if c >= cols {
                return Err(Error::Param(format!("column index {c} out of range {cols}")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("matrix entries"));
            }
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let csr = Self::finish(
            rows,
            cols,
            Storage::Csr {
                indptr,
                indices,
                values,
            },
        );
        Ok(csr.prune_zeros())
    }

    pub fn from_nalgebra(a: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            data.extend(a.row(i).iter().copied());
        }
        Self::from_row_major(m, n, data)
    }

    fn finish(rows: usize, cols: usize, storage: Storage) -> Self {
        let mut h = Self {
            rows,
            cols,
            storage,
            row_norms_sq: Vec::new(),
        };
        h.row_norms_sq = (0..rows).map(|i| sum_sq(h.row(i))).collect();
        h
    }

    fn prune_zeros(self) -> Self {
        match &self.storage {
            Storage::Csr { values, .. } if values.contains(&0.0) => {
                let trip = self.triplets().into_iter().filter(|t| t.2 != 0.0);
                Self::from_triplets(self.rows, self.cols, trip).expect("valid triplets")
            }
            _ => self,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Csr { .. })
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(d) => Row::Dense(&d[i * self.cols..(i + 1) * self.cols]),
            Storage::Csr {
                indptr,
                indices,
                values,
            } => {
                let (s, e) = (indptr[i], indptr[i + 1]);
                Row::Sparse {
                    indices: &indices[s..e],
                    values: &values[s..e],
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .entries()
            .find(|&(c, _)| c == j)
            .map_or(0.0, |(_, v)| v)
    }

    /// Cached `‖a_i‖₂²` for every row.
    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    /// Recomputes `‖a_i‖₂²` from the stored entries.
    pub fn recompute_row_norm_sq(&self, i: usize) -> f64 {
        sum_sq(self.row(i))
    }

    /// Indices of rows whose squared norm is exactly zero.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|&i| self.row_norms_sq[i] == 0.0)
            .collect()
    }

    pub fn has_zero_rows(&self) -> bool {
        self.row_norms_sq.contains(&0.0)
    }

    /// Fails with [`Error::ZeroRow`] on the first zero row.
    pub fn require_nonzero_rows(&self) -> Result<()> {
        match self.zero_rows().first() {
            Some(&row) => Err(Error::ZeroRow { row }),
            None => Ok(()),
        }
    }

    /// `a_jᵀ a_i`.
    pub fn row_dot_row(&self, j: usize, i: usize) -> f64 {
        self.row(j).dot_row(&self.row(i))
    }

    /// `h_{j,i} = a_jᵀ a_i / ‖a_i‖₂²` (0-based indices).
    ///
    /// The normalisation by the *second* row's norm is the one that makes the
    /// compatibility coefficients of the Kaczmarz-Tanabe factor come out as
    /// `-μ_i h_{j,i}`.
    pub fn row_inner(&self, j: usize, i: usize) -> Result<f64> {
        let den = self.row_norms_sq[i];
        if den == 0.0 {
            return Err(Error::ZeroRow { row: i });
        }
        Ok(self.row_dot_row(j, i) / den)
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec: x has wrong length");
        (0..self.rows).map(|i| self.row(i).dot(x)).collect()
    }

    /// `Aᵀ y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t: y has wrong length");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                self.row(i).axpy(yi, &mut out);
            }
        }
        out
    }

    /// Nonzero entries as 0-based triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            out.extend(
                self.row(i)
                    .entries()
                    .filter(|&(_, v)| v != 0.0)
                    .map(|(c, v)| (i, c, v)),
            );
        }
        out
    }

    pub fn to_dense(&self) -> Self {
        let mut data = vec![0.0; self.rows * self.cols];
        for (i, j, v) in self.triplets() {
            data[i * self.cols + j] = v;
        }
        Self::finish(self.rows, self.cols, Storage::Dense(data))
    }

    pub fn to_csr(&self) -> Self {
        Self::from_triplets(self.rows, self.cols, self.triplets()).expect("valid triplets")
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            a[(i, j)] = v;
        }
        a
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a - b`
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Largest absolute elementwise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_inner_examples() {
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(a.row_inner(0, 1).unwrap(), 0.0);
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(a.row_inner(0, 1).unwrap(), 0.5);
        let a = MatrixHandle::from_rows(&[[2.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(a.row_inner(0, 1).unwrap(), 1.0);
    }

    #[test]
    fn row_inner_zero_row() {
        let a = MatrixHandle::from_rows(&[[1.0, 2.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(a.row_inner(0, 1), Err(Error::ZeroRow { row: 1 })));
        assert_eq!(a.row_inner(1, 0).unwrap(), 0.0);
        assert_eq!(a.zero_rows(), vec![1]);
        assert!(a.has_zero_rows());
        assert!(a.require_nonzero_rows().is_err());
    }

    #[test]
    fn self_inner_is_one() {
        let a = MatrixHandle::from_rows(&[[3.0, -1.0, 2.0], [0.5, 0.25, 0.0]]).unwrap();
        for i in 0..2 {
            assert!((a.row_inner(i, i).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn row_norms_are_cached_sums_of_squares() {
        let a = MatrixHandle::from_rows(&[[3.0, 4.0], [1.0, -1.0]]).unwrap();
        assert_eq!(a.row_norms_sq(), &[25.0, 2.0]);
        assert_eq!(a.recompute_row_norm_sq(0), 25.0);
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = MatrixHandle::from_triplets(
            2,
            3,
            vec![(0, 2, 1.0), (0, 2, 2.0), (1, 0, 0.0), (1, 1, -1.0)],
        )
        .unwrap();
        assert_eq!(a.triplets(), vec![(0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn triplets_out_of_range() {
        assert!(MatrixHandle::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(MatrixHandle::from_triplets(2, 2, vec![(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(MatrixHandle::from_rows(&rows).is_err());
        assert!(matches!(
            MatrixHandle::from_rows(&[[f64::NAN, 1.0]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn dense_and_csr_agree() {
        let d = MatrixHandle::from_rows(&[
            [1.0, 0.0, 2.5, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [-3.0, 1.0, 0.0, 4.0],
        ])
        .unwrap();
        let s = d.to_csr();
        assert!(s.is_sparse());
        let x = [0.3, -1.1, 2.0, 0.7];
        let y = [1.0, -2.0, 0.5];
        assert_eq!(d.matvec(&x), s.matvec(&x));
        assert_eq!(d.matvec_t(&y), s.matvec_t(&y));
        assert_eq!(d.row_norms_sq(), s.row_norms_sq());
        for j in 0..3 {
            for i in 0..3 {
                assert_eq!(d.row_dot_row(j, i), s.row_dot_row(j, i));
            }
        }
        assert_eq!(s.to_dense(), d);
    }
}
