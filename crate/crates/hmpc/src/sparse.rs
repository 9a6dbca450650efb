//! Compressed sparse row matrices and the two matrix-vector kernels the
//! solver loop needs. Transposed products iterate the row-major storage
//! directly so the transpose is never materialized.

use nalgebra::DMatrix;

/// Sparse matrix in CSR form. Within each row, column indices are strictly
/// increasing; only nonzeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from raw CSR arrays, checking the structural invariants.
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), rows + 1, "row_ptr must have rows + 1 entries");
        assert_eq!(row_ptr[0], 0, "row_ptr must start at 0");
        assert_eq!(row_ptr[rows], col_idx.len(), "row_ptr must end at nnz");
        assert_eq!(col_idx.len(), values.len(), "col_idx/values length mismatch");
        for r in 0..rows {
            assert!(row_ptr[r] <= row_ptr[r + 1], "row_ptr must be non-decreasing");
            let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for pair in row.windows(2) {
                assert!(pair[0] < pair[1], "columns must be strictly increasing in row {r}");
            }
            if let Some(&last) = row.last() {
                assert!(last < cols, "column index out of range in row {r}");
            }
        }
        Self { rows, cols, row_ptr, col_idx, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = M x`, row-wise over stored nonzeros only.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "dimension mismatch: x");
        assert_eq!(y.len(), self.rows, "dimension mismatch: y");
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    /// `y = M^T x`, scattering row contributions into `y`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(y.len(), self.cols, "dimension mismatch: y");
        y.fill(0.0);
        self.matvec_transpose_acc(x, y);
    }

    /// `y += M^T x`.
    pub fn matvec_transpose_acc(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "dimension mismatch: x");
        assert_eq!(y.len(), self.cols, "dimension mismatch: y");
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    /// Dense copy; setup-time use only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[(r, self.col_idx[k])] = self.values[k];
            }
        }
        out
    }

    /// `M^T M` accumulated densely; setup-time use only.
    pub fn gram_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            for a in lo..hi {
                let (ca, va) = (self.col_idx[a], self.values[a]);
                for b in lo..hi {
                    out[(ca, self.col_idx[b])] += va * self.values[b];
                }
            }
        }
        out
    }
}

/// Incremental triplet builder; entries may arrive in any order and exact
/// zeros are dropped.
#[derive(Debug, Default)]
pub struct CsrBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CsrBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols, "entry out of range");
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Insert a dense block with its upper-left corner at `(row, col)`.
    pub fn push_dense(&mut self, row: usize, col: usize, block: &DMatrix<f64>) {
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                self.push(row + i, col + j, block[(i, j)]);
            }
        }
    }

    /// Insert `scale * I` with its upper-left corner at `(row, col)`.
    pub fn push_scaled_identity(&mut self, row: usize, col: usize, dim: usize, scale: f64) {
        for i in 0..dim {
            self.push(row + i, col + i, scale);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        // duplicate (row, col) entries are a construction bug upstream
        for pair in self.entries.windows(2) {
            assert!(
                (pair[0].0, pair[0].1) != (pair[1].0, pair[1].1),
                "duplicate entry at ({}, {})",
                pair[0].0,
                pair[0].1
            );
        }
        let mut row_ptr = vec![0; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..self.rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix::new(self.rows, self.cols, row_ptr, col_idx, values)
    }
}
