use std::cell::Cell;

use super::{DenseMatrix, LinalgError};

thread_local! {
    static SPMM_CALLS: Cell<u64> = const { Cell::new(0) };
    static SPMM_ADJOINT_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`spmm`] calls made on the current thread since the last reset.
///
/// The counters are thread-local so that independent runs on different
/// worker threads (and parallel test cases) account for their own work only.
pub fn spmm_calls() -> u64 {
    SPMM_CALLS.with(Cell::get)
}

pub fn spmm_adjoint_calls() -> u64 {
    SPMM_ADJOINT_CALLS.with(Cell::get)
}

pub fn reset_spmm_counters() {
    SPMM_CALLS.with(|c| c.set(0));
    SPMM_ADJOINT_CALLS.with(|c| c.set(0));
}

/// Compressed sparse row matrix with no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates raw CSR arrays. Stored zeros are dropped.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if row_offsets.len() != n_rows + 1 {
            return Err(LinalgError::InvalidCsr(format!(
                "row_offsets has length {} for {} rows",
                row_offsets.len(),
                n_rows
            )));
        }
        if row_offsets[0] != 0
            || row_offsets[n_rows] != col_indices.len()
            || col_indices.len() != values.len()
        {
            return Err(LinalgError::InvalidCsr(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        for r in 0..n_rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return Err(LinalgError::InvalidCsr(format!(
                    "row_offsets decrease at row {r}"
                )));
            }
            let cols = &col_indices[start..end];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::InvalidCsr(format!(
                    "columns of row {r} are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(LinalgError::InvalidCsr(format!(
                    "column index out of range in row {r}"
                )));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::InvalidCsr(format!(
                "non-finite value at position {pos}"
            )));
        }
        let mut m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicate
    /// coordinates are summed; entries that end up zero are not stored.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut sorted = triplets.to_vec();
        for &(r, c, v) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(LinalgError::InvalidCsr(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            if !v.is_finite() {
                return Err(LinalgError::InvalidCsr(format!(
                    "non-finite value at ({r}, {c})"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                row_offsets[r + 1] += 1;
                col_indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        let mut m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut offsets = Vec::with_capacity(self.n_rows + 1);
        let mut cols = Vec::with_capacity(self.col_indices.len());
        let mut vals = Vec::with_capacity(self.values.len());
        offsets.push(0);
        for r in 0..self.n_rows {
            for p in self.row_offsets[r]..self.row_offsets[r + 1] {
                if self.values[p] != 0.0 {
                    cols.push(self.col_indices[p]);
                    vals.push(self.values[p]);
                }
            }
            offsets.push(cols.len());
        }
        self.row_offsets = offsets;
        self.col_indices = cols;
        self.values = vals;
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    /// Stored coordinates, row-major.
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        (0..self.n_rows)
            .flat_map(|r| self.row(r).map(move |(c, _)| (r, c)))
            .collect()
    }

    /// `D⁻¹A`: every nonzero row rescaled to sum to one.
    pub fn row_normalize(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            let range = self.row_offsets[r]..self.row_offsets[r + 1];
            let total: f64 = self.values[range.clone()].iter().sum();
            if total != 0.0 {
                for v in &mut out.values[range] {
                    *v /= total;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                d.set(r, c, v);
            }
        }
        d
    }
}

/// `A · X`. Increments the thread-local spmm counter.
pub fn spmm(a: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.n_cols != x.n_rows() {
        return Err(LinalgError::Shape {
            op: "spmm",
            lhs: (a.n_rows, a.n_cols),
            rhs: x.shape(),
        });
    }
    SPMM_CALLS.with(|c| c.set(c.get() + 1));
    let d = x.n_cols();
    let mut out = DenseMatrix::zeros(a.n_rows, d);
    for r in 0..a.n_rows {
        let out_row = out.row_mut(r);
        for (c, v) in a.row(r) {
            for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}

/// `Aᵀ · G`, the adjoint of [`spmm`] in its dense argument.
pub fn spmm_adjoint(a: &SparseMatrix, g: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.n_rows != g.n_rows() {
        return Err(LinalgError::Shape {
            op: "spmm_adjoint",
            lhs: (a.n_rows, a.n_cols),
            rhs: g.shape(),
        });
    }
    SPMM_ADJOINT_CALLS.with(|c| c.set(c.get() + 1));
    let d = g.n_cols();
    let mut out = DenseMatrix::zeros(a.n_cols, d);
    for r in 0..a.n_rows {
        let g_row = g.row(r);
        for (c, v) in a.row(r) {
            for (o, &gv) in out.row_mut(c).iter_mut().zip(g_row) {
                *o += v * gv;
            }
        }
    }
    Ok(out)
}

/// A propagation operand. `Identity` and `Empty` are never materialized and
/// never count as spmm calls.
#[derive(Debug, Clone, Copy)]
pub enum Propagator<'a> {
    Sparse(&'a SparseMatrix),
    Identity,
    Empty,
}

impl Propagator<'_> {
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        match self {
            Propagator::Sparse(a) => spmm(a, x),
            Propagator::Identity => Ok(x.clone()),
            Propagator::Empty => Ok(DenseMatrix::zeros(x.n_rows(), x.n_cols())),
        }
    }

    /// Adjoint application; `None` for `Empty`, whose adjoint contributes nothing.
    pub fn apply_adjoint(&self, g: &DenseMatrix) -> Result<Option<DenseMatrix>, LinalgError> {
        match self {
            Propagator::Sparse(a) => spmm_adjoint(a, g).map(Some),
            Propagator::Identity => Ok(Some(g.clone())),
            Propagator::Empty => Ok(None),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Propagator::Sparse(_))
    }
}
