use super::LinalgError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![value; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != n_rows * n_cols {
            return Err(LinalgError::BufferLength {
                len: values.len(),
                rows: n_rows,
                cols: n_cols,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / n_cols.max(1),
                col: pos % n_cols.max(1),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Builds from nested rows; panics on ragged input. Meant for tests and examples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            values.extend_from_slice(r);
        }
        Self::from_vec(n_rows, n_cols, values).expect("finite entries")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.n_cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|r| self.row(r).to_vec()).collect()
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Shape {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n_cols != other.n_rows {
            return Err(LinalgError::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let out_row = &mut out.values[i * other.n_cols..(i + 1) * other.n_cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n_rows != other.n_rows {
            return Err(LinalgError::Shape {
                op: "t_matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Self::zeros(self.n_cols, other.n_cols);
        for r in 0..self.n_rows {
            let rhs = other.row(r);
            for (p, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.values[p * other.n_cols..(p + 1) * other.n_cols];
                for (o, &b) in out_row.iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n_cols != other.n_cols {
            return Err(LinalgError::Shape {
                op: "matmul_t",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Self::zeros(self.n_rows, other.n_rows);
        for i in 0..self.n_rows {
            let a = self.row(i);
            for j in 0..other.n_rows {
                out.values[i * other.n_rows + j] =
                    a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out.values[j * self.n_rows + i] = self.get(i, j);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape(other, "add")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values,
        })
    }

    /// `self += factor * other`.
    pub fn add_scaled_assign(&mut self, factor: f64, other: &Self) -> Result<(), LinalgError> {
        self.check_same_shape(other, "add_scaled_assign")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn relu(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    /// Gradient of `relu` at `pre`, applied to the upstream gradient `grad`.
    /// The derivative at exactly zero is taken to be 0.
    pub fn relu_grad(pre: &Self, grad: &Self) -> Result<Self, LinalgError> {
        pre.check_same_shape(grad, "relu_grad")?;
        let values = pre
            .values
            .iter()
            .zip(&grad.values)
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect();
        Ok(Self {
            n_rows: pre.n_rows,
            n_cols: pre.n_cols,
            values,
        })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    /// Numerically stable softmax of every row.
    pub fn row_softmax(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            softmax_in_place(out.row_mut(r));
        }
        out
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape(other, "hadamard")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values,
        })
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> Result<f64, LinalgError> {
        self.check_same_shape(other, "dot")?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large |x|.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}
