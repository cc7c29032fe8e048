//! Row-major dense f64 matrix, the universal numeric carrier.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if r == 0 || c == 0 {
            return Err(Error::Config("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Config("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Standard matrix product. Dims must satisfy self.cols == other.rows.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Config(format!(
                "matmul dimension mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite entry {} at flat index {} of {}x{} matrix",
                    v, i, self.rows, self.cols
                )));
            }
        }
        Ok(())
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_row_in_place(out.row_mut(r));
    }
    out
}

/// In-place stabilized softmax over one row.
pub fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Solves a small dense linear system A x = b by Gaussian elimination
/// with partial pivoting. Used by the Gaussian-conditioning oracle.
pub fn solve_small(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Config("solve_small requires square A and matching b".into()));
    }
    let mut m = a.data.clone();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in (col + 1)..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::Numeric(format!(
                "singular system: pivot {:e} at column {}",
                best, col
            )));
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = x[col];
        for c in (col + 1)..n {
            v -= m[col * n + c] * x[c];
        }
        x[col] = v / m[col * n + col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let mut rng = RngState::from_seed(7);
        let m = random_matrix(3, 3, &mut rng);
        let i3 = DenseMatrix::identity(3);
        let p = i3.matmul(&m).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn matmul_hand_case() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.data(), &[3.0, 7.0]);
    }

    fn random_matrix(r: usize, c: usize, rng: &mut RngState) -> DenseMatrix {
        let data = (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect();
        DenseMatrix::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = RngState::from_seed(11);
        let a = random_matrix(5, 7, &mut rng);
        let b = random_matrix(7, 3, &mut rng);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_dim_mismatch_is_config_error() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(crate::Error::Config(_))));
    }

    #[test]
    fn softmax_uniform_row() {
        let m = DenseMatrix::zeros(1, 4);
        let s = softmax_rows(&m);
        for v in s.data() {
            assert!((v - 0.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_analytic_row() {
        let m = DenseMatrix::from_vec(1, 2, vec![2.0_f64.ln(), 0.0]).unwrap();
        let s = softmax_rows(&m);
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() <= 1e-12);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn softmax_large_magnitude_no_overflow() {
        // Extended-precision reference: exp(-1000) under max-subtraction.
        let m = DenseMatrix::from_vec(1, 2, vec![1000.0, 0.0]).unwrap();
        let s = softmax_rows(&m);
        let expected_small = (-1000.0_f64).exp() / (1.0 + (-1000.0_f64).exp());
        assert!(s.get(0, 0).is_finite());
        assert!((s.get(0, 0) - 1.0).abs() <= 1e-12);
        assert!((s.get(0, 1) - expected_small).abs() <= 1e-12);
    }

    #[test]
    fn solve_small_roundtrip() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let x_true = vec![1.0, -2.0, 0.5];
        let mut b = vec![0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a.get(i, j) * x_true[j];
            }
        }
        let x = solve_small(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn solve_small_singular_reports_numeric_error() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_small(&a, &[1.0, 1.0]),
            Err(crate::Error::Numeric(_))
        ));
    }
}
