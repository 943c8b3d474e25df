//! Dense row-major f64 matrices with a fixed reduction order.
//!
//! Every sum over an index runs in ascending index order, so results are
//! bitwise reproducible across runs regardless of optimization level.
//! This is the sole numeric container in the crate; there is no
//! parallelism inside these kernels.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy a block of `n` rows starting at row `start` into a new matrix.
    pub fn row_block(&self, start: usize, n: usize) -> Matrix {
        let mut out = Matrix::zeros(n, self.cols);
        out.data
            .copy_from_slice(&self.data[start * self.cols..(start + n) * self.cols]);
        out
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{op}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// `a * b`. Each output element accumulates over `k` in ascending order.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul: {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// `a^T * b` without materializing the transpose. Accumulation over the
/// shared (row) index runs in ascending order, like [`matmul`].
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "matmul_tn: {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &aki) in a_row.iter().enumerate() {
            let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aki * bv;
            }
        }
    }
    Ok(c)
}

pub fn add(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.check_same_shape(b, "add")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Matrix { rows: a.rows, cols: a.cols, data })
}

pub fn sub(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.check_same_shape(b, "sub")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Matrix { rows: a.rows, cols: a.cols, data })
}

/// `a += b` elementwise.
pub fn add_assign(a: &mut Matrix, b: &Matrix) -> Result<()> {
    a.check_same_shape(b, "add_assign")?;
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
    Ok(())
}

/// Sum each column; returns a `cols x 1` vector. Rows accumulate in
/// ascending order.
pub fn col_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.cols, 1);
    for i in 0..m.rows {
        let row = m.row(i);
        for (o, &v) in out.data.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.check_same_shape(b, "hadamard")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Matrix { rows: a.rows, cols: a.cols, data })
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn tanh_m(x: &Matrix) -> Matrix {
    x.map(f64::tanh)
}

/// Row-wise softmax with max subtraction for overflow safety.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Add a column vector (`bias.cols == 1`) to every row of `x`.
pub fn add_col_broadcast(x: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if bias.cols != 1 || bias.rows != x.cols {
        return Err(Error::Shape(format!(
            "add_col_broadcast: {}x{} with bias {}x{}",
            x.rows, x.cols, bias.rows, bias.cols
        )));
    }
    let mut out = x.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        for (v, b) in row.iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn matmul_identity_is_exact() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = matmul(&Matrix::identity(2), &a).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_matches_naive_triple_loop_exactly() {
        let mut rng = RngStream::new(7, 0);
        let a = Matrix::from_fn(7, 5, |_, _| rng.uniform(-1.0, 1.0).unwrap());
        let b = Matrix::from_fn(5, 3, |_, _| rng.uniform(-1.0, 1.0).unwrap());
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        // Same summation order, so bitwise equality is required, not approximate.
        assert_eq!(fast, slow);
    }

    #[test]
    fn matmul_tn_matches_explicit_transpose() {
        let mut rng = RngStream::new(9, 0);
        let a = Matrix::from_fn(6, 4, |_, _| rng.uniform(-1.0, 1.0).unwrap());
        let b = Matrix::from_fn(6, 3, |_, _| rng.uniform(-1.0, 1.0).unwrap());
        let direct = matmul_tn(&a, &b).unwrap();
        let via_t = matmul(&a.transpose(), &b).unwrap();
        assert_eq!(direct, via_t);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("4x2"), "{err}");
    }

    #[test]
    fn elementwise_examples() {
        let z = Matrix::zeros(1, 1);
        assert_eq!(sigmoid(&z).get(0, 0), 0.5);
        assert_eq!(tanh_m(&z).get(0, 0), 0.0);
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let h = hadamard(&a, &b).unwrap();
        assert_eq!(h.data(), &[3.0, 8.0]);
        let s = add(&a, &b).unwrap();
        assert_eq!(s.data(), &[4.0, 6.0]);
        assert!(add(&a, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let s = softmax_rows(&Matrix::zeros(1, 3));
        for j in 0..3 {
            assert!((s.get(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = Matrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let s = softmax_rows(&big);
        assert!(s.is_finite());
        assert!(s.get(0, 0) > 1.0 - 1e-12);
        assert!(s.get(0, 1) < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let s = softmax_rows(&x);
        let z: f64 = x.row(0).iter().map(|v| v.exp()).sum();
        for j in 0..3 {
            assert!((s.get(0, j) - x.get(0, j).exp() / z).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-1e4..1e4f64, 1..24)) {
            let n = vals.len();
            let m = Matrix::from_vec(1, n, vals).unwrap();
            let s = softmax_rows(&m);
            let total: f64 = s.row(0).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(s.row(0).iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn identity_matmul_is_identity(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
            let mut rng = RngStream::new(seed, 1);
            let a = Matrix::from_fn(rows, cols, |_, _| rng.uniform(-10.0, 10.0).unwrap());
            let c = matmul(&Matrix::identity(rows), &a).unwrap();
            prop_assert_eq!(c, a);
        }
    }
}
