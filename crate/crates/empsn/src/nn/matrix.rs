//! Dense row-major matrices with exactly the operations the tape needs.
//! Debug builds verify finiteness after every producing op, so a NaN is
//! caught at its source rather than three layers later.

use crate::scalar::{real, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> Matrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![R::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<R>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        let m = Self { rows, cols, data };
        m.debug_check_finite();
        m
    }

    pub fn from_rows(rows: &[Vec<R>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::from_vec(rows.len(), cols, rows.concat())
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

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.cols + j] = v;
    }

    pub fn debug_check_finite(&self) {
        debug_assert!(
            self.data.iter().all(|x| x.is_finite()),
            "non-finite matrix entry ({}x{})",
            self.rows,
            self.cols
        );
    }

    /// `self @ other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        // i-k-j order: the inner loop streams both the rhs row and the
        // output row
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == R::zero() {
                    continue;
                }
                let rhs = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        out.debug_check_finite();
        out
    }

    /// `self @ otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_nt shape mismatch");
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let lhs = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..other.rows {
                let rhs = &other.data[j * other.cols..(j + 1) * other.cols];
                out.data[i * other.rows + j] =
                    lhs.iter().zip(rhs).map(|(&a, &b)| a * b).sum();
            }
        }
        out.debug_check_finite();
        out
    }

    /// `selfᵀ @ other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul_tn shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let lhs = &self.data[k * self.cols..(k + 1) * self.cols];
            let rhs = &other.data[k * other.cols..(k + 1) * other.cols];
            for (i, &a) in lhs.iter().enumerate() {
                if a == R::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        out.debug_check_finite();
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        let out = Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        };
        out.debug_check_finite();
        out
    }

    pub fn zip(&self, other: &Self, f: impl Fn(R, R) -> R) -> Self {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        let out = Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        };
        out.debug_check_finite();
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: R) -> Self {
        self.map(|x| x * s)
    }

    pub fn fill(&mut self, v: R) {
        self.data.fill(v);
    }

    /// Sum across columns: `rows × 1`.
    pub fn row_sums(&self) -> Self {
        let data = self
            .data
            .chunks_exact(self.cols.max(1))
            .map(|r| r.iter().copied().sum())
            .collect();
        Self {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    /// Sum down rows: `1 × cols`.
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in self.data.chunks_exact(self.cols.max(1)) {
            for (o, &x) in out.data.iter_mut().zip(r) {
                *o += x;
            }
        }
        out
    }

    pub fn sum(&self) -> R {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |acc, &x| acc.max(x.abs()))
    }

    /// Same shape and entrywise agreement within an absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| approx_eq(a, b, tol))
    }
}

pub(crate) fn sigmoid<R: Real>(x: R) -> R {
    // evaluate through the non-overflowing branch of exp
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

pub(crate) fn swish<R: Real>(x: R) -> R {
    x * sigmoid(x)
}

/// d/dx swish(x) = sigmoid(x)·(1 + x·(1 − sigmoid(x))).
pub(crate) fn swish_grad<R: Real>(x: R) -> R {
    let s = sigmoid(x);
    s * (R::one() + x * (R::one() - s))
}

pub(crate) fn sigmoid_grad_from_value<R: Real>(s: R) -> R {
    s * (R::one() - s)
}

#[allow(dead_code)]
pub(crate) fn approx_eq<R: Real>(a: R, b: R, tol: f64) -> bool {
    (a - b).abs() <= real::<R>(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn matmul_identity_and_small_case() {
        let x = Matrix::from_vec(1, 1, vec![2.0]);
        let w = Matrix::from_vec(1, 1, vec![3.0]);
        assert_eq!(x.matmul(&w).get(0, 0), 6.0);
        let eye = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.matmul(&eye), m);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..10 {
            let (m, k, n) = (
                rng.random_range(1..6usize),
                rng.random_range(1..6usize),
                rng.random_range(1..6usize),
            );
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let got = a.matmul(&b);
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0;
                    for t in 0..k {
                        acc += a.get(i, t) * b.get(t, j);
                    }
                    assert!((got.get(i, j) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let a = random_matrix(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 5, 3);
        assert_eq!(a.matmul_nt(&b), a.matmul(&b.transpose()));
        let c = random_matrix(&mut rng, 4, 5);
        assert_eq!(a.matmul_tn(&c), a.transpose().matmul(&c));
    }

    #[test]
    fn reductions() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.row_sums().data(), &[6.0, 15.0]);
        assert_eq!(m.col_sums().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(m.sum(), 21.0);
    }

    #[test]
    fn swish_values_and_saturation() {
        assert_eq!(swish(0.0f64), 0.0);
        assert!((swish(20.0f64) - 20.0).abs() < 1e-7);
        assert!(swish(-40.0f64).abs() < 1e-12);
    }

    #[test]
    fn swish_gradient_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let h = 1e-5;
        for _ in 0..50 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let fd = (swish(x + h) - swish(x - h)) / (2.0 * h);
            assert!((swish_grad(x) - fd).abs() < 1e-6, "at {x}");
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert_eq!(sigmoid(-800.0f64), 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
