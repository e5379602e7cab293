//! Dense vectors and matrices, activations, parameter initializers, and the
//! seeded random source shared by every module that draws numbers.
//!
//! The sizes involved are small (tens of rows, not thousands), so the matrix
//! type is a plain row-major `Vec<f64>` with straightforward loops. That keeps
//! the arithmetic easy to audit against the gradient checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// True when the stored shape is consistent with the backing buffer.
    /// Deserialized matrices must pass this before use.
    pub fn shape_consistent(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A x`.
    pub fn matvec(&self, x: &Vector) -> Vector {
        assert_eq!(self.cols, x.dim(), "matvec dimension mismatch");
        let mut out = Vector::zeros(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.data()) {
                acc += a * b;
            }
            out.data[r] = acc;
        }
        out
    }

    /// `Aᵀ x`.
    pub fn matvec_t(&self, x: &Vector) -> Vector {
        assert_eq!(self.rows, x.dim(), "matvec_t dimension mismatch");
        let mut out = Vector::zeros(self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x.data[r];
            for (o, a) in out.data.iter_mut().zip(row) {
                *o += a * xr;
            }
        }
        out
    }

    /// `A B`, accumulating over the inner index in ascending order.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.get(i, k) * rhs.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// `self += scale · u vᵀ`.
    pub fn add_outer(&mut self, scale: f64, u: &Vector, v: &Vector) {
        assert_eq!(self.rows, u.dim());
        assert_eq!(self.cols, v.dim());
        for r in 0..self.rows {
            let ur = scale * u.data[r];
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (o, b) in row.iter_mut().zip(&v.data) {
                *o += ur * b;
            }
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Matrix) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (o, b) in self.data.iter_mut().zip(&other.data) {
            *o += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense vector. Serializes as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector { data: vec![0.0; dim] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Vector { data: data.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim());
        Vector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim());
        Vector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn hadamard(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim());
        Vector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Vector) {
        assert_eq!(self.dim(), other.dim());
        for (o, b) in self.data.iter_mut().zip(&other.data) {
            *o += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Index of the largest component; first wins on ties. Empty vectors have
    /// no argmax.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((i, v)),
            }
        }
        best.map(|(i, _)| i)
    }
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn sigmoid(z: &Vector) -> Vector {
    Vector { data: z.data.iter().map(|&v| sigmoid_scalar(v)).collect() }
}

pub fn relu(z: &Vector) -> Vector {
    Vector { data: z.data.iter().map(|&v| v.max(0.0)).collect() }
}

pub fn tanh_vec(z: &Vector) -> Vector {
    Vector { data: z.data.iter().map(|&v| v.tanh()).collect() }
}

/// Softmax with the usual max subtraction so large logits cannot overflow.
pub fn softmax(z: &Vector) -> Vector {
    assert!(z.dim() > 0, "softmax of an empty vector");
    let max = z.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.data.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Vector { data: out }
}

/// Deterministic random source. The same seed always yields the same draw
/// sequence, which is what makes training runs reproducible end to end.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo < hi, "empty uniform range");
        self.rng.random_range(lo..hi)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.rng.random_range(0..n)
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        assert!((0.0..=1.0).contains(&p), "probability out of range");
        self.rng.random_bool(p)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.rng);
    }
}

/// Uniform draws from `±sqrt(6 / (rows + cols))`, the usual fan-based range
/// that keeps early activations in the responsive part of the squashing
/// nonlinearities.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut RandomSource) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.uniform(-bound, bound);
    }
    m
}

/// Square orthogonal matrix: Gram-Schmidt applied to the columns of a
/// standard-normal draw. Recurrent weights start orthogonal so repeated
/// application neither explodes nor collapses the state.
pub fn orthogonal(dim: usize, rng: &mut RandomSource) -> Matrix {
    let mut m = Matrix::zeros(dim, dim);
    for v in m.data.iter_mut() {
        *v = rng.normal();
    }
    // Modified Gram-Schmidt over columns.
    for j in 0..dim {
        for i in 0..j {
            let mut proj = 0.0;
            for r in 0..dim {
                proj += m.get(r, i) * m.get(r, j);
            }
            for r in 0..dim {
                let v = m.get(r, j) - proj * m.get(r, i);
                m.set(r, j, v);
            }
        }
        let mut norm_sq = 0.0;
        for r in 0..dim {
            norm_sq += m.get(r, j) * m.get(r, j);
        }
        let norm = norm_sq.sqrt();
        if norm < 1e-12 {
            // A Gaussian draw is almost surely full rank; fall back to a basis
            // vector just in case.
            for r in 0..dim {
                m.set(r, j, if r == j { 1.0 } else { 0.0 });
            }
        } else {
            for r in 0..dim {
                let v = m.get(r, j) / norm;
                m.set(r, j, v);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_known_values() {
        assert_abs_diff_eq!(sigmoid_scalar(0.0), 0.5);
        assert_abs_diff_eq!(sigmoid_scalar(-2.0), 0.11920292202211755, epsilon = 1e-15);
        assert_abs_diff_eq!(
            sigmoid_scalar(2.0) + sigmoid_scalar(-2.0),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn relu_clamps_negatives() {
        let z = Vector::from_slice(&[-1.5, 0.0, 2.25]);
        assert_eq!(relu(&z).data(), &[0.0, 0.0, 2.25]);
    }

    #[test]
    fn softmax_known_values() {
        let y = softmax(&Vector::from_slice(&[1.0, 2.0]));
        assert_abs_diff_eq!(y.get(0), 0.2689414213699951, epsilon = 1e-15);
        assert_abs_diff_eq!(y.get(1), 0.7310585786300049, epsilon = 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let y = softmax(&Vector::from_slice(&[1000.0, 1000.0, 500.0]));
        assert!(y.is_finite());
        assert_abs_diff_eq!(y.get(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn matvec_matches_hand_computation() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = Vector::from_slice(&[1.0, 0.0, -1.0]);
        assert_eq!(a.matvec(&x).data(), &[-2.0, -2.0]);
        let y = Vector::from_slice(&[1.0, -1.0]);
        assert_eq!(a.matvec_t(&y).data(), &[-3.0, -3.0, -3.0]);
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn sigmoid_saturates_cleanly() {
        let y = sigmoid(&Vector::from_slice(&[100.0, -100.0]));
        assert_abs_diff_eq!(y.get(0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_of_constant_vector_is_uniform() {
        let y = softmax(&Vector::from_slice(&[7.25, 7.25, 7.25]));
        for i in 0..3 {
            assert_abs_diff_eq!(y.get(i), 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    /// Independent oracle: same product computed with a differently organized
    /// loop nest (k outermost, accumulation into the output buffer).
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for k in 0..a.cols() {
            for i in 0..a.rows() {
                let aik = a.get(i, k);
                for j in 0..b.cols() {
                    let v = out.get(i, j) + aik * b.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    #[test]
    fn matmul_agrees_with_independent_loop_order() {
        let mut rng = RandomSource::new(11);
        for _ in 0..5 {
            let mut a = Matrix::zeros(5, 5);
            let mut b = Matrix::zeros(5, 5);
            for v in a.data_mut() {
                *v = rng.uniform(-2.0, 2.0);
            }
            for v in b.data_mut() {
                *v = rng.uniform(-2.0, 2.0);
            }
            let got = a.matmul(&b);
            let want = matmul_oracle(&a, &b);
            for (g, w) in got.data().iter().zip(want.data()) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn glorot_sample_mean_is_centered() {
        let mut rng = RandomSource::new(5);
        let m = glorot_uniform(100, 100, &mut rng);
        let mean: f64 = m.data().iter().sum::<f64>() / m.data().len() as f64;
        assert!(mean.abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn orthogonal_dim_one_is_plus_or_minus_one() {
        let mut rng = RandomSource::new(9);
        let q = orthogonal(1, &mut rng);
        assert_abs_diff_eq!(q.get(0, 0).abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn outer_product_accumulates() {
        let mut m = Matrix::zeros(2, 3);
        let u = Vector::from_slice(&[1.0, 2.0]);
        let v = Vector::from_slice(&[3.0, 4.0, 5.0]);
        m.add_outer(0.5, &u, &v);
        assert_eq!(m.data(), &[1.5, 2.0, 2.5, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn random_source_is_reproducible() {
        let mut a = RandomSource::new(42);
        let mut b = RandomSource::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform(-1.0, 1.0), b.uniform(-1.0, 1.0));
        }
        let mut c = RandomSource::new(43);
        let same: Vec<f64> = (0..10).map(|_| RandomSource::new(42).uniform(0.0, 1.0)).collect();
        let other = c.uniform(0.0, 1.0);
        assert!(same.iter().any(|v| (v - other).abs() > 0.0));
    }

    #[test]
    fn shuffle_is_seed_deterministic() {
        let mut xs: Vec<u32> = (0..20).collect();
        let mut ys = xs.clone();
        RandomSource::new(7).shuffle(&mut xs);
        RandomSource::new(7).shuffle(&mut ys);
        assert_eq!(xs, ys);
    }

    #[test]
    fn glorot_respects_fan_bound() {
        let mut rng = RandomSource::new(1);
        let m = glorot_uniform(20, 30, &mut rng);
        let bound = (6.0 / 50.0f64).sqrt();
        assert!(m.data().iter().all(|v| v.abs() <= bound));
        // Draws should fill most of the range, not cluster at zero.
        assert!(m.data().iter().any(|v| v.abs() > 0.8 * bound));
    }

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let mut rng = RandomSource::new(3);
        let q = orthogonal(12, &mut rng);
        let qtq = q.transpose().matmul(&q);
        for r in 0..12 {
            for c in 0..12 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(qtq.get(r, c), expect, epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(lu_determinant(&q).abs(), 1.0, epsilon = 1e-8);
    }

    /// Determinant by LU with partial pivoting; test-side oracle only.
    fn lu_determinant(m: &Matrix) -> f64 {
        let n = m.rows();
        assert_eq!(n, m.cols());
        let mut a: Vec<Vec<f64>> = (0..n).map(|r| m.row(r).to_vec()).collect();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
                .unwrap();
            if a[pivot][col].abs() < 1e-14 {
                return 0.0;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
        det
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let y = softmax(&Vector::from_vec(z));
            prop_assert!(y.data().iter().all(|&v| v > 0.0));
            let sum: f64 = y.data().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_is_shift_invariant(
            z in proptest::collection::vec(-20.0f64..20.0, 1..8),
            c in -100.0f64..100.0,
        ) {
            let base = softmax(&Vector::from_vec(z.clone()));
            let shifted = softmax(&Vector::from_vec(z.iter().map(|v| v + c).collect()));
            for i in 0..base.dim() {
                prop_assert!((base.get(i) - shifted.get(i)).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_is_permutation_equivariant(
            z in proptest::collection::vec(-10.0f64..10.0, 2..8),
        ) {
            // Reversal is a permutation; softmax must commute with it.
            let forward = softmax(&Vector::from_vec(z.clone()));
            let reversed: Vec<f64> = z.iter().rev().cloned().collect();
            let backward = softmax(&Vector::from_vec(reversed));
            for i in 0..z.len() {
                let j = z.len() - 1 - i;
                prop_assert!((forward.get(i) - backward.get(j)).abs() < 1e-12);
            }
        }

        #[test]
        fn sigmoid_is_bounded_and_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (slo, shi) = (sigmoid_scalar(lo), sigmoid_scalar(hi));
            prop_assert!((0.0..=1.0).contains(&slo) && (0.0..=1.0).contains(&shi));
            prop_assert!(slo <= shi);
            // Strict openness holds wherever f64 can still express it; the
            // curve saturates to exactly 1.0 a little past 36.
            if hi.abs() < 36.0 && lo.abs() < 36.0 {
                prop_assert!(slo > 0.0 && shi < 1.0);
            }
        }

        #[test]
        fn transpose_of_product_matches_product_of_transposes(
            a in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-3.0f64..3.0, 8),
        ) {
            let a = Matrix::from_vec(3, 2, a).unwrap();
            let b = Matrix::from_vec(2, 4, b).unwrap();
            let left = a.matmul(&b).transpose();
            let right = b.transpose().matmul(&a.transpose());
            prop_assert_eq!(left.data(), right.data());
        }
    }
}
