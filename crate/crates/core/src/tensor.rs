//! Dense row-major tensors.
//!
//! Reduction order is fixed (left to right per output element) so that any
//! two evaluations of the same op sequence are bit-identical, including
//! across scheduler modes. Nothing here assumes associativity of float
//! addition.

use crate::error::{CoreError, Result};
use crate::rng::StreamRng;
use crate::scalar::{cast, Scalar};

/// Dense n-dimensional array of scalars, row-major, contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Build from shape and data. `product(shape)` must equal `data.len()`.
    pub fn from_vec(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::InvalidShape {
                op: "from_vec",
                details: format!("shape {:?} implies {} elements, got {}", shape, expected, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![S::zero(); n] }
    }

    pub fn scalar(value: S) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// I.i.d. Gaussian draws from the stream, `stddev >= 0`. Consumes exactly
    /// `product(shape)` Gaussian draws; the underlying stream is f64 so the
    /// draw sequence does not depend on `S`.
    pub fn randn(shape: Vec<usize>, rng: &mut StreamRng, stddev: f64) -> Self {
        assert!(stddev >= 0.0, "stddev must be nonnegative");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| cast::<S>(rng.next_gaussian() * stddev)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Reinterpret as a new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape,
            });
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    fn require_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "mul")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn scale(&self, factor: S) -> Self {
        self.map(|a| a * factor)
    }

    /// Pointwise `max(x, 0)`.
    pub fn relu(&self) -> Self {
        self.map(|a| if a > S::zero() { a } else { S::zero() })
    }

    /// Pointwise `1 if x > 0 else 0`; satisfies `relu_grad_mask(x) * x == relu(x)`.
    pub fn relu_grad_mask(&self) -> Self {
        self.map(|a| if a > S::zero() { S::one() } else { S::zero() })
    }

    fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Matrix product of two rank-2 tensors, `[m,k] x [k,n] -> [m,n]`.
    /// The inner sum runs left to right for each output element.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = other.shape[1];
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = S::zero();
                for p in 0..k {
                    acc = acc + self.data[i * k + p] * other.data[p * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Ok(Self { shape: vec![m, n], data: out })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(CoreError::InvalidShape {
                op: "transpose",
                details: format!("expected rank 2, got shape {:?}", self.shape),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self { shape: vec![n, m], data: out })
    }

    /// Flat inner product with a tensor of identical shape.
    pub fn dot(&self, other: &Self) -> Result<S> {
        self.require_same_shape(other, "dot")?;
        let mut acc = S::zero();
        for (&a, &b) in self.data.iter().zip(other.data.iter()) {
            acc = acc + a * b;
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> S {
        let mut acc = S::zero();
        for &a in &self.data {
            acc = acc + a * a;
        }
        acc
    }

    pub fn sum(&self) -> S {
        let mut acc = S::zero();
        for &a in &self.data {
            acc = acc + a;
        }
        acc
    }

    /// In-place `self += factor * other`. Used only by optimizer updates.
    pub fn axpy_inplace(&mut self, factor: S, other: &Self) -> Result<()> {
        self.require_same_shape(other, "axpy_inplace")?;
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += factor * b;
        }
        Ok(())
    }

    /// In-place `self = factor * self + other`. Used only by optimizer updates.
    pub fn scale_add_inplace(&mut self, factor: S, other: &Self) -> Result<()> {
        self.require_same_shape(other, "scale_add_inplace")?;
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a * factor + b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.require_same_shape(other, "max_abs_diff")?;
        let mut worst = 0.0f64;
        for (&a, &b) in self.data.iter().zip(other.data.iter()) {
            worst = worst.max((a.to_f64_exact() - b.to_f64_exact()).abs());
        }
        Ok(worst)
    }

    /// Batch dimension (dim 0).
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Copy out the rows of dim 0 named by `rows` (in order).
    pub fn gather_rows(&self, rows: &[usize]) -> Self {
        let row_len: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(rows.len() * row_len);
        for &r in rows {
            data.extend_from_slice(&self.data[r * row_len..(r + 1) * row_len]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Self { shape, data }
    }

    /// XOR-fold of the element bit patterns; used to assert probe purity.
    pub fn bits_checksum(&self) -> u64 {
        let mut acc = 0u64;
        for (i, &a) in self.data.iter().enumerate() {
            acc ^= a.to_f64_exact().to_bits().rotate_left((i % 61) as u32);
        }
        acc
    }
}

/// Identity matrix of size `n`.
pub fn identity<S: Scalar>(n: usize) -> Tensor<S> {
    let mut t = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        t.data_mut()[i * n + i] = S::one();
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_cases() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.matmul(&identity(2)).unwrap(), a);
        let b = t(&[2, 1], &[5.0, 7.0]);
        assert_eq!(identity::<f64>(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_hand_case() {
        // [[1,2],[3,4]] x [[1],[1]] = [[3],[7]] by hand arithmetic.
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let ones = t(&[2, 1], &[1.0, 1.0]);
        assert_eq!(a.matmul(&ones).unwrap(), t(&[2, 1], &[3.0, 7.0]));
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t(&[3], &[-1.0, 0.0, 2.0]).relu(), t(&[3], &[0.0, 0.0, 2.0]));
        assert_eq!(t(&[2], &[1.0, 2.0]).scale(0.0), t(&[2], &[0.0, 0.0]));
        let sum = t(&[2], &[1.0, 2.0]).add(&t(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(sum, t(&[2], &[4.0, 6.0]));
        assert!(t(&[2], &[1.0, 2.0]).add(&t(&[3], &[0.0; 3])).is_err());
    }

    #[test]
    fn randn_zero_stddev_is_zero() {
        let mut rng = StreamRng::new(7);
        let z: Tensor<f64> = Tensor::randn(vec![2, 2], &mut rng, 0.0);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn randn_deterministic_per_seed() {
        let a: Tensor<f64> = Tensor::randn(vec![3], &mut StreamRng::new(7), 1.0);
        let b: Tensor<f64> = Tensor::randn(vec![3], &mut StreamRng::new(7), 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn randn_sample_mean_within_clt_bound() {
        // 1e5 standard normal draws: |mean| < 0.02 with overwhelming margin
        // (CLT: stderr ~ 0.0032).
        let mut rng = StreamRng::new(1);
        let x: Tensor<f64> = Tensor::randn(vec![100_000], &mut rng, 1.0);
        let mean = x.sum() / 100_000.0;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
    }

    #[test]
    fn randn_consumes_exactly_len_draws() {
        // Drawing [3] then [2] from one stream equals the first 5 draws of
        // a fresh stream.
        let mut rng = StreamRng::new(13);
        let a: Tensor<f64> = Tensor::randn(vec![3], &mut rng, 1.0);
        let b: Tensor<f64> = Tensor::randn(vec![2], &mut rng, 1.0);
        let all: Tensor<f64> = Tensor::randn(vec![5], &mut StreamRng::new(13), 1.0);
        assert_eq!(a.data(), &all.data()[..3]);
        assert_eq!(b.data(), &all.data()[3..]);
    }

    #[test]
    fn gather_rows_copies_in_order() {
        let x = t(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        let g = x.gather_rows(&[2, 0]);
        assert_eq!(g, t(&[2, 2], &[20.0, 21.0, 0.0, 1.0]));
    }
}
