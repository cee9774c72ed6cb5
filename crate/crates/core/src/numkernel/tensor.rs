use std::fmt;

use super::{KernelError, Real};

/// Dense row-major tensor.
///
/// Rank 0 is a scalar (one value, empty shape). Most of the model works on
/// rank-2 matrices; rank-1 vectors are accepted where a row is expected.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, KernelError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(KernelError::BadData {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, KernelError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Tensor::from_fn(
            &[n, n],
            |i| if i / n == i % n { T::one() } else { T::zero() },
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows when viewed as a matrix: rank-1 tensors are a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            n => self.shape[n - 1],
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, KernelError> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// Convert between precisions, e.g. f32 parameters into f64 for gradient checks.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from(v).unwrap()).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Split along the last axis into pieces of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Tensor<T>>, KernelError> {
        let total: usize = widths.iter().sum();
        if total != self.cols() {
            return Err(KernelError::Shape {
                op: "split",
                left: self.shape.clone(),
                right: vec![total],
            });
        }
        let rows = self.rows();
        let mut out = Vec::with_capacity(widths.len());
        let mut start = 0;
        for &w in widths {
            let mut data = Vec::with_capacity(rows * w);
            for r in 0..rows {
                data.extend_from_slice(&self.row(r)[start..start + w]);
            }
            let mut shape = self.shape.clone();
            if shape.is_empty() {
                shape.push(w);
            } else {
                *shape.last_mut().unwrap() = w;
            }
            out.push(Tensor { shape, data });
            start += w;
        }
        Ok(out)
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(
                f,
                "Tensor{:?}[{:?}, {:?}, ... {} values]",
                self.shape,
                self.data[0],
                self.data[1],
                self.data.len()
            )
        }
    }
}

/// C = A·B for row-major A (m×k) and B (k×n).
pub(crate) fn matmul_into<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    if n == 1 {
        for (i, out) in c.iter_mut().enumerate().take(m) {
            *out = dot(&a[i * k..(i + 1) * k], b);
        }
        return;
    }
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij = *c_ij + a_ip * b_pj;
            }
        }
    }
}

/// C += A·Bᵀ for A (m×n) and B (k×n); C is m×k.
pub(crate) fn matmul_bt_acc<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize, c: &mut [T]) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            c[i * k + p] = c[i * k + p] + dot(a_row, b_row);
        }
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let (xc, yc) = (x.chunks_exact(LANES), y.chunks_exact(LANES));
    let tail: T = xc
        .remainder()
        .iter()
        .zip(yc.remainder())
        .fold(T::zero(), |s, (&a, &b)| s + a * b);
    for (xs, ys) in xc.zip(yc) {
        for l in 0..LANES {
            acc[l] = acc[l] + xs[l] * ys[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// C += Aᵀ·B for A (m×k) and B (m×n); C is k×n.
pub(crate) fn matmul_at_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if a_ip == T::zero() {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for (c_pj, &b_ij) in c_row.iter_mut().zip(b_row) {
                *c_pj = *c_pj + a_ip * b_ij;
            }
        }
    }
}
