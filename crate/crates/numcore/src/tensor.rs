//! Dense row-major tensors and the eager kernels shared with the tape.
//!
//! All reductions run sequentially in index order starting from zero, so a
//! given input always produces the same bits.

use std::fmt::{Debug, Display};

use num_traits::Float;

use crate::error::{NumError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    /// Single-byte code used in binary file formats.
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

/// Floating point element type of a [`Tensor`].
pub trait Scalar: Float + Default + Debug + Display + Send + Sync + 'static {
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Tanh,
    Sigmoid,
    Exp,
    Log,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
        }
    }

    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.ln(),
        }
    }
}

/// Logistic function, `1 / (1 + exp(-x))`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// A dense tensor. `shape.iter().product() == data.len()` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NumError::Contract(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(NumError::ShapeData {
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

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<T> = rows
            .iter()
            .inspect(|r| assert_eq!(r.len(), cols, "ragged rows"))
            .flatten()
            .copied()
            .collect();
        Tensor {
            shape: vec![rows.len(), cols],
            data,
        }
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        self.is_scalar().then(|| self.data[0])
    }

    /// Matrix view of the shape: rank 1 `[n]` is a single row `(1, n)`.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            _ => Err(NumError::Contract(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let cols = *self.shape.last().unwrap();
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let cols = *self.shape.last().unwrap();
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sum of squares in index order.
    pub fn sum_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }
}

pub(crate) fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(NumError::NonFinite { op, index }),
        None => Ok(()),
    }
}

/// `C = A·B` for row-major `A: m×k`, `B: k×n`.
pub(crate) fn matmul_kernel<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj = *cj + aip * bj;
            }
        }
    }
    c
}

/// Dot product accumulated left to right from zero.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `C = A·Wᵀ` for row-major `A: m×k`, `W: n×k`.
pub(crate) fn matmul_t_kernel<T: Scalar>(a: &[T], w: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c.push(dot(arow, &w[j * k..(j + 1) * k]));
        }
    }
    c
}

/// Numerically stable softmax of one row, written into `out`.
///
/// Entries with `mask[i] == false` get exactly zero weight and do not take
/// part in the maximum or the normaliser.
pub fn softmax_into<T: Scalar>(row: &[T], mask: Option<&[bool]>, out: &mut [T]) {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let mut mx = T::neg_infinity();
    for (i, &x) in row.iter().enumerate() {
        if live(i) && x > mx {
            mx = x;
        }
    }
    let mut total = T::zero();
    for (i, (o, &x)) in out.iter_mut().zip(row).enumerate() {
        *o = if live(i) { (x - mx).exp() } else { T::zero() };
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Log-softmax of one row: `x_i - max - ln Σ exp(x_j - max)`.
pub fn log_softmax_into<T: Scalar>(row: &[T], out: &mut [T]) {
    let mx = row.iter().fold(T::neg_infinity(), |m, &x| if x > m { x } else { m });
    let total = row.iter().fold(T::zero(), |acc, &x| acc + (x - mx).exp());
    let lse = total.ln();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - mx) - lse;
    }
}

/// Standard matrix product.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 || a.shape.len() != 2 || b.shape.len() != 2 {
        return Err(NumError::Dimension {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let c = matmul_kernel(&a.data, &b.data, m, k, n);
    check_finite("matmul", &c)?;
    Ok(Tensor::from_parts(vec![m, n], c))
}

/// Elementwise `op(t)`. `Log` requires strictly positive entries.
pub fn apply_unary<T: Scalar>(op: UnaryOp, t: &Tensor<T>) -> Result<Tensor<T>> {
    if op == UnaryOp::Log {
        if let Some(index) = t.data.iter().position(|&x| !(x > T::zero())) {
            return Err(NumError::Domain {
                op: "log",
                index,
                value: t.data[index].as_f64(),
            });
        }
    }
    let out = t.map(|x| op.eval(x));
    check_finite(op.name(), &out.data)?;
    Ok(out)
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows<T: Scalar>(m: &Tensor<T>) -> Result<Tensor<T>> {
    check_finite("softmax_rows input", &m.data)?;
    let (r, c) = m.dims2()?;
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        softmax_into(&m.data[i * c..(i + 1) * c], None, &mut out[i * c..(i + 1) * c]);
    }
    Ok(Tensor::from_parts(m.shape.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1., 2.], &[3., 4.]]);
        assert_eq!(matmul(&m(&[&[1., 0.], &[0., 1.]]), &a).unwrap(), a);
        assert_eq!(
            matmul(&m(&[&[1., 0.], &[0., 0.]]), &m(&[&[5.], &[7.]])).unwrap(),
            m(&[&[5.], &[0.]])
        );
        assert_eq!(matmul(&a, &m(&[&[1.], &[1.]])).unwrap(), m(&[&[3.], &[7.]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Tensor::<f64>::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, NumError::Dimension { .. }));
    }

    #[test]
    fn unary_examples() {
        let z = Tensor::vector(vec![0.0]);
        assert_eq!(apply_unary(UnaryOp::Tanh, &z).unwrap().data(), &[0.0]);
        assert_eq!(apply_unary(UnaryOp::Sigmoid, &z).unwrap().data(), &[0.5]);
        let e = apply_unary(UnaryOp::Exp, &Tensor::vector(vec![2f64.ln(), 0.0])).unwrap();
        assert_abs_diff_eq!(e.data()[0], 2.0, epsilon = 1e-15);
        assert_eq!(e.data()[1], 1.0);
    }

    #[test]
    fn log_of_nonpositive_reports_index() {
        let err = apply_unary(UnaryOp::Log, &Tensor::vector(vec![1.0, 2.0, 0.0])).unwrap_err();
        assert_eq!(
            err,
            NumError::Domain {
                op: "log",
                index: 2,
                value: 0.0
            }
        );
    }

    #[test]
    fn exp_overflow_is_reported() {
        assert!(matches!(
            apply_unary(UnaryOp::Exp, &Tensor::vector(vec![1e4])),
            Err(NumError::NonFinite { .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_rows(&m(&[&[0., 0.]])).unwrap().data(), &[0.5, 0.5]);
        let s = softmax_rows(&m(&[&[2f64.ln(), 0.]])).unwrap();
        assert_abs_diff_eq!(s.data()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.data()[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn masked_softmax_ignores_masked_entries() {
        let mut out = [0.0; 3];
        softmax_into(&[1.0, 5.0, 1.0], Some(&[true, false, true]), &mut out);
        assert_eq!(out, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f64>::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn dtype_codes_roundtrip() {
        for d in [DType::F32, DType::F64] {
            assert_eq!(DType::from_code(d.code()), Some(d));
        }
        assert_eq!(DType::from_code(7), None);
        assert_eq!(Tensor::<f32>::zeros(&[1]).dtype(), DType::F32);
    }
}
