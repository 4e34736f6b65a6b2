//! Dense row-major tensors.
//!
//! A [`Tensor`] owns a flat buffer plus an extent list. Every operation
//! returns a new tensor; nothing mutates in place once constructed. The
//! element type is either `f32` (runtime default) or `f64` (oracle/test
//! mode), selected through the [`Real`] trait.

mod raw;

pub use raw::{decode_raw, encode_raw, read_raw, read_raw_as, write_raw, AnyTensor, RAW_MAGIC};

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// On-disk element type code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
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

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(Error::Invalid(format!("float mode must be f32 or f64, got {other:?}"))),
        }
    }
}

/// Floating-point element of a tensor.
pub trait Real:
    Copy
    + Send
    + Sync
    + Default
    + PartialOrd
    + Debug
    + Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const DTYPE: DType;
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_real {
    ($t:ty, $dtype:expr, $n:expr) => {
        impl Real for $t {
            const DTYPE: DType = $dtype;
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; $n];
                buf.copy_from_slice(&bytes[..$n]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

impl_real!(f32, DType::F32, 4);
impl_real!(f64, DType::F64, 8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor<{}>{:?} ", std::any::type_name::<T>(), self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..SHOWN])
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from a copy of `data`, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(shape: &[usize], data: &[T]) -> Result<Self> {
        Self::from_vec(shape.to_vec(), data.to_vec())
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeData {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: data[index].to_f64(),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Skips the finiteness scan. The length invariant is still asserted.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; n],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut data = vec![T::ZERO; len];
        data[index] = T::ONE;
        Tensor {
            shape: vec![len],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
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

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat offset of a multi-index; `None` when out of range.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        for ((&i, &n), s) in index.iter().zip(&self.shape).zip(self.strides()) {
            if i >= n {
                return None;
            }
            off += i * s;
        }
        Some(off)
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.offset(index).map(|o| self.data[o])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        self.clone().into_reshaped(shape)
    }

    pub fn into_reshaped(self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Reshape {
                from: self.shape,
                to: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn binop(&self, other: &Self, op: BinOp) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let f: fn(T, T) -> T = match op {
            BinOp::Add => |a, b| a + b,
            BinOp::Sub => |a, b| a - b,
            BinOp::Mul => |a, b| a * b,
        };
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binop(other, BinOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binop(other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binop(other, BinOp::Mul)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|v| v * alpha)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        )
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).sum()
    }

    /// Inner product accumulated in 64-bit.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.to_f64().abs()))
    }

    /// Index of the first maximal element (row-major order).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn construct_and_index() {
        let t = Tensor::<f64>::new(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(&[1, 0]), Some(3.0));
        assert_eq!(t.strides(), vec![2, 1]);
        let z = Tensor::<f64>::new(&[3], &[0.0; 3]).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let err = Tensor::<f32>::new(&[2], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::ShapeData { expected: 2, got: 3, .. }));
    }

    #[test]
    fn non_finite_rejected() {
        let err = Tensor::<f64>::new(&[2], &[1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(Tensor::<f32>::new(&[1], &[f32::INFINITY]).is_err());
    }

    #[test]
    fn reshape_row_major() {
        let t = Tensor::<f64>::new(&[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = t.reshape(&[2, 2]).unwrap();
        assert_eq!(m.get(&[0, 1]), Some(2.0));
        assert_eq!(m.get(&[1, 0]), Some(3.0));
        assert_eq!(m.reshape(&[4]).unwrap(), t);
        assert!(matches!(
            Tensor::<f64>::zeros(&[3]).reshape(&[2, 2]),
            Err(Error::Reshape { .. })
        ));
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::<f64>::new(&[2], &[1.0, 2.0]).unwrap();
        let b = Tensor::<f64>::new(&[2], &[3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        let c = Tensor::<f64>::new(&[2], &[1.0, -2.0]).unwrap();
        let d = Tensor::<f64>::new(&[2], &[0.0, 5.0]).unwrap();
        assert_eq!(c.mul(&d).unwrap().data(), &[0.0, -10.0]);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        assert!(a.add(&Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn binops_match_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..32);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
            let ta = Tensor::new(&[n], &a).unwrap();
            let tb = Tensor::new(&[n], &b).unwrap();
            let sum = ta.add(&tb).unwrap();
            let diff = ta.sub(&tb).unwrap();
            let prod = ta.mul(&tb).unwrap();
            for i in 0..n {
                assert_eq!(sum.data()[i].to_bits(), (a[i] + b[i]).to_bits());
                assert_eq!(diff.data()[i].to_bits(), (a[i] - b[i]).to_bits());
                assert_eq!(prod.data()[i].to_bits(), (a[i] * b[i]).to_bits());
            }
        }
    }

    proptest! {
        #[test]
        fn reshape_round_trip_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = Tensor::new(&[rows, cols], &data).unwrap();
            let back = t.reshape(&[rows * cols]).unwrap().reshape(&[rows, cols]).unwrap();
            prop_assert_eq!(
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
