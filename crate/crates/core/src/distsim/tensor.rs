//! Dense row-major n-d blocks exchanged between simulated ranks.

use std::ops::AddAssign;

use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};

/// Scalar types the simulator can move and reduce.
pub trait Element: Copy + Default + AddAssign + PartialEq + Send + Sync + 'static {}

impl Element for f64 {}
impl Element for Complex64 {}

/// Row-major tensor of any rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(shape_err(format!("{n} elements for shape {shape:?}"), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::default(); n] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
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

    pub fn bytes(&self) -> u64 {
        (self.data.len() * std::mem::size_of::<T>()) as u64
    }

    /// `(outer, extent, inner)` sizes around `dim`.
    fn split_at(&self, dim: usize) -> (usize, usize, usize) {
        let outer = self.shape[..dim].iter().product();
        let inner = self.shape[dim + 1..].iter().product();
        (outer, self.shape[dim], inner)
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err(self.data.len(), format!("{n} elements for {shape:?}")));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Block `start..start + len` along `dim`.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Result<Self> {
        if dim >= self.ndim() || start + len > self.shape[dim] {
            return Err(Error::InvalidArgument(format!(
                "narrow {start}..{} of dim {dim} in shape {:?}",
                start + len,
                self.shape
            )));
        }
        let (outer, n, inner) = self.split_at(dim);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[dim] = len;
        Ok(Self { shape, data })
    }

    /// Concatenation along `dim`; all other extents must agree.
    pub fn concat(parts: &[&Tensor<T>], dim: usize) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut shape = first.shape.clone();
        if dim >= shape.len() {
            return Err(Error::InvalidArgument(format!("dim {dim} out of range for {shape:?}")));
        }
        for p in parts {
            let same = p.ndim() == shape.len()
                && p.shape.iter().zip(&shape).enumerate().all(|(d, (a, b))| d == dim || a == b);
            if !same {
                return Err(shape_err(format!("{shape:?} off dim {dim}"), format!("{:?}", p.shape)));
            }
        }
        shape[dim] = parts.iter().map(|p| p.shape[dim]).sum();
        let (outer, _, inner) = first.split_at(dim);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[dim] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(Self { shape, data })
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(format!("{:?}", self.shape), format!("{:?}", other.shape)));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

impl Tensor<f64> {
    pub fn max_abs_diff(&self, other: &Tensor<f64>) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Tensor<Complex64> {
    pub fn max_abs_diff(&self, other: &Tensor<Complex64>) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}
