//! Dense row-major multi-dimensional arrays.
//!
//! `Array<T>` is the value carrier for the whole crate: images, logits,
//! per-pixel probability/evidence/uncertainty maps and parameter tensors.
//! It is deliberately small: elementwise math, axis reductions, axis
//! expansion and slicing. Anything fancier lives in [`super::kernels`].

use crate::error::{Error, Result};

use super::scalar::Real;

/// Dense array of scalars in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Array<T> {
    /// Builds an array from a shape and row-major data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Array { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Array { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    /// A single-element array, the broadcastable scalar.
    pub fn scalar(value: T) -> Self {
        Array { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// True when the array participates in scalar broadcasting.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
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

    /// The single value of a one-element array.
    pub fn item(&self) -> Result<T> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!("item() on array of shape {:?}", self.shape)))
        }
    }

    /// Row-major strides for this shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Array<T> {
        Array { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// True if every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise combination with scalar broadcasting: shapes must match,
    /// or one operand must be a single-element array.
    pub fn zip(&self, other: &Array<T>, f: impl Fn(T, T) -> T) -> Result<Array<T>> {
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            Ok(Array { shape: self.shape.clone(), data })
        } else if other.is_scalar() {
            let b = other.data[0];
            Ok(self.map(|a| f(a, b)))
        } else if self.is_scalar() {
            let a = self.data[0];
            Ok(other.map(|b| f(a, b)))
        } else {
            Err(Error::Shape(format!(
                "elementwise op on shapes {:?} and {:?}",
                self.shape, other.shape
            )))
        }
    }

    /// In-place accumulation `self += other`, with scalar broadcast on `other`.
    pub fn add_assign(&mut self, other: &Array<T>) -> Result<()> {
        if self.shape == other.shape {
            for (a, &b) in self.data.iter_mut().zip(&other.data) {
                *a = *a + b;
            }
            Ok(())
        } else if other.is_scalar() {
            let b = other.data[0];
            for a in self.data.iter_mut() {
                *a = *a + b;
            }
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "accumulate shapes {:?} and {:?}",
                self.shape, other.shape
            )))
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Sum over a set of axes. With `keepdim` the reduced axes stay as size 1,
    /// otherwise they are removed (a full reduction yields shape `[1]`).
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Array<T>> {
        for &ax in axes {
            if ax >= self.shape.len() {
                return Err(Error::Shape(format!(
                    "axis {} out of range for shape {:?}",
                    ax, self.shape
                )));
            }
        }
        let mut reduce = vec![false; self.shape.len()];
        for &ax in axes {
            reduce[ax] = true;
        }

        let kept_shape: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .map(|(i, &d)| if reduce[i] { 1 } else { d })
            .collect();
        let out_strides = strides_of(&kept_shape);
        let mut out = vec![T::zero(); kept_shape.iter().product()];

        let in_strides = self.strides();
        for (lin, &v) in self.data.iter().enumerate() {
            let mut rem = lin;
            let mut out_idx = 0usize;
            for d in 0..self.shape.len() {
                let coord = rem / in_strides[d];
                rem %= in_strides[d];
                if !reduce[d] {
                    out_idx += coord * out_strides[d];
                }
            }
            out[out_idx] = out[out_idx] + v;
        }

        let shape = if keepdim {
            kept_shape
        } else {
            let s: Vec<usize> = self
                .shape
                .iter()
                .enumerate()
                .filter(|(i, _)| !reduce[*i])
                .map(|(_, &d)| d)
                .collect();
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        };
        Array::from_vec(shape, out)
    }

    /// Tiles a size-1 axis up to length `n`.
    pub fn expand_axis(&self, axis: usize, n: usize) -> Result<Array<T>> {
        if axis >= self.shape.len() || self.shape[axis] != 1 {
            return Err(Error::Shape(format!(
                "expand axis {} of shape {:?}",
                axis, self.shape
            )));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut data = Vec::with_capacity(self.data.len() * n);
        for o in 0..outer {
            let block = &self.data[o * inner..(o + 1) * inner];
            for _ in 0..n {
                data.extend_from_slice(block);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = n;
        Array::from_vec(shape, data)
    }

    /// Contiguous slice `[start, start+len)` along one axis.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Array<T>> {
        if axis >= self.shape.len() || start + len > self.shape[axis] {
            return Err(Error::Shape(format!(
                "narrow axis {} range {}..{} of shape {:?}",
                axis,
                start,
                start + len,
                self.shape
            )));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let axis_len = self.shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Array::from_vec(shape, data)
    }

    /// Adds `patch` into the `[start, start+len)` range of `axis`; the
    /// scatter counterpart of [`Array::narrow`].
    pub fn narrow_add_assign(&mut self, patch: &Array<T>, axis: usize, start: usize) -> Result<()> {
        let len = patch.shape[axis];
        if axis >= self.shape.len() || start + len > self.shape[axis] {
            return Err(Error::Shape(format!(
                "scatter axis {} range {}..{} of shape {:?}",
                axis,
                start,
                start + len,
                self.shape
            )));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let axis_len = self.shape[axis];
        for o in 0..outer {
            let dst = (o * axis_len + start) * inner;
            let src = o * len * inner;
            for i in 0..len * inner {
                self.data[dst + i] = self.data[dst + i] + patch.data[src + i];
            }
        }
        Ok(())
    }
}

/// Row-major strides for a shape.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}
