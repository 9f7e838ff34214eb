//! Logical-length vectors with a dense or sparse representation.

use std::mem;

use crate::error::{Error, Result};
use crate::value::Item;

/// Transforms emitting vectors store them sparsely when fewer than
/// `length * SPARSE_THRESHOLD` slots hold non-default values.
pub const SPARSE_THRESHOLD: f64 = 0.5;

/// A vector value of logical length `len()`.
///
/// Dense: `values` holds every slot and `indices` is unused. Sparse: `indices` holds
/// strictly increasing positions of the stored `values`; every other slot equals the
/// item default (0, false, empty text).
///
/// Buffers keep their capacity across `start_*` and `clone_from`, so a caller that hands
/// the same `VBuffer` to a getter row after row stops allocating once it has grown.
#[derive(Debug, PartialEq)]
pub struct VBuffer<T> {
    length: usize,
    values: Vec<T>,
    indices: Vec<u32>,
    sparse: bool,
}

impl<T> Default for VBuffer<T> {
    fn default() -> Self {
        VBuffer {
            length: 0,
            values: Vec::new(),
            indices: Vec::new(),
            sparse: false,
        }
    }
}

impl<T: Clone> Clone for VBuffer<T> {
    fn clone(&self) -> Self {
        VBuffer {
            length: self.length,
            values: self.values.clone(),
            indices: if self.sparse { self.indices.clone() } else { Vec::new() },
            sparse: self.sparse,
        }
    }

    fn clone_from(&mut self, source: &Self) {
        self.length = source.length;
        self.sparse = source.sparse;
        self.values.clone_from(&source.values);
        if source.sparse {
            self.indices.clone_from(&source.indices);
        } else {
            self.indices.clear();
        }
    }
}

impl<T> VBuffer<T> {
    pub fn dense(values: Vec<T>) -> Self {
        VBuffer {
            length: values.len(),
            values,
            indices: Vec::new(),
            sparse: false,
        }
    }

    /// Sparse vector; checks that indices are strictly increasing and in range.
    pub fn sparse(length: usize, indices: Vec<u32>, values: Vec<T>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::shape(format!(
                "sparse vector has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::shape("sparse indices must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last as usize >= length {
                return Err(Error::shape(format!(
                    "sparse index {last} out of range for length {length}"
                )));
            }
        }
        Ok(VBuffer {
            length,
            values,
            indices,
            sparse: true,
        })
    }

    /// All-default vector of the given length, stored sparsely.
    pub fn zeros(length: usize) -> Self {
        VBuffer {
            length,
            values: Vec::new(),
            indices: Vec::new(),
            sparse: true,
        }
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Number of stored values.
    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn is_dense(&self) -> bool {
        !self.sparse
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Stored values, for in-place maps that keep the sparsity pattern.
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn indices(&self) -> Option<&[u32]> {
        self.sparse.then_some(&self.indices[..])
    }

    /// Stored `(index, value)` pairs in increasing index order.
    pub fn iter_stored(&self) -> impl Iterator<Item = (usize, &T)> + '_ {
        let sparse = self.sparse;
        self.values.iter().enumerate().map(move |(k, v)| {
            let i = if sparse { self.indices[k] as usize } else { k };
            (i, v)
        })
    }

    /// Value at `index`, or `None` when the slot is not stored (its value is the default).
    pub fn get(&self, index: usize) -> Option<&T> {
        if index >= self.length {
            return None;
        }
        if self.sparse {
            self.indices
                .binary_search(&(index as u32))
                .ok()
                .map(|k| &self.values[k])
        } else {
            self.values.get(index)
        }
    }

    /// Starts refilling as a dense vector of `length`; push exactly `length` values.
    pub fn start_dense(&mut self, length: usize) {
        self.length = length;
        self.sparse = false;
        self.values.clear();
        self.indices.clear();
    }

    /// Starts refilling as a sparse vector of `length`; push entries in increasing order.
    pub fn start_sparse(&mut self, length: usize) {
        self.length = length;
        self.sparse = true;
        self.values.clear();
        self.indices.clear();
    }

    #[inline]
    pub fn push_dense(&mut self, value: T) {
        debug_assert!(!self.sparse && self.values.len() < self.length);
        self.values.push(value);
    }

    #[inline]
    pub fn push_sparse(&mut self, index: usize, value: T) {
        debug_assert!(self.sparse && index < self.length);
        debug_assert!(self.indices.last().is_none_or(|&l| (l as usize) < index));
        self.indices.push(index as u32);
        self.values.push(value);
    }

    /// Calls `f(index, value)` on every stored value, allowing in-place updates.
    pub fn for_each_stored_mut(&mut self, mut f: impl FnMut(usize, &mut T)) {
        if self.sparse {
            for (&i, v) in self.indices.iter().zip(self.values.iter_mut()) {
                f(i as usize, v);
            }
        } else {
            for (i, v) in self.values.iter_mut().enumerate() {
                f(i, v);
            }
        }
    }

    /// Refills as a dense vector with one slot per item of `items`. Slots that already
    /// exist are overwritten in place through `write`, so their buffers are reused.
    pub fn refill_dense<S>(&mut self, items: impl IntoIterator<Item = S>, mut write: impl FnMut(&mut T, S))
    where
        T: Default,
    {
        self.sparse = false;
        self.indices.clear();
        let mut n = 0;
        for item in items {
            if n == self.values.len() {
                self.values.push(T::default());
            }
            write(&mut self.values[n], item);
            n += 1;
        }
        self.values.truncate(n);
        self.length = n;
    }

    pub fn capacity(&self) -> (usize, usize) {
        (self.values.capacity(), self.indices.capacity())
    }
}

impl<T: Item> VBuffer<T> {
    /// Dense copy of this vector.
    pub fn densify(&self) -> Self {
        let mut out = self.clone();
        out.make_dense();
        out
    }

    /// Sparse copy of this vector storing only non-default values.
    pub fn sparsify(&self) -> Self {
        let mut out = self.clone();
        out.make_sparse();
        out
    }

    pub fn make_dense(&mut self) {
        if !self.sparse {
            return;
        }
        let count = self.values.len();
        self.values.resize_with(self.length, T::default);
        // indices[k] >= k, so moving back to front never overwrites an unmoved value
        for k in (0..count).rev() {
            let target = self.indices[k] as usize;
            if target != k {
                let v = mem::take(&mut self.values[k]);
                self.values[target] = v;
            }
        }
        self.indices.clear();
        self.sparse = false;
    }

    pub fn make_sparse(&mut self) {
        if self.sparse {
            let mut w = 0;
            for k in 0..self.values.len() {
                if !self.values[k].is_default() {
                    self.values.swap(w, k);
                    self.indices[w] = self.indices[k];
                    w += 1;
                }
            }
            self.values.truncate(w);
            self.indices.truncate(w);
            return;
        }
        self.indices.clear();
        let mut w = 0;
        for k in 0..self.values.len() {
            if !self.values[k].is_default() {
                self.values.swap(w, k);
                self.indices.push(k as u32);
                w += 1;
            }
        }
        self.values.truncate(w);
        self.sparse = true;
    }

    /// Picks the representation by the sparsity threshold.
    pub fn finish_auto(&mut self) {
        let stored = if self.sparse {
            self.values.iter().filter(|v| !v.is_default()).count()
        } else {
            self.values.iter().filter(|v| !v.is_default()).count()
        };
        if (stored as f64) < self.length as f64 * SPARSE_THRESHOLD {
            self.make_sparse();
        } else {
            self.make_dense();
        }
    }

    /// Value at `index` with unstored slots reported as the default.
    pub fn get_or_default(&self, index: usize) -> T {
        self.get(index).cloned().unwrap_or_default()
    }

    /// Dense values written into `out` (cleared first).
    pub fn copy_dense_into(&self, out: &mut Vec<T>) {
        out.clear();
        if self.sparse {
            out.resize_with(self.length, T::default);
            for (i, v) in self.iter_stored() {
                out[i].clone_from(v);
            }
        } else {
            out.extend(self.values.iter().cloned());
        }
    }

    pub fn to_dense_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.length);
        self.copy_dense_into(&mut out);
        out
    }

    /// Logical equality: same length and equal values slot by slot regardless of
    /// representation.
    pub fn value_eq(&self, other: &Self) -> bool
    where
        T: PartialEq,
    {
        if self.length != other.length {
            return false;
        }
        if !self.sparse && !other.sparse {
            return self.values == other.values;
        }
        (0..self.length).all(|i| match (self.get(i), other.get(i)) {
            (Some(a), Some(b)) => a == b,
            (Some(a), None) | (None, Some(a)) => a.is_default(),
            (None, None) => true,
        })
    }
}

impl VBuffer<f32> {
    /// `w · x` accumulated in f64.
    #[inline]
    pub fn dot(&self, weights: &[f32]) -> f64 {
        let mut acc = 0.0f64;
        if self.sparse {
            for (&i, &v) in self.indices.iter().zip(&self.values) {
                acc += weights[i as usize] as f64 * v as f64;
            }
        } else {
            for (&w, &v) in weights.iter().zip(&self.values) {
                acc += w as f64 * v as f64;
            }
        }
        acc
    }
}
