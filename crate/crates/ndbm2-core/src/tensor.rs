//! Dense N-D tensor, rank 1–5, contiguous row-major storage.
//!
//! Every operation produces a fresh contiguous tensor; there are no lazy
//! views. Accumulation order inside `matmul` is fixed (ascending inner
//! index per output element), so results are deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_RANK: usize = 5;

/// Trailing-edge padding fill rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PadMode {
    /// Mirror without repeating the edge element: `[1,2,3] + 2 -> [1,2,3,2,1]`.
    Reflect,
    /// Repeat the edge element: `[1,2,3] + 2 -> [1,2,3,3,3]`.
    Replicate,
    /// Append zeros.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorNd<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::RankOutOfRange { rank: shape.len() });
    }
    let mut n: usize = 1;
    for &e in shape {
        if e == 0 {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
            });
        }
        n = n.checked_mul(e).ok_or(Error::InvalidShape {
            shape: shape.to_vec(),
        })?;
    }
    Ok(n)
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl<T: Scalar> TensorNd<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != data.len() {
            return Err(Error::SizeMismatch {
                expected: n,
                got: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::ZERO; n],
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    /// Rank-2 identity matrix.
    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::ONE;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Shape manipulation
    // ------------------------------------------------------------------

    /// Same data, new shape; row-major element order is preserved.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        let n = checked_len(new_shape)?;
        if n != self.data.len() {
            return Err(Error::SizeMismatch {
                expected: n,
                got: self.data.len(),
            });
        }
        Ok(Self {
            shape: new_shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Reorder axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        if perm.len() != rank {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: perm.to_vec(),
            });
        }
        let mut seen = [false; MAX_RANK];
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(Error::AxisOutOfRange { axis: p, rank });
            }
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let in_strides = self.strides();
        let out_strides = strides_of(&out_shape);
        let mut data = vec![T::ZERO; self.data.len()];
        let mut idx = vec![0usize; rank];
        for (flat, slot) in data.iter_mut().enumerate() {
            // Decompose the output flat index, then map through perm.
            let mut rem = flat;
            for a in 0..rank {
                idx[a] = rem / out_strides[a];
                rem %= out_strides[a];
            }
            let mut src = 0;
            for a in 0..rank {
                src += idx[a] * in_strides[perm[a]];
            }
            *slot = self.data[src];
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Reverse element order along `axis`; other axes untouched.
    pub fn flip(&self, axis: usize) -> Result<Self> {
        self.check_axis(axis)?;
        let strides = self.strides();
        let extent = self.shape[axis];
        let stride = strides[axis];
        let block = stride * extent;
        let mut data = self.data.clone();
        let n = data.len();
        let mut base = 0;
        while base < n {
            for inner in 0..stride {
                for i in 0..extent / 2 {
                    let a = base + i * stride + inner;
                    let b = base + (extent - 1 - i) * stride + inner;
                    data.swap(a, b);
                }
            }
            base += block;
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Pad along one axis with `left`/`right` extra elements per the mode.
    ///
    /// Reflect excludes the edge element, so it needs
    /// `left, right <= extent - 1`.
    pub fn pad_axis(&self, axis: usize, left: usize, right: usize, mode: PadMode) -> Result<Self> {
        self.check_axis(axis)?;
        let extent = self.shape[axis];
        if mode == PadMode::Reflect && (left > extent - 1 || right > extent - 1) {
            return Err(Error::ReflectTooLong {
                axis,
                extent,
                amount: left.max(right),
            });
        }
        if left == 0 && right == 0 {
            return Ok(self.clone());
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] = extent + left + right;
        let mut out = Self::zeros(&out_shape)?;

        let in_strides = self.strides();
        let stride = in_strides[axis];
        let out_extent = out_shape[axis];
        let in_block = stride * extent;
        let out_block = stride * out_extent;
        let outer = self.data.len() / in_block;

        for o in 0..outer {
            let src_base = o * in_block;
            let dst_base = o * out_block;
            for j in 0..out_extent {
                // Source index along the axis for output position j.
                let rel = j as isize - left as isize;
                let src_i = if rel < 0 {
                    match mode {
                        PadMode::Reflect => Some((-rel) as usize),
                        PadMode::Replicate => Some(0),
                        PadMode::Zero => None,
                    }
                } else if (rel as usize) < extent {
                    Some(rel as usize)
                } else {
                    let over = rel as usize - (extent - 1);
                    match mode {
                        PadMode::Reflect => Some(extent - 1 - over),
                        PadMode::Replicate => Some(extent - 1),
                        PadMode::Zero => None,
                    }
                };
                if let Some(si) = src_i {
                    let src = src_base + si * stride;
                    let dst = dst_base + j * stride;
                    out.data[dst..dst + stride].copy_from_slice(&self.data[src..src + stride]);
                }
            }
        }
        Ok(out)
    }

    /// Append `amount` elements after the end of `axis` per the mode.
    pub fn pad_trailing(&self, axis: usize, amount: usize, mode: PadMode) -> Result<Self> {
        self.pad_axis(axis, 0, amount, mode)
    }

    /// Remove the last `amount` elements along `axis`.
    pub fn trim_trailing(&self, axis: usize, amount: usize) -> Result<Self> {
        self.check_axis(axis)?;
        let extent = self.shape[axis];
        if amount >= extent {
            return Err(Error::TrimTooLong {
                axis,
                extent,
                amount,
            });
        }
        if amount == 0 {
            return Ok(self.clone());
        }
        let keep = extent - amount;
        let strides = self.strides();
        let stride = strides[axis];
        let in_block = stride * extent;
        let out_block = stride * keep;
        let outer = self.data.len() / in_block;
        let mut data = Vec::with_capacity(outer * out_block);
        for o in 0..outer {
            let base = o * in_block;
            data.extend_from_slice(&self.data[base..base + out_block]);
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] = keep;
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    // ------------------------------------------------------------------
    // Linear algebra
    // ------------------------------------------------------------------

    /// Matrix product `self (.., M, K) x rhs (K, N) -> (.., M, N)`.
    ///
    /// Leading axes of `self` batch; `rhs` must be rank 2. Each output
    /// element accumulates over `k` in ascending order.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rank() < 2 {
            return Err(Error::RankOutOfRange { rank: self.rank() });
        }
        if rhs.rank() != 2 {
            return Err(Error::RankOutOfRange { rank: rhs.rank() });
        }
        let k = self.shape[self.rank() - 1];
        let m = self.shape[self.rank() - 2];
        if rhs.shape[0] != k {
            return Err(Error::InnerDimMismatch {
                lhs: k,
                rhs: rhs.shape[0],
            });
        }
        let n = rhs.shape[1];
        let batch = self.data.len() / (m * k);

        let mut out_shape = self.shape.clone();
        out_shape[self.rank() - 1] = n;
        let mut out = vec![T::ZERO; batch * m * n];

        for bm in 0..batch * m {
            let a_row = &self.data[bm * k..(bm + 1) * k];
            let o_row = &mut out[bm * n..(bm + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &rhs.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: out_shape,
            data: out,
        })
    }

    // ------------------------------------------------------------------
    // Elementwise
    // ------------------------------------------------------------------

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn exp(&self) -> Self {
        self.map(T::exp)
    }

    pub fn gelu(&self) -> Self {
        self.map(T::gelu)
    }

    pub fn softplus(&self) -> Self {
        self.map(T::softplus)
    }

    /// Broadcast-add a rank-1 `bias` over the last axis.
    pub fn add_bias(&self, bias: &Self) -> Result<Self> {
        let last = self.shape[self.rank() - 1];
        if bias.rank() != 1 || bias.shape[0] != last {
            return Err(Error::ShapeMismatch {
                expected: vec![last],
                got: bias.shape.clone(),
            });
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(last) {
            for (o, &b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// RMS normalization over the last axis:
    /// `t / sqrt(mean(t^2) + eps) * gain` per trailing-axis vector.
    pub fn rmsnorm(&self, gain: &Self, eps: T) -> Result<Self> {
        let last = self.shape[self.rank() - 1];
        if gain.rank() != 1 || gain.shape[0] != last {
            return Err(Error::ShapeMismatch {
                expected: vec![last],
                got: gain.shape.clone(),
            });
        }
        let mut out = self.clone();
        let inv_n = T::ONE / T::from_usize(last);
        for row in out.data.chunks_mut(last) {
            let mut ss = T::ZERO;
            for &v in row.iter() {
                ss += v * v;
            }
            let inv_rms = T::ONE / (ss * inv_n + eps).sqrt();
            for (o, &g) in row.iter_mut().zip(&gain.data) {
                *o = *o * inv_rms * g;
            }
        }
        Ok(out)
    }
}
