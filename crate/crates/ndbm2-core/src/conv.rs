//! Dimension-adaptive convolution over 1D, 2D, and 3D spatial data.
//!
//! All three ranks share one sliding-window kernel in valid mode (the
//! caller pads); [`same_padding`] computes the split that preserves
//! `ceil(D/s)` output extents, and [`directional_path`] composes
//! pad -> conv -> GELU as one activated mixing stage.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{PadMode, TensorNd};

/// One convolution: kernel/stride per spatial axis, channel count, layout.
///
/// Depthwise weights have shape `(C, k1..kr)`; dense weights
/// `(C, C, k1..kr)` (square in channels).
#[derive(Debug, Clone)]
pub struct ConvSpec<T> {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub channels: usize,
    pub depthwise: bool,
    pub weights: TensorNd<T>,
    pub bias: Option<TensorNd<T>>,
}

impl<T: Scalar> ConvSpec<T> {
    pub fn spatial_rank(&self) -> usize {
        self.kernel.len()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.kernel.len();
        if !(1..=3).contains(&r) {
            return Err(Error::InvalidConfig("conv spatial rank must be 1, 2, or 3"));
        }
        if self.stride.len() != r {
            return Err(Error::InvalidConfig("stride rank must equal kernel rank"));
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::InvalidConfig(
                "kernel extents and strides must be >= 1",
            ));
        }
        let mut expect: Vec<usize> = if self.depthwise {
            vec![self.channels]
        } else {
            vec![self.channels, self.channels]
        };
        expect.extend_from_slice(&self.kernel);
        if self.weights.shape() != expect.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: expect,
                got: self.weights.shape().to_vec(),
            });
        }
        if let Some(b) = &self.bias {
            if b.shape() != [self.channels] {
                return Err(Error::ShapeMismatch {
                    expected: vec![self.channels],
                    got: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// "Same" padding split for one axis: the smallest total padding for which
/// a valid-mode conv yields output extent `ceil(extent/stride)`.
///
/// `total = max(0, (ceil(D/s) - 1)*s + k - D)`; asymmetric totals put the
/// extra element on the right, matching the trailing-edge convention used
/// module-wide.
pub fn same_padding(extent: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = extent.div_ceil(stride);
    let needed = (out - 1) * stride + kernel;
    let total = needed.saturating_sub(extent);
    let left = total / 2;
    (left, total - left)
}

fn check_input<T: Scalar>(
    x: &TensorNd<T>,
    spec: &ConvSpec<T>,
    spatial_rank: usize,
) -> Result<Vec<usize>> {
    spec.validate()?;
    if spec.spatial_rank() != spatial_rank {
        return Err(Error::InvalidConfig(
            "spec rank does not match operation rank",
        ));
    }
    if x.rank() != 2 + spatial_rank {
        return Err(Error::RankOutOfRange { rank: x.rank() });
    }
    if x.shape()[1] != spec.channels {
        return Err(Error::ShapeMismatch {
            expected: vec![x.shape()[0], spec.channels],
            got: x.shape()[..2].to_vec(),
        });
    }
    let mut out = Vec::with_capacity(spatial_rank);
    for a in 0..spatial_rank {
        let d = x.shape()[2 + a];
        let k = spec.kernel[a];
        let s = spec.stride[a];
        if d < k {
            return Err(Error::EmptyConvOutput {
                extent: d,
                kernel: k,
            });
        }
        out.push((d - k) / s + 1);
    }
    Ok(out)
}

/// Valid-mode convolution over `x (B, C, D1)`.
///
/// Per channel: `Y[i] = sum_j W[.., j] * X[i*s + j] + b`. Depthwise keeps
/// channels independent; dense sums over input channels.
pub fn conv1d<T: Scalar>(x: &TensorNd<T>, spec: &ConvSpec<T>) -> Result<TensorNd<T>> {
    let out_sp = check_input(x, spec, 1)?;
    let (b, c, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, s, o) = (spec.kernel[0], spec.stride[0], out_sp[0]);
    let xd = x.data();
    let w = spec.weights.data();
    let mut out = vec![T::ZERO; b * c * o];

    for bi in 0..b {
        for co in 0..c {
            let bias = spec.bias.as_ref().map_or(T::ZERO, |bv| bv.data()[co]);
            for i in 0..o {
                let mut acc = bias;
                if spec.depthwise {
                    let xrow = &xd[(bi * c + co) * d + i * s..];
                    let wrow = &w[co * k..(co + 1) * k];
                    for (j, &wv) in wrow.iter().enumerate() {
                        acc += wv * xrow[j];
                    }
                } else {
                    for ci in 0..c {
                        let xrow = &xd[(bi * c + ci) * d + i * s..];
                        let wrow = &w[(co * c + ci) * k..(co * c + ci + 1) * k];
                        for (j, &wv) in wrow.iter().enumerate() {
                            acc += wv * xrow[j];
                        }
                    }
                }
                out[(bi * c + co) * o + i] = acc;
            }
        }
    }
    TensorNd::new(&[b, c, o], out)
}

/// Valid-mode convolution over `x (B, C, D1, D2)`, sliding along both
/// spatial axes.
pub fn conv2d<T: Scalar>(x: &TensorNd<T>, spec: &ConvSpec<T>) -> Result<TensorNd<T>> {
    let out_sp = check_input(x, spec, 2)?;
    let (b, c) = (x.shape()[0], x.shape()[1]);
    let (d1, d2) = (x.shape()[2], x.shape()[3]);
    let (k1, k2) = (spec.kernel[0], spec.kernel[1]);
    let (s1, s2) = (spec.stride[0], spec.stride[1]);
    let (o1, o2) = (out_sp[0], out_sp[1]);
    let xd = x.data();
    let w = spec.weights.data();
    let mut out = vec![T::ZERO; b * c * o1 * o2];

    let win = |plane: &[T], i: usize, j: usize, wk: &[T]| {
        let mut acc = T::ZERO;
        for m in 0..k1 {
            let row = &plane[(i * s1 + m) * d2 + j * s2..];
            let wrow = &wk[m * k2..(m + 1) * k2];
            for (n, &wv) in wrow.iter().enumerate() {
                acc += wv * row[n];
            }
        }
        acc
    };

    for bi in 0..b {
        for co in 0..c {
            let bias = spec.bias.as_ref().map_or(T::ZERO, |bv| bv.data()[co]);
            for i in 0..o1 {
                for j in 0..o2 {
                    let mut acc = bias;
                    if spec.depthwise {
                        let plane = &xd[(bi * c + co) * d1 * d2..(bi * c + co + 1) * d1 * d2];
                        acc += win(plane, i, j, &w[co * k1 * k2..(co + 1) * k1 * k2]);
                    } else {
                        for ci in 0..c {
                            let plane = &xd[(bi * c + ci) * d1 * d2..(bi * c + ci + 1) * d1 * d2];
                            let wk = &w[((co * c + ci) * k1 * k2)..((co * c + ci + 1) * k1 * k2)];
                            acc += win(plane, i, j, wk);
                        }
                    }
                    out[((bi * c + co) * o1 + i) * o2 + j] = acc;
                }
            }
        }
    }
    TensorNd::new(&[b, c, o1, o2], out)
}

/// Valid-mode convolution over `x (B, C, D1, D2, D3)`, sliding along all
/// three spatial axes.
pub fn conv3d<T: Scalar>(x: &TensorNd<T>, spec: &ConvSpec<T>) -> Result<TensorNd<T>> {
    let out_sp = check_input(x, spec, 3)?;
    let (b, c) = (x.shape()[0], x.shape()[1]);
    let (d1, d2, d3) = (x.shape()[2], x.shape()[3], x.shape()[4]);
    let (k1, k2, k3) = (spec.kernel[0], spec.kernel[1], spec.kernel[2]);
    let (s1, s2, s3) = (spec.stride[0], spec.stride[1], spec.stride[2]);
    let (o1, o2, o3) = (out_sp[0], out_sp[1], out_sp[2]);
    let xd = x.data();
    let w = spec.weights.data();
    let vol = d1 * d2 * d3;
    let kvol = k1 * k2 * k3;
    let mut out = vec![T::ZERO; b * c * o1 * o2 * o3];

    let win = |block: &[T], i: usize, j: usize, l: usize, wk: &[T]| {
        let mut acc = T::ZERO;
        for m in 0..k1 {
            for n in 0..k2 {
                let row = &block[((i * s1 + m) * d2 + (j * s2 + n)) * d3 + l * s3..];
                let wrow = &wk[(m * k2 + n) * k3..(m * k2 + n + 1) * k3];
                for (p, &wv) in wrow.iter().enumerate() {
                    acc += wv * row[p];
                }
            }
        }
        acc
    };

    for bi in 0..b {
        for co in 0..c {
            let bias = spec.bias.as_ref().map_or(T::ZERO, |bv| bv.data()[co]);
            for i in 0..o1 {
                for j in 0..o2 {
                    for l in 0..o3 {
                        let mut acc = bias;
                        if spec.depthwise {
                            let block = &xd[(bi * c + co) * vol..(bi * c + co + 1) * vol];
                            acc += win(block, i, j, l, &w[co * kvol..(co + 1) * kvol]);
                        } else {
                            for ci in 0..c {
                                let block = &xd[(bi * c + ci) * vol..(bi * c + ci + 1) * vol];
                                let wk = &w[(co * c + ci) * kvol..(co * c + ci + 1) * kvol];
                                acc += win(block, i, j, l, wk);
                            }
                        }
                        out[(((bi * c + co) * o1 + i) * o2 + j) * o3 + l] = acc;
                    }
                }
            }
        }
    }
    TensorNd::new(&[b, c, o1, o2, o3], out)
}

/// Rank-dispatched valid-mode convolution.
pub fn conv_nd<T: Scalar>(x: &TensorNd<T>, spec: &ConvSpec<T>) -> Result<TensorNd<T>> {
    match spec.spatial_rank() {
        1 => conv1d(x, spec),
        2 => conv2d(x, spec),
        3 => conv3d(x, spec),
        _ => Err(Error::InvalidConfig("conv spatial rank must be 1, 2, or 3")),
    }
}

/// One directional mixing path: `gelu(W * X + b)` where `*` is the
/// rank-matched convolution applied with [`same_padding`] on every spatial
/// axis. Boundary positions are zero-filled.
pub fn directional_path<T: Scalar>(x: &TensorNd<T>, spec: &ConvSpec<T>) -> Result<TensorNd<T>> {
    spec.validate()?;
    let rank = spec.spatial_rank();
    if x.rank() != rank + 2 {
        return Err(Error::RankOutOfRange { rank: x.rank() });
    }
    let mut padded = x.clone();
    for a in 0..rank {
        let (l, r) = same_padding(x.shape()[2 + a], spec.kernel[a], spec.stride[a]);
        padded = padded.pad_axis(2 + a, l, r, PadMode::Zero)?;
    }
    Ok(conv_nd(&padded, spec)?.gelu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn ident_spec_1d(c: usize) -> ConvSpec<f32> {
        ConvSpec {
            kernel: vec![1],
            stride: vec![1],
            channels: c,
            depthwise: true,
            weights: TensorNd::full(&[c, 1], 1.0).unwrap(),
            bias: None,
        }
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = TensorNd::new(&[1, 1, 4], vec![1., 2., 3., 4.]).unwrap();
        let y = conv1d(&x, &ident_spec_1d(1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv1d_adjacent_sums() {
        let x = TensorNd::new(&[1, 1, 4], vec![1., 2., 3., 4.]).unwrap();
        let spec = ConvSpec {
            kernel: vec![2],
            stride: vec![1],
            channels: 1,
            depthwise: true,
            weights: TensorNd::full(&[1, 2], 1.0).unwrap(),
            bias: None,
        };
        let y = conv1d(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3]);
        assert_eq!(y.data(), &[3., 5., 7.]);
    }

    #[test]
    fn conv1d_rejects_short_input() {
        let x = TensorNd::new(&[1, 1, 1], vec![1.0f32]).unwrap();
        let spec = ConvSpec {
            kernel: vec![2],
            stride: vec![1],
            channels: 1,
            depthwise: true,
            weights: TensorNd::full(&[1, 2], 1.0).unwrap(),
            bias: None,
        };
        assert!(matches!(
            conv1d(&x, &spec),
            Err(Error::EmptyConvOutput { .. })
        ));
    }

    #[test]
    fn conv2d_full_window_sum() {
        let x = TensorNd::new(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let spec = ConvSpec {
            kernel: vec![2, 2],
            stride: vec![1, 1],
            channels: 1,
            depthwise: true,
            weights: TensorNd::full(&[1, 2, 2], 1.0).unwrap(),
            bias: None,
        };
        let y = conv2d(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let mut rng = SeededRng::new(5);
        let x = TensorNd::from_fn(&[1, 2, 3, 4], |_| rng.next_symmetric(1.0f32)).unwrap();
        let spec = ConvSpec {
            kernel: vec![1, 1],
            stride: vec![1, 1],
            channels: 2,
            depthwise: true,
            weights: TensorNd::full(&[2, 1, 1], 1.0).unwrap(),
            bias: None,
        };
        assert_eq!(conv2d(&x, &spec).unwrap(), x);
    }

    #[test]
    fn conv3d_full_window_sum() {
        let x = TensorNd::new(&[1, 1, 2, 2, 2], (1..=8).map(|v| v as f32).collect()).unwrap();
        let spec = ConvSpec {
            kernel: vec![2, 2, 2],
            stride: vec![1, 1, 1],
            channels: 1,
            depthwise: true,
            weights: TensorNd::full(&[1, 2, 2, 2], 1.0).unwrap(),
            bias: None,
        };
        let y = conv3d(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data(), &[36.0]);
    }

    #[test]
    fn conv3d_identity_kernel() {
        let mut rng = SeededRng::new(6);
        let x = TensorNd::from_fn(&[1, 2, 2, 3, 2], |_| rng.next_symmetric(1.0f32)).unwrap();
        let spec = ConvSpec {
            kernel: vec![1, 1, 1],
            stride: vec![1, 1, 1],
            channels: 2,
            depthwise: true,
            weights: TensorNd::full(&[2, 1, 1, 1], 1.0).unwrap(),
            bias: None,
        };
        assert_eq!(conv3d(&x, &spec).unwrap(), x);
    }

    #[test]
    fn same_padding_reference_cases() {
        assert_eq!(same_padding(5, 3, 1), (1, 1));
        assert_eq!(same_padding(5, 1, 1), (0, 0));
        // total = 3*2 + 4 - 7 = 3, extra element to the right
        assert_eq!(same_padding(7, 4, 2), (1, 2));
    }

    #[test]
    fn same_padding_preserves_extent_via_conv() {
        let mut rng = SeededRng::new(11);
        let x = TensorNd::from_fn(&[1, 1, 7], |_| rng.next_symmetric(1.0f32)).unwrap();
        let spec = ConvSpec {
            kernel: vec![4],
            stride: vec![2],
            channels: 1,
            depthwise: true,
            weights: TensorNd::from_fn(&[1, 4], |_| rng.next_symmetric(1.0f32)).unwrap(),
            bias: None,
        };
        let (l, r) = same_padding(7, 4, 2);
        let padded = x.pad_axis(2, l, r, PadMode::Zero).unwrap();
        let y = conv1d(&padded, &spec).unwrap();
        assert_eq!(y.shape()[2], 7usize.div_ceil(2));
    }

    #[test]
    fn directional_path_zero_weights_is_zero() {
        let x = TensorNd::from_fn(&[1, 2, 5], |i| i as f32).unwrap();
        let spec = ConvSpec {
            kernel: vec![3],
            stride: vec![1],
            channels: 2,
            depthwise: true,
            weights: TensorNd::zeros(&[2, 3]).unwrap(),
            bias: Some(TensorNd::zeros(&[2]).unwrap()),
        };
        let y = directional_path(&x, &spec).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn directional_path_identity_kernel_is_gelu() {
        let mut rng = SeededRng::new(3);
        let x = TensorNd::from_fn(&[1, 2, 6], |_| rng.next_symmetric(2.0f32)).unwrap();
        let y = directional_path(&x, &ident_spec_1d(2)).unwrap();
        assert_eq!(y, x.gelu());
    }
}
