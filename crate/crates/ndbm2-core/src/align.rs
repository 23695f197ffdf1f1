//! Adaptive alignment padding.
//!
//! Spatial extents are rounded up to per-rank multiples — 64 for 1D, 8
//! per axis for 2D, 4 per axis for 3D — so the flattened token count is
//! always a multiple of 64 (64 = 64^1 = 8^2 = 4^3), the scan chunk
//! length. Padding is appended trailing-edge only, reflect mode with a
//! per-axis replicate fallback, so trimming is a pure suffix removal and
//! original token positions are unchanged.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{PadMode, TensorNd};

/// Everything needed to undo one [`align_pad`] call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadRecord {
    /// Spatial extents before padding.
    pub original_shape: Vec<usize>,
    /// Spatial extents after padding (each a multiple of the rank multiple).
    pub padded_shape: Vec<usize>,
    /// Trailing amount appended per axis; always < the rank multiple.
    pub per_axis_amount: Vec<usize>,
    /// Fill rule used per axis (reflect, or replicate when the amount
    /// exceeds extent - 1).
    pub mode_used: Vec<PadMode>,
}

impl PadRecord {
    /// True when no padding was added on any axis.
    pub fn is_noop(&self) -> bool {
        self.per_axis_amount.iter().all(|&a| a == 0)
    }

    /// Flattened token count of the padded spatial shape.
    pub fn padded_tokens(&self) -> usize {
        self.padded_shape.iter().product()
    }
}

/// Per-axis alignment multiple for a spatial rank: 64 (1D), 8 (2D), 4 (3D).
pub fn multiple_for(rank: usize) -> Result<usize> {
    match rank {
        1 => Ok(64),
        2 => Ok(8),
        3 => Ok(4),
        _ => Err(Error::RankOutOfRange { rank }),
    }
}

/// Round each spatial extent of `x (B, C, spatial...)` up to the next
/// multiple for the rank, appending trailing-edge reflect padding
/// (replicate per axis when the amount exceeds extent - 1). Always
/// succeeds; the returned record suffices to invert.
pub fn align_pad<T: Scalar>(
    x: &TensorNd<T>,
    spatial_rank: usize,
) -> Result<(TensorNd<T>, PadRecord)> {
    let m = multiple_for(spatial_rank)?;
    if x.rank() != spatial_rank + 2 {
        return Err(Error::RankOutOfRange { rank: x.rank() });
    }
    let spatial = &x.shape()[2..];
    let mut padded = x.clone();
    let mut rec = PadRecord {
        original_shape: spatial.to_vec(),
        padded_shape: Vec::with_capacity(spatial_rank),
        per_axis_amount: Vec::with_capacity(spatial_rank),
        mode_used: Vec::with_capacity(spatial_rank),
    };
    for (a, &extent) in spatial.iter().enumerate() {
        let target = extent.div_ceil(m) * m;
        let amount = target - extent;
        let mode = if amount < extent {
            PadMode::Reflect
        } else {
            PadMode::Replicate
        };
        if amount > 0 {
            padded = padded.pad_trailing(2 + a, amount, mode)?;
        }
        rec.padded_shape.push(target);
        rec.per_axis_amount.push(amount);
        rec.mode_used.push(mode);
    }
    Ok((padded, rec))
}

/// Remove the trailing padded region, restoring the original spatial
/// extents. `y`'s spatial extents must equal the record's padded shape.
pub fn align_trim<T: Scalar>(y: &TensorNd<T>, rec: &PadRecord) -> Result<TensorNd<T>> {
    let rank = rec.padded_shape.len();
    if y.rank() != rank + 2 || y.shape()[2..] != rec.padded_shape[..] {
        return Err(Error::ShapeMismatch {
            expected: rec.padded_shape.clone(),
            got: y
                .shape()
                .get(2..)
                .map(<[usize]>::to_vec)
                .unwrap_or_default(),
        });
    }
    let mut out = y.clone();
    for (a, &amount) in rec.per_axis_amount.iter().enumerate() {
        if amount > 0 {
            out = out.trim_trailing(2 + a, amount)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec;

    #[test]
    fn multiples_per_rank() {
        assert_eq!(multiple_for(1).unwrap(), 64);
        assert_eq!(multiple_for(2).unwrap(), 8);
        assert_eq!(multiple_for(3).unwrap(), 4);
        assert!(multiple_for(4).is_err());
        assert!(multiple_for(0).is_err());
    }

    fn pad_shape(spatial: &[usize]) -> (Vec<usize>, usize) {
        let rank = spatial.len();
        let mut shape = vec![1, 2];
        shape.extend_from_slice(spatial);
        let x = TensorNd::<f32>::zeros(&shape).unwrap();
        let (_, rec) = align_pad(&x, rank).unwrap();
        (rec.padded_shape.clone(), rec.padded_tokens())
    }

    #[test]
    fn reference_rows_1d() {
        assert_eq!(pad_shape(&[1024]), (vec![1024], 1024));
        assert_eq!(pad_shape(&[1029]), (vec![1088], 1088));
        assert_eq!(pad_shape(&[1001]), (vec![1024], 1024));
    }

    #[test]
    fn reference_rows_2d() {
        assert_eq!(pad_shape(&[128, 128]), (vec![128, 128], 16384));
        assert_eq!(pad_shape(&[129, 127]), (vec![136, 128], 17408));
        assert_eq!(pad_shape(&[113, 128]), (vec![120, 128], 15360));
    }

    #[test]
    fn reference_rows_3d() {
        assert_eq!(pad_shape(&[32, 32, 32]), (vec![32, 32, 32], 32768));
        // per-axis rounding in input order: 27->28, 33->36, 32->32
        assert_eq!(pad_shape(&[27, 33, 32]), (vec![28, 36, 32], 32256));
        assert_eq!(pad_shape(&[37, 29, 31]), (vec![40, 32, 32], 40960));
    }

    #[test]
    fn pad_content_reflects_then_trims_back() {
        let x = TensorNd::new(&[1, 1, 3], vec![1., 2., 3.]).unwrap();
        let (p, rec) = align_pad(&x, 1).unwrap();
        assert_eq!(p.shape(), &[1, 1, 64]);
        // amount 61 > extent-1, so the whole axis falls back to replicate
        assert_eq!(rec.mode_used[0], PadMode::Replicate);
        assert_eq!(&p.data()[..5], &[1., 2., 3., 3., 3.]);
        let back = align_trim(&p, &rec).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn reflect_mode_used_when_it_fits() {
        let x = TensorNd::<f32>::from_fn(&[1, 1, 60], |i| i as f32).unwrap();
        let (p, rec) = align_pad(&x, 1).unwrap();
        assert_eq!(rec.mode_used[0], PadMode::Reflect);
        assert_eq!(rec.per_axis_amount, vec![4]);
        // reflected tail excludes the edge element: .., 58, 59, 58, 57, 56, 55
        assert_eq!(&p.data()[58..64], &[58., 59., 58., 57., 56., 55.]);
    }

    #[test]
    fn noop_when_already_aligned() {
        let x = TensorNd::<f32>::zeros(&[2, 3, 64]).unwrap();
        let (p, rec) = align_pad(&x, 1).unwrap();
        assert!(rec.is_noop());
        assert_eq!(p, x);
        assert_eq!(align_trim(&p, &rec).unwrap(), x);
    }

    #[test]
    fn trim_checks_padded_shape() {
        let x = TensorNd::<f32>::zeros(&[1, 4, 1029]).unwrap();
        let (p, rec) = align_pad(&x, 1).unwrap();
        assert_eq!(p.shape(), &[1, 4, 1088]);
        assert_eq!(align_trim(&p, &rec).unwrap().shape(), &[1, 4, 1029]);
        let wrong = TensorNd::<f32>::zeros(&[1, 4, 1087]).unwrap();
        assert!(matches!(
            align_trim(&wrong, &rec),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn flattened_product_divisible_by_64() {
        let mut rng = SeededRng::new(99);
        for rank in 1..=3usize {
            for _ in 0..40 {
                let spatial: Vec<usize> = (0..rank)
                    .map(|_| 1 + (rng.next_u64() % 50) as usize)
                    .collect();
                let (padded, tokens) = pad_shape(&spatial);
                assert_eq!(tokens % 64, 0, "spatial {spatial:?} -> {padded:?}");
                let m = multiple_for(rank).unwrap();
                for (orig, pad) in spatial.iter().zip(&padded) {
                    assert!(
                        pad.is_multiple_of(m) && pad - orig < m,
                        "minimality violated"
                    );
                }
            }
        }
    }
}
