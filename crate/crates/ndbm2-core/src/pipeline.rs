//! The assembled bidirectional model.
//!
//! `forward` runs: alignment padding -> optional directional pre-mixing
//! conv -> row-major flatten of the spatial axes into one token axis ->
//! channel mapping (FC_in) -> directional cores (the backward path is a
//! flip / core / flip sandwich) -> additive fusion -> FC_out -> unflatten
//! -> trim. Output spatial shape always equals the input spatial shape.
//!
//! The forward pass is split into public stages (`prepare_tokens`,
//! `run_forward_core`, `run_backward_core`, `finish`) so a caller with
//! threads can run the two directional cores concurrently; `forward`
//! composes the same stages serially.

use alloc::vec;
use alloc::vec::Vec;

use crate::align::{align_pad, align_trim, PadRecord};
use crate::conv::{directional_path, ConvSpec};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::ssd::{mamba2_forward, Mamba2Config, Mamba2Weights};
use crate::tensor::TensorNd;

/// Channel-mapped token streams ready for the directional cores, plus the
/// bookkeeping needed to restore the input layout afterwards.
#[derive(Debug, Clone)]
pub struct TokenStreams<T> {
    /// `(B, L, d_model)` input to the forward core.
    pub forward: TensorNd<T>,
    /// `(B, L, d_model)` input to the backward core (before the flip).
    /// Differs from `forward` only when pre-mixing is enabled.
    pub backward: Option<TensorNd<T>>,
    pub pad: PadRecord,
    /// Padded spatial extents, kept for unflattening.
    pub padded_spatial: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BiMamba2NdModel<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub spatial_rank: usize,
    pub bidirectional: bool,
    pub cfg: Mamba2Config,
    /// `(c_in, d_model)` plus bias `(d_model,)`.
    pub fc_in_weight: TensorNd<T>,
    pub fc_in_bias: TensorNd<T>,
    /// `(d_model, c_out)` plus bias `(c_out,)`.
    pub fc_out_weight: TensorNd<T>,
    pub fc_out_bias: TensorNd<T>,
    pub core_forward: Mamba2Weights<T>,
    pub core_backward: Option<Mamba2Weights<T>>,
    /// Optional per-direction pre-mixing convolutions, applied before
    /// flattening. Must be stride-1 so spatial extents are preserved.
    pub premix: Option<(ConvSpec<T>, ConvSpec<T>)>,
}

impl<T: Scalar> BiMamba2NdModel<T> {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(1..=3).contains(&self.spatial_rank) {
            return Err(Error::RankOutOfRange {
                rank: self.spatial_rank,
            });
        }
        if self.bidirectional != self.core_backward.is_some() {
            return Err(Error::InvalidConfig(
                "bidirectional flag must match backward-core presence",
            ));
        }
        let d_model = self.cfg.d_model;
        let checks: [(&TensorNd<T>, Vec<usize>); 4] = [
            (&self.fc_in_weight, vec![self.c_in, d_model]),
            (&self.fc_in_bias, vec![d_model]),
            (&self.fc_out_weight, vec![d_model, self.c_out]),
            (&self.fc_out_bias, vec![self.c_out]),
        ];
        for (t, expect) in checks {
            if t.shape() != expect.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: expect,
                    got: t.shape().to_vec(),
                });
            }
        }
        self.core_forward.validate(&self.cfg)?;
        if let Some(back) = &self.core_backward {
            back.validate(&self.cfg)?;
        }
        if let Some((f, b)) = &self.premix {
            for spec in [f, b] {
                spec.validate()?;
                if spec.spatial_rank() != self.spatial_rank {
                    return Err(Error::InvalidConfig("premix rank must match spatial rank"));
                }
                if spec.channels != self.c_in {
                    return Err(Error::InvalidConfig("premix channels must equal c_in"));
                }
                if spec.stride.iter().any(|&s| s != 1) {
                    return Err(Error::InvalidConfig("premix must be stride-1"));
                }
            }
        }
        Ok(())
    }

    /// Pad, optionally pre-mix per direction, flatten spatial axes to one
    /// token axis (row-major, first spatial axis outermost), and apply the
    /// input channel mapping.
    pub fn prepare_tokens(&self, x: &TensorNd<T>) -> Result<TokenStreams<T>> {
        if x.rank() != self.spatial_rank + 2 {
            return Err(Error::RankOutOfRange { rank: x.rank() });
        }
        if x.shape()[1] != self.c_in {
            return Err(Error::ShapeMismatch {
                expected: vec![x.shape()[0], self.c_in],
                got: x.shape()[..2].to_vec(),
            });
        }
        let (padded, pad) = align_pad(x, self.spatial_rank)?;
        let padded_spatial = pad.padded_shape.clone();

        let map = |t: &TensorNd<T>| -> Result<TensorNd<T>> {
            let b = t.shape()[0];
            let l: usize = padded_spatial.iter().product();
            let flat = t.reshape(&[b, self.c_in, l])?;
            let tokens = flat.permute(&[0, 2, 1])?;
            tokens
                .matmul(&self.fc_in_weight)?
                .add_bias(&self.fc_in_bias)
        };

        let (forward, backward) = match &self.premix {
            None => {
                let tokens = map(&padded)?;
                let backward = self.bidirectional.then(|| tokens.clone());
                (tokens, backward)
            }
            Some((spec_f, spec_b)) => {
                let forward = map(&directional_path(&padded, spec_f)?)?;
                let backward = if self.bidirectional {
                    Some(map(&directional_path(&padded, spec_b)?)?)
                } else {
                    None
                };
                (forward, backward)
            }
        };
        Ok(TokenStreams {
            forward,
            backward,
            pad,
            padded_spatial,
        })
    }

    /// Forward-direction core over `(B, L, d_model)` tokens.
    pub fn run_forward_core(&self, tokens: &TensorNd<T>) -> Result<TensorNd<T>> {
        mamba2_forward(tokens, &self.core_forward, &self.cfg)
    }

    /// Backward-direction core: flip tokens, run, flip back.
    pub fn run_backward_core(&self, tokens: &TensorNd<T>) -> Result<TensorNd<T>> {
        let core = self
            .core_backward
            .as_ref()
            .ok_or(Error::InvalidConfig("model has no backward core"))?;
        let rev = flip_tokens(tokens)?;
        let out = mamba2_forward(&rev, core, &self.cfg)?;
        flip_tokens(&out)
    }

    /// Output channel mapping, unflatten, and trim back to the original
    /// spatial extents.
    pub fn finish(
        &self,
        fused: &TensorNd<T>,
        pad: &PadRecord,
        padded_spatial: &[usize],
    ) -> Result<TensorNd<T>> {
        let b = fused.shape()[0];
        let out_tokens = fused
            .matmul(&self.fc_out_weight)?
            .add_bias(&self.fc_out_bias)?;
        let channel_first = out_tokens.permute(&[0, 2, 1])?;
        let mut shape = vec![b, self.c_out];
        shape.extend_from_slice(padded_spatial);
        let unflat = channel_first.reshape(&shape)?;
        align_trim(&unflat, pad)
    }

    /// End-to-end pass: `(B, c_in, spatial...) -> (B, c_out, spatial...)`
    /// with the spatial extents preserved exactly.
    pub fn forward(&self, x: &TensorNd<T>) -> Result<TensorNd<T>> {
        let streams = self.prepare_tokens(x)?;
        let hf = self.run_forward_core(&streams.forward)?;
        let fused = match &streams.backward {
            Some(tokens) => fuse(&hf, &self.run_backward_core(tokens)?)?,
            None => hf,
        };
        self.finish(&fused, &streams.pad, &streams.padded_spatial)
    }

    /// Deterministic seeded initialisation. Matrices are uniform in
    /// `+-1/sqrt(fan_in)`; `A_log` gives per-step decay in roughly
    /// (0.5, 1) at dt = 1; `dt_bias` puts softplus(dt_bias) in
    /// [0.001, 0.1]; skip and norm gains start at one.
    pub fn init_random(
        cfg: Mamba2Config,
        c_in: usize,
        c_out: usize,
        spatial_rank: usize,
        bidirectional: bool,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(1..=3).contains(&spatial_rank) {
            return Err(Error::RankOutOfRange { rank: spatial_rank });
        }
        if c_in == 0 || c_out == 0 {
            return Err(Error::InvalidConfig("channel counts must be >= 1"));
        }
        let mut rng = SeededRng::new(seed);
        let d_model = cfg.d_model;

        let fc_in_weight = matrix(&mut rng, c_in, d_model)?;
        let fc_in_bias = TensorNd::zeros(&[d_model])?;
        let fc_out_weight = matrix(&mut rng, d_model, c_out)?;
        let fc_out_bias = TensorNd::zeros(&[c_out])?;
        let core_forward = core_weights(&mut rng, &cfg)?;
        let core_backward = if bidirectional {
            Some(core_weights(&mut rng, &cfg)?)
        } else {
            None
        };

        let model = Self {
            c_in,
            c_out,
            spatial_rank,
            bidirectional,
            cfg,
            fc_in_weight,
            fc_in_bias,
            fc_out_weight,
            fc_out_bias,
            core_forward,
            core_backward,
            premix: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Attach seeded stride-1 depthwise pre-mixing convolutions (one per
    /// direction) with the given per-axis kernel extents.
    pub fn with_premix(mut self, kernel: &[usize], seed: u64) -> Result<Self> {
        if kernel.len() != self.spatial_rank {
            return Err(Error::InvalidConfig(
                "premix kernel rank must match spatial rank",
            ));
        }
        let mut rng = SeededRng::new(seed);
        let make = |rng: &mut SeededRng| -> Result<ConvSpec<T>> {
            let fan_in: usize = kernel.iter().product();
            let limit = T::ONE / T::from_usize(fan_in).sqrt();
            let mut wshape = vec![self.c_in];
            wshape.extend_from_slice(kernel);
            Ok(ConvSpec {
                kernel: kernel.to_vec(),
                stride: vec![1; kernel.len()],
                channels: self.c_in,
                depthwise: true,
                weights: TensorNd::from_fn(&wshape, |_| rng.next_symmetric(limit))?,
                bias: Some(TensorNd::zeros(&[self.c_in])?),
            })
        };
        let f = make(&mut rng)?;
        let b = make(&mut rng)?;
        self.premix = Some((f, b));
        self.validate()?;
        Ok(self)
    }
}

/// Reverse the token axis of `(B, L, d)` features.
pub fn flip_tokens<T: Scalar>(h: &TensorNd<T>) -> Result<TensorNd<T>> {
    if h.rank() != 3 {
        return Err(Error::RankOutOfRange { rank: h.rank() });
    }
    h.flip(1)
}

/// Additive feature fusion.
pub fn fuse<T: Scalar>(hf: &TensorNd<T>, hb: &TensorNd<T>) -> Result<TensorNd<T>> {
    hf.add(hb)
}

fn matrix<T: Scalar>(rng: &mut SeededRng, rows: usize, cols: usize) -> Result<TensorNd<T>> {
    let limit = T::ONE / T::from_usize(rows).sqrt();
    TensorNd::from_fn(&[rows, cols], |_| rng.next_symmetric(limit))
}

fn core_weights<T: Scalar>(rng: &mut SeededRng, cfg: &Mamba2Config) -> Result<Mamba2Weights<T>> {
    let conv_limit = T::ONE / T::from_usize(cfg.d_conv).sqrt();
    let w = Mamba2Weights {
        in_proj: matrix(rng, cfg.d_model, cfg.d_in_proj())?,
        conv_weight: TensorNd::from_fn(&[cfg.conv_dim(), cfg.d_conv], |_| {
            rng.next_symmetric(conv_limit)
        })?,
        conv_bias: TensorNd::zeros(&[cfg.conv_dim()])?,
        // softplus(dt_bias) lands in [0.001, 0.1]: dt_bias = ln(exp(dt) - 1)
        dt_bias: TensorNd::from_fn(&[cfg.nheads()], |_| {
            let dt: T =
                T::from_f64(0.001) * (T::from_f64(0.1 / 0.001).ln() * rng.next_unit::<T>()).exp();
            (dt.exp() - T::ONE).ln()
        })?,
        // A = -exp(A_log) with exp(A_log) in (0.05, 0.65): decay in ~(0.52, 0.95) at dt=1
        a_log: TensorNd::from_fn(&[cfg.nheads()], |_| {
            rng.next_range(T::from_f64(0.05), T::from_f64(0.65)).ln()
        })?,
        d_skip: TensorNd::full(&[cfg.nheads()], T::ONE)?,
        norm_gain: TensorNd::full(&[cfg.d_inner()], T::ONE)?,
        out_proj: matrix(rng, cfg.d_inner(), cfg.d_model)?,
    };
    debug_assert!(w.validate(cfg).is_ok());
    Ok(w)
}
