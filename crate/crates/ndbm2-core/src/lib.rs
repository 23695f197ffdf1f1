//! Core kernels for the Nd-BiMamba2 pipeline: a unified bidirectional
//! selective-state-space model over 1D, 2D, and 3D data.
//!
//! The crate is `no_std` (with `alloc`) and carries no I/O; file formats,
//! the CLI, and the wall-clock benchmark harness live in the companion
//! `ndbm2` crate.
//!
//! Module map:
//! - [`tensor`] — dense row-major N-D tensor (rank 1–5) with the primitive
//!   set the pipeline needs (reshape, permute, flip, pad, trim, matmul,
//!   elementwise math, RMS norm).
//! - [`conv`] — dimension-adaptive 1D/2D/3D convolution with a "same"
//!   padding calculator and the activated directional path.
//! - [`align`] — adaptive alignment padding that rounds spatial extents up
//!   to per-rank multiples (64/8/4) so the flattened token count divides
//!   the scan chunk length.
//! - [`ssd`] — one directional Mamba2-style core: input projection, causal
//!   depthwise conv, selective scan (naive reference and chunked fast
//!   path), gated RMS norm, output projection.
//! - [`pipeline`] — the assembled model: pad, flatten, channel mapping,
//!   bidirectional cores, additive fusion, unflatten, trim.
//! - [`cost`] — analytical parameter and multiply-accumulate counting.

#![no_std]

extern crate alloc;

pub mod align;
pub mod conv;
pub mod cost;
pub mod error;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod ssd;
pub mod tensor;

pub use align::{align_pad, align_trim, multiple_for, PadRecord};
pub use conv::{conv1d, conv2d, conv3d, directional_path, same_padding, ConvSpec};
pub use cost::{count_macs, count_params, CostReport, LayerCost};
pub use error::{Error, Result};
pub use pipeline::BiMamba2NdModel;
pub use scalar::Scalar;
pub use ssd::{
    causal_conv, mamba2_forward, mamba2_forward_with, ssd_scan_chunked, ssd_scan_naive,
    GateActivation, Mamba2Config, Mamba2Weights, ScanPath,
};
pub use tensor::{PadMode, TensorNd};
