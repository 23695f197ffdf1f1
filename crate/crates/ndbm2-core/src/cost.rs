//! Analytical parameter and multiply-accumulate counting.
//!
//! `macs_total` counts the projection and convolution layers (one MAC per
//! multiply-add, bias adds included), the convention module-hook FLOPs
//! profilers apply to a model whose scan runs as an opaque custom op.
//! The selective-scan recurrence work is reported separately:
//! [`CostReport::scan_macs`] uses the sequential-recurrence formula
//! `2*L*H*P*N` (state update + output contraction) plus the `L*H*P` skip
//! term, regardless of which scan path executes, and
//! [`CostReport::scan_macs_chunked`] gives the blockwise path's actual
//! arithmetic for comparison.
//!
//! Parameter counts are exact over every weight and bias element and do
//! not depend on the input shape.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::align::multiple_for;
use crate::error::{Error, Result};
use crate::pipeline::BiMamba2NdModel;
use crate::scalar::Scalar;
use crate::ssd::Mamba2Config;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub params_total: u64,
    pub macs_total: u64,
    pub per_layer: Vec<LayerCost>,
    /// Flattened post-alignment token count times batch; 0 for a
    /// parameters-only report.
    pub tokens: u64,
    /// Scan recurrence MACs by the sequential formula (informational,
    /// not part of `macs_total`).
    pub scan_macs: u64,
    /// Actual arithmetic of the blockwise scan path (informational).
    pub scan_macs_chunked: u64,
    /// Median wall time, filled by a benchmark harness.
    pub wall_ms: Option<f64>,
}

impl CostReport {
    fn from_layers(per_layer: Vec<LayerCost>, tokens: u64) -> Self {
        let params_total = per_layer.iter().map(|l| l.params).sum();
        let macs_total = per_layer.iter().map(|l| l.macs).sum();
        Self {
            params_total,
            macs_total,
            per_layer,
            tokens,
            scan_macs: 0,
            scan_macs_chunked: 0,
            wall_ms: None,
        }
    }

    pub fn gmacs(&self) -> f64 {
        self.macs_total as f64 / 1e9
    }
}

struct LayerDims {
    fc_in_params: u64,
    fc_out_params: u64,
    in_proj: u64,
    conv: u64,
    ssm_scalars: u64,
    norm: u64,
    out_proj: u64,
    premix_per_dir: u64,
}

fn layer_dims(cfg: &Mamba2Config, c_in: usize, c_out: usize, premix_fan: Option<u64>) -> LayerDims {
    let d_model = cfg.d_model as u64;
    let d_inner = cfg.d_inner() as u64;
    let conv_dim = cfg.conv_dim() as u64;
    let nheads = cfg.nheads() as u64;
    LayerDims {
        fc_in_params: c_in as u64 * d_model + d_model,
        fc_out_params: d_model * c_out as u64 + c_out as u64,
        in_proj: d_model * cfg.d_in_proj() as u64,
        conv: conv_dim * cfg.d_conv as u64 + conv_dim,
        ssm_scalars: 3 * nheads,
        norm: d_inner,
        out_proj: d_inner * d_model,
        // depthwise: one kernel plus bias per channel
        premix_per_dir: premix_fan.map_or(0, |fan| c_in as u64 * (fan + 1)),
    }
}

fn push_core_layers(rows: &mut Vec<LayerCost>, dir: &str, d: &LayerDims, tokens: u64) {
    rows.push(LayerCost {
        name: format!("{dir}.in_proj"),
        params: d.in_proj,
        macs: tokens * d.in_proj,
    });
    rows.push(LayerCost {
        name: format!("{dir}.conv"),
        params: d.conv,
        macs: tokens * d.conv,
    });
    rows.push(LayerCost {
        name: format!("{dir}.ssm"),
        params: d.ssm_scalars,
        macs: 0,
    });
    rows.push(LayerCost {
        name: format!("{dir}.norm"),
        params: d.norm,
        macs: 0,
    });
    rows.push(LayerCost {
        name: format!("{dir}.out_proj"),
        params: d.out_proj,
        macs: tokens * d.out_proj,
    });
}

fn build_report<T: Scalar>(model: &BiMamba2NdModel<T>, tokens: u64) -> CostReport {
    let premix_fan = model
        .premix
        .as_ref()
        .map(|(f, _)| f.kernel.iter().product::<usize>() as u64);
    let d = layer_dims(&model.cfg, model.c_in, model.c_out, premix_fan);
    let mut rows = Vec::new();
    if premix_fan.is_some() {
        rows.push(LayerCost {
            name: String::from("fwd.premix"),
            params: d.premix_per_dir,
            macs: tokens * d.premix_per_dir,
        });
        if model.bidirectional {
            rows.push(LayerCost {
                name: String::from("bwd.premix"),
                params: d.premix_per_dir,
                macs: tokens * d.premix_per_dir,
            });
        }
    }
    rows.push(LayerCost {
        name: String::from("fc_in"),
        params: d.fc_in_params,
        macs: tokens * d.fc_in_params,
    });
    push_core_layers(&mut rows, "fwd", &d, tokens);
    if model.bidirectional {
        push_core_layers(&mut rows, "bwd", &d, tokens);
    }
    rows.push(LayerCost {
        name: String::from("fc_out"),
        params: d.fc_out_params,
        macs: tokens * d.fc_out_params,
    });

    let mut report = CostReport::from_layers(rows, tokens);
    let dirs = if model.bidirectional { 2 } else { 1 };
    let (h, p, n) = (
        model.cfg.nheads() as u64,
        model.cfg.headdim as u64,
        model.cfg.d_state as u64,
    );
    report.scan_macs = dirs * tokens * (2 * h * p * n + h * p);
    report.scan_macs_chunked = dirs * chunked_scan_macs(&model.cfg, tokens);
    report
}

// Blockwise-path arithmetic per head and chunk of length Q: the
// lower-triangle pair sums (N-dot plus P-wide application each), the
// carried-state read and update (N*P each per token), and the end-of-chunk
// state decay.
fn chunked_scan_macs(cfg: &Mamba2Config, tokens: u64) -> u64 {
    let q = cfg.chunk as u64;
    let h = cfg.nheads() as u64;
    let (n, p) = (cfg.d_state as u64, cfg.headdim as u64);
    let nchunks = tokens / q;
    let tri = q * (q + 1) / 2;
    let per_chunk = tri * (n + p) + q * n * p + q * n * p + n * p + q * p;
    nchunks * h * per_chunk
}

/// Exact per-layer parameter count. Input-shape independent.
pub fn count_params<T: Scalar>(model: &BiMamba2NdModel<T>) -> Result<CostReport> {
    model.validate()?;
    Ok(build_report(model, 0))
}

/// Per-layer MAC count for a `batch x spatial` input at the
/// post-alignment token count.
pub fn count_macs<T: Scalar>(
    model: &BiMamba2NdModel<T>,
    batch: usize,
    spatial: &[usize],
) -> Result<CostReport> {
    model.validate()?;
    if batch == 0 {
        return Err(Error::InvalidConfig("batch must be >= 1"));
    }
    if spatial.len() != model.spatial_rank {
        return Err(Error::ShapeMismatch {
            expected: alloc::vec![model.spatial_rank],
            got: alloc::vec![spatial.len()],
        });
    }
    let m = multiple_for(model.spatial_rank)?;
    let mut tokens = batch as u64;
    for &e in spatial {
        if e == 0 {
            return Err(Error::InvalidShape {
                shape: spatial.to_vec(),
            });
        }
        tokens *= e.div_ceil(m) as u64 * m as u64;
    }
    Ok(build_report(model, tokens))
}
