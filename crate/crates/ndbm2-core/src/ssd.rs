//! One directional Mamba2-style selective state-space core.
//!
//! The scan evaluates, per batch and head, the recurrence
//!
//! - `a_t = exp(dt_t * A_h)`
//! - `h_t = a_t * h_{t-1} + dt_t * (x_t (x) B_t)`
//! - `y_t = <h_t, C_t> + D_h * x_t`
//!
//! with `h_0 = 0`, state shape `(headdim, d_state)`, and `B_t`, `C_t`
//! shared across the heads of a group. [`ssd_scan_naive`] is the
//! sequential reference; [`ssd_scan_chunked`] computes the same values
//! blockwise — intra-chunk contributions through cumulative-decay-weighted
//! products, inter-chunk through a carried state at chunk granularity.
//!
//! [`mamba2_forward`] wraps the scan with the projections of a full block:
//! input projection, causal depthwise conv, gated RMS norm, output
//! projection.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::TensorNd;

const NORM_EPS: f64 = 1e-5;

/// Activation used for the causal-conv output and the `z` gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    #[default]
    Gelu,
    Silu,
}

impl GateActivation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            GateActivation::Gelu => x.gelu(),
            GateActivation::Silu => x.silu(),
        }
    }
}

/// Hyperparameters of one directional core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Mamba2Config {
    /// Token feature width entering and leaving the core.
    pub d_model: usize,
    /// State width per head.
    pub d_state: usize,
    /// Inner expansion factor: `d_inner = expand * d_model`.
    pub expand: usize,
    /// Channels per head: `nheads = d_inner / headdim`.
    pub headdim: usize,
    /// Causal conv kernel length.
    pub d_conv: usize,
    /// Scan block length.
    pub chunk: usize,
    /// B/C sharing groups.
    pub ngroups: usize,
    /// Gate / conv activation.
    #[serde(default)]
    pub gate: GateActivation,
}

impl Default for Mamba2Config {
    fn default() -> Self {
        Self {
            d_model: 128,
            d_state: 128,
            expand: 2,
            headdim: 64,
            d_conv: 4,
            chunk: 64,
            ngroups: 1,
            gate: GateActivation::Gelu,
        }
    }
}

impl Mamba2Config {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn nheads(&self) -> usize {
        self.d_inner() / self.headdim
    }

    /// Channels passing through the causal conv: `d_inner + 2*ngroups*d_state`.
    pub fn conv_dim(&self) -> usize {
        self.d_inner() + 2 * self.ngroups * self.d_state
    }

    /// Input-projection output width: gate + conv channels + dt heads.
    pub fn d_in_proj(&self) -> usize {
        self.d_inner() + self.conv_dim() + self.nheads()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_state == 0 || self.expand == 0 || self.ngroups == 0 {
            return Err(Error::InvalidConfig("all core dimensions must be >= 1"));
        }
        if self.headdim == 0 || !self.d_inner().is_multiple_of(self.headdim) {
            return Err(Error::InvalidConfig("d_inner must be divisible by headdim"));
        }
        if self.nheads() == 0 {
            return Err(Error::InvalidConfig("nheads must be >= 1"));
        }
        if !self.nheads().is_multiple_of(self.ngroups) {
            return Err(Error::InvalidConfig("nheads must be divisible by ngroups"));
        }
        if self.chunk == 0 || self.d_conv == 0 {
            return Err(Error::InvalidConfig("chunk and d_conv must be >= 1"));
        }
        Ok(())
    }
}

/// Named parameter set of one directional core.
#[derive(Debug, Clone, PartialEq)]
pub struct Mamba2Weights<T> {
    /// `(d_model, d_in_proj)`, no bias.
    pub in_proj: TensorNd<T>,
    /// Depthwise causal kernel `(conv_dim, d_conv)`.
    pub conv_weight: TensorNd<T>,
    /// Per-channel conv bias `(conv_dim,)`.
    pub conv_bias: TensorNd<T>,
    /// `(nheads,)`; dt = softplus(dt_raw + dt_bias).
    pub dt_bias: TensorNd<T>,
    /// `(nheads,)`; decay A = -exp(A_log).
    pub a_log: TensorNd<T>,
    /// `(nheads,)` skip scale.
    pub d_skip: TensorNd<T>,
    /// `(d_inner,)` RMS-norm gain.
    pub norm_gain: TensorNd<T>,
    /// `(d_inner, d_model)`, no bias.
    pub out_proj: TensorNd<T>,
}

impl<T: Scalar> Mamba2Weights<T> {
    /// Check every tensor shape against `cfg`.
    pub fn validate(&self, cfg: &Mamba2Config) -> Result<()> {
        cfg.validate()?;
        let checks: [(&TensorNd<T>, Vec<usize>); 8] = [
            (&self.in_proj, vec![cfg.d_model, cfg.d_in_proj()]),
            (&self.conv_weight, vec![cfg.conv_dim(), cfg.d_conv]),
            (&self.conv_bias, vec![cfg.conv_dim()]),
            (&self.dt_bias, vec![cfg.nheads()]),
            (&self.a_log, vec![cfg.nheads()]),
            (&self.d_skip, vec![cfg.nheads()]),
            (&self.norm_gain, vec![cfg.d_inner()]),
            (&self.out_proj, vec![cfg.d_inner(), cfg.d_model]),
        ];
        for (t, expect) in checks {
            if t.shape() != expect.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: expect,
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Per-head decay coefficients `A = -exp(A_log)`.
    pub fn decay(&self) -> Vec<T> {
        self.a_log.data().iter().map(|&v| -v.exp()).collect()
    }
}

struct ScanDims {
    b: usize,
    l: usize,
    h: usize,
    p: usize,
    g: usize,
    n: usize,
}

fn check_scan_shapes<T: Scalar>(
    x: &TensorNd<T>,
    dt: &TensorNd<T>,
    a: &[T],
    b_mat: &TensorNd<T>,
    c_mat: &TensorNd<T>,
    d_skip: &[T],
) -> Result<ScanDims> {
    if x.rank() != 4 {
        return Err(Error::RankOutOfRange { rank: x.rank() });
    }
    let (b, l, h, p) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if dt.shape() != [b, l, h] {
        return Err(Error::ShapeMismatch {
            expected: vec![b, l, h],
            got: dt.shape().to_vec(),
        });
    }
    if b_mat.rank() != 4 || b_mat.shape()[0] != b || b_mat.shape()[1] != l {
        return Err(Error::ShapeMismatch {
            expected: vec![b, l, 0, 0],
            got: b_mat.shape().to_vec(),
        });
    }
    let (g, n) = (b_mat.shape()[2], b_mat.shape()[3]);
    if c_mat.shape() != [b, l, g, n] {
        return Err(Error::ShapeMismatch {
            expected: vec![b, l, g, n],
            got: c_mat.shape().to_vec(),
        });
    }
    if a.len() != h || d_skip.len() != h {
        return Err(Error::InvalidConfig(
            "per-head parameter length must equal nheads",
        ));
    }
    if !h.is_multiple_of(g) {
        return Err(Error::InvalidConfig("nheads must be divisible by ngroups"));
    }
    Ok(ScanDims { b, l, h, p, g, n })
}

/// Sequential reference scan.
///
/// Shapes: `x (B, L, H, P)`, `dt (B, L, H)` (post-softplus, >= 0),
/// `a`/`d_skip` per head, `b_mat`/`c_mat` `(B, L, G, N)`.
/// Returns `(B, L, H, P)`.
#[allow(clippy::too_many_arguments)]
pub fn ssd_scan_naive<T: Scalar>(
    x: &TensorNd<T>,
    dt: &TensorNd<T>,
    a: &[T],
    b_mat: &TensorNd<T>,
    c_mat: &TensorNd<T>,
    d_skip: &[T],
) -> Result<TensorNd<T>> {
    let dims = check_scan_shapes(x, dt, a, b_mat, c_mat, d_skip)?;
    let ScanDims { b, l, h, p, g, n } = dims;
    let heads_per_group = h / g;
    let xd = x.data();
    let dtd = dt.data();
    let bd = b_mat.data();
    let cd = c_mat.data();
    let mut out = vec![T::ZERO; b * l * h * p];

    for bi in 0..b {
        for hi in 0..h {
            let gi = hi / heads_per_group;
            // state (P, N), zero-initialised per sequence
            let mut state = vec![T::ZERO; p * n];
            for t in 0..l {
                let dt_t = dtd[(bi * l + t) * h + hi];
                let decay = (dt_t * a[hi]).exp();
                let b_row = &bd[((bi * l + t) * g + gi) * n..((bi * l + t) * g + gi + 1) * n];
                let c_row = &cd[((bi * l + t) * g + gi) * n..((bi * l + t) * g + gi + 1) * n];
                let x_row = &xd[((bi * l + t) * h + hi) * p..((bi * l + t) * h + hi + 1) * p];
                let y_row = &mut out[((bi * l + t) * h + hi) * p..((bi * l + t) * h + hi + 1) * p];
                for (pi, (&xv, y)) in x_row.iter().zip(y_row.iter_mut()).enumerate() {
                    let dtx = dt_t * xv;
                    let srow = &mut state[pi * n..(pi + 1) * n];
                    let mut acc = T::ZERO;
                    for ((s, &bv), &cv) in srow.iter_mut().zip(b_row).zip(c_row) {
                        *s = decay * *s + dtx * bv;
                        acc += *s * cv;
                    }
                    *y = acc + d_skip[hi] * xv;
                }
            }
        }
    }
    TensorNd::new(&[b, l, h, p], out)
}

/// Blockwise scan, mathematically identical to [`ssd_scan_naive`].
///
/// `l` must be divisible by `chunk`. Within a chunk, token `i` receives
/// the carried state scaled by the cumulative decay up to `i` plus a
/// lower-triangular decay-weighted sum over tokens `j <= i`; the carried
/// state advances once per chunk.
#[allow(clippy::too_many_arguments)]
pub fn ssd_scan_chunked<T: Scalar>(
    x: &TensorNd<T>,
    dt: &TensorNd<T>,
    a: &[T],
    b_mat: &TensorNd<T>,
    c_mat: &TensorNd<T>,
    d_skip: &[T],
    chunk: usize,
) -> Result<TensorNd<T>> {
    let dims = check_scan_shapes(x, dt, a, b_mat, c_mat, d_skip)?;
    let ScanDims { b, l, h, p, g, n } = dims;
    if chunk == 0 || !l.is_multiple_of(chunk) {
        return Err(Error::ChunkContract { len: l, chunk });
    }
    let q = chunk;
    let nchunks = l / q;
    let heads_per_group = h / g;
    let xd = x.data();
    let dtd = dt.data();
    let bd = b_mat.data();
    let cd = c_mat.data();
    let mut out = vec![T::ZERO; b * l * h * p];

    // scratch reused across chunks
    let mut cum = vec![T::ZERO; q];
    let mut decay_in = vec![T::ZERO; q]; // exp(cum[i]): carried-state factor
    let mut decay_out = vec![T::ZERO; q]; // exp(cum[q-1] - cum[j]): state-update factor
    let mut dtv = vec![T::ZERO; q];
    let mut cb = vec![T::ZERO; q * q]; // <C_i, B_j> for j <= i

    for bi in 0..b {
        for hi in 0..h {
            let gi = hi / heads_per_group;
            let mut state = vec![T::ZERO; p * n];
            for c in 0..nchunks {
                let base_t = c * q;
                // cumulative decay exponent within the chunk (inclusive)
                let mut run = T::ZERO;
                for i in 0..q {
                    let dt_t = dtd[(bi * l + base_t + i) * h + hi];
                    dtv[i] = dt_t;
                    run += dt_t * a[hi];
                    cum[i] = run;
                }
                let total = cum[q - 1];
                for i in 0..q {
                    decay_in[i] = cum[i].exp();
                    decay_out[i] = (total - cum[i]).exp();
                }

                let bc_off = |t: usize| ((bi * l + t) * g + gi) * n;

                // pairwise <C_i, B_j> for the lower triangle
                for i in 0..q {
                    let c_row = &cd[bc_off(base_t + i)..bc_off(base_t + i) + n];
                    for j in 0..=i {
                        let b_row = &bd[bc_off(base_t + j)..bc_off(base_t + j) + n];
                        let mut dot = T::ZERO;
                        for (&cv, &bv) in c_row.iter().zip(b_row) {
                            dot += cv * bv;
                        }
                        cb[i * q + j] = dot;
                    }
                }

                for i in 0..q {
                    let t = base_t + i;
                    let c_row = &cd[bc_off(t)..bc_off(t) + n];
                    let x_i = &xd[((bi * l + t) * h + hi) * p..((bi * l + t) * h + hi + 1) * p];
                    let (lo, hi_end) =
                        (((bi * l + t) * h + hi) * p, ((bi * l + t) * h + hi + 1) * p);
                    let y_row = &mut out[lo..hi_end];

                    // carried-state contribution: exp(cum[i]) * <state, C_i>
                    for (pi, y) in y_row.iter_mut().enumerate() {
                        let srow = &state[pi * n..(pi + 1) * n];
                        let mut acc = T::ZERO;
                        for (&s, &cv) in srow.iter().zip(c_row) {
                            acc += s * cv;
                        }
                        *y = decay_in[i] * acc;
                    }

                    // intra-chunk contribution: sum_{j<=i} M[i,j] * dt_j * x_j
                    for j in 0..=i {
                        let w = cb[i * q + j] * (cum[i] - cum[j]).exp() * dtv[j];
                        let x_j = &xd[((bi * l + base_t + j) * h + hi) * p
                            ..((bi * l + base_t + j) * h + hi + 1) * p];
                        for (y, &xv) in y_row.iter_mut().zip(x_j) {
                            *y += w * xv;
                        }
                    }

                    // skip path
                    for (y, &xv) in y_row.iter_mut().zip(x_i) {
                        *y += d_skip[hi] * xv;
                    }
                }

                // advance the carried state to the chunk end
                let total_decay = decay_in[q - 1];
                for s in state.iter_mut() {
                    *s *= total_decay;
                }
                for j in 0..q {
                    let t = base_t + j;
                    let w = decay_out[j] * dtv[j];
                    let b_row = &bd[bc_off(t)..bc_off(t) + n];
                    let x_j = &xd[((bi * l + t) * h + hi) * p..((bi * l + t) * h + hi + 1) * p];
                    for (pi, &xv) in x_j.iter().enumerate() {
                        let wx = w * xv;
                        let srow = &mut state[pi * n..(pi + 1) * n];
                        for (s, &bv) in srow.iter_mut().zip(b_row) {
                            *s += wx * bv;
                        }
                    }
                }
            }
        }
    }
    TensorNd::new(&[b, l, h, p], out)
}

/// Depthwise causal 1-D conv over `x (B, L, C)` followed by the gate
/// activation. The input is left-padded with `d_conv - 1` zeros, so output
/// `t` depends only on inputs at positions `<= t`.
pub fn causal_conv<T: Scalar>(
    x: &TensorNd<T>,
    weight: &TensorNd<T>,
    bias: &TensorNd<T>,
    activation: GateActivation,
) -> Result<TensorNd<T>> {
    if x.rank() != 3 {
        return Err(Error::RankOutOfRange { rank: x.rank() });
    }
    let (b, l, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if weight.rank() != 2 || weight.shape()[0] != c {
        return Err(Error::ShapeMismatch {
            expected: vec![c, 0],
            got: weight.shape().to_vec(),
        });
    }
    let k = weight.shape()[1];
    if bias.shape() != [c] {
        return Err(Error::ShapeMismatch {
            expected: vec![c],
            got: bias.shape().to_vec(),
        });
    }
    let xd = x.data();
    let wd = weight.data();
    let bd = bias.data();
    let mut out = vec![T::ZERO; b * l * c];
    for bi in 0..b {
        for t in 0..l {
            let o_row = &mut out[(bi * l + t) * c..(bi * l + t + 1) * c];
            for (ci, o) in o_row.iter_mut().enumerate() {
                let mut acc = bd[ci];
                // tap j reads input position t - (k-1) + j; earlier taps
                // fall off the front and read implicit zeros
                for j in 0..k {
                    let rel = t as isize - (k as isize - 1) + j as isize;
                    if rel >= 0 {
                        acc += wd[ci * k + j] * xd[(bi * l + rel as usize) * c + ci];
                    }
                }
                *o = activation.apply(acc);
            }
        }
    }
    TensorNd::new(&[b, l, c], out)
}

/// Which scan evaluates the recurrence inside [`mamba2_forward_with`].
/// Both produce the same values; the blockwise path is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanPath {
    #[default]
    Chunked,
    Naive,
}

/// Full directional core over a token sequence `x (B, L, d_model)`.
///
/// in_proj splits into gate `z (d_inner)`, conv channels
/// `xBC (conv_dim)`, and `dt_raw (nheads)`; the convolved channels split
/// into the scan input and `B`/`C`; `dt = softplus(dt_raw + dt_bias)`;
/// the chunked scan output is gated by the activated `z`, RMS-normalised,
/// and projected back to `d_model`. `L` must be divisible by `cfg.chunk`.
pub fn mamba2_forward<T: Scalar>(
    x: &TensorNd<T>,
    w: &Mamba2Weights<T>,
    cfg: &Mamba2Config,
) -> Result<TensorNd<T>> {
    mamba2_forward_with(x, w, cfg, ScanPath::Chunked)
}

/// [`mamba2_forward`] with an explicit scan-path choice (the sequential
/// reference path exists for cross-checking the blockwise one).
pub fn mamba2_forward_with<T: Scalar>(
    x: &TensorNd<T>,
    w: &Mamba2Weights<T>,
    cfg: &Mamba2Config,
    scan: ScanPath,
) -> Result<TensorNd<T>> {
    w.validate(cfg)?;
    if x.rank() != 3 {
        return Err(Error::RankOutOfRange { rank: x.rank() });
    }
    let (b, l, dm) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if dm != cfg.d_model {
        return Err(Error::ShapeMismatch {
            expected: vec![b, l, cfg.d_model],
            got: x.shape().to_vec(),
        });
    }
    if !l.is_multiple_of(cfg.chunk) {
        return Err(Error::ChunkContract {
            len: l,
            chunk: cfg.chunk,
        });
    }
    let d_inner = cfg.d_inner();
    let conv_dim = cfg.conv_dim();
    let nheads = cfg.nheads();
    let (g, n, p) = (cfg.ngroups, cfg.d_state, cfg.headdim);
    let gn = g * n;

    // (B, L, d_in_proj): [z | xBC | dt_raw]
    let proj = x.matmul(&w.in_proj)?;
    let pd = proj.data();
    let dip = cfg.d_in_proj();

    let mut z = vec![T::ZERO; b * l * d_inner];
    let mut xbc = vec![T::ZERO; b * l * conv_dim];
    let mut dt = vec![T::ZERO; b * l * nheads];
    for row in 0..b * l {
        let src = &pd[row * dip..(row + 1) * dip];
        z[row * d_inner..(row + 1) * d_inner].copy_from_slice(&src[..d_inner]);
        xbc[row * conv_dim..(row + 1) * conv_dim]
            .copy_from_slice(&src[d_inner..d_inner + conv_dim]);
        let dt_row = &mut dt[row * nheads..(row + 1) * nheads];
        for (o, (&raw, &bias)) in dt_row
            .iter_mut()
            .zip(src[d_inner + conv_dim..].iter().zip(w.dt_bias.data()))
        {
            *o = (raw + bias).softplus();
        }
    }

    let xbc = TensorNd::new(&[b, l, conv_dim], xbc)?;
    let xbc = causal_conv(&xbc, &w.conv_weight, &w.conv_bias, cfg.gate)?;
    let xbcd = xbc.data();

    let mut x_scan = vec![T::ZERO; b * l * d_inner];
    let mut b_scan = vec![T::ZERO; b * l * gn];
    let mut c_scan = vec![T::ZERO; b * l * gn];
    for row in 0..b * l {
        let src = &xbcd[row * conv_dim..(row + 1) * conv_dim];
        x_scan[row * d_inner..(row + 1) * d_inner].copy_from_slice(&src[..d_inner]);
        b_scan[row * gn..(row + 1) * gn].copy_from_slice(&src[d_inner..d_inner + gn]);
        c_scan[row * gn..(row + 1) * gn].copy_from_slice(&src[d_inner + gn..]);
    }

    let x_scan = TensorNd::new(&[b, l, nheads, p], x_scan)?;
    let b_scan = TensorNd::new(&[b, l, g, n], b_scan)?;
    let c_scan = TensorNd::new(&[b, l, g, n], c_scan)?;
    let dt = TensorNd::new(&[b, l, nheads], dt)?;

    let y = match scan {
        ScanPath::Chunked => ssd_scan_chunked(
            &x_scan,
            &dt,
            &w.decay(),
            &b_scan,
            &c_scan,
            w.d_skip.data(),
            cfg.chunk,
        )?,
        ScanPath::Naive => {
            ssd_scan_naive(&x_scan, &dt, &w.decay(), &b_scan, &c_scan, w.d_skip.data())?
        }
    };

    // gate before the norm: y * act(z), then RMS norm, then out_proj
    let mut gated = y.into_data();
    for (v, &zv) in gated.iter_mut().zip(&z) {
        *v *= cfg.gate.apply(zv);
    }
    let gated = TensorNd::new(&[b, l, d_inner], gated)?;
    let normed = gated.rmsnorm(&w.norm_gain, T::from_f64(NORM_EPS))?;
    normed.matmul(&w.out_proj)
}
