//! Versioned binary weight format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      5 bytes  "NDBM2"
//! version    u16      currently 1
//! config_len u32      length of the UTF-8 JSON config block
//! config     bytes    hyperparameters + model structure
//! count      u32      number of tensor entries, sorted by name
//! per tensor:
//!   name_len u32
//!   name     UTF-8 bytes
//!   rank     u32
//!   extents  rank x u32
//!   payload  product(extents) x f32 (raw little-endian)
//! ```
//!
//! Save is byte-deterministic: tensors are written sorted by name and the
//! config block serializes with a fixed field order. `load(save(m))`
//! reproduces every weight bitwise.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndbm2_core::ssd::Mamba2Config;
use ndbm2_core::{BiMamba2NdModel, ConvSpec, Mamba2Weights, TensorNd};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 5] = b"NDBM2";
pub const VERSION: u16 = 1;

/// Cap on declared lengths so a corrupt header cannot trigger a huge
/// allocation before the payload read fails.
const MAX_DECL: u32 = 1 << 30;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a model file: bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0} (expected {VERSION})")]
    UnsupportedVersion(u16),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file failed validation: {0}")]
    Validation(String),
    #[error("config block: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, FormatError>;

#[derive(Debug, Serialize, Deserialize)]
struct PremixMeta {
    kernel: Vec<usize>,
    stride: Vec<usize>,
    depthwise: bool,
    has_bias: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigBlock {
    c_in: usize,
    c_out: usize,
    spatial_rank: usize,
    bidirectional: bool,
    core: Mamba2Config,
    premix: Option<PremixMeta>,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            FormatError::Corrupt("truncated file".into())
        } else {
            FormatError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_decl<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let v = read_u32(r)?;
    if v > MAX_DECL {
        return Err(FormatError::Corrupt(format!(
            "implausible {what} length {v}"
        )));
    }
    Ok(v)
}

/// Write one tensor entry (name, rank, extents, f32 payload).
pub fn write_tensor_entry<W: Write>(w: &mut W, name: &str, t: &TensorNd<f32>) -> Result<()> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, t.rank() as u32)?;
    for &e in t.shape() {
        write_u32(w, e as u32)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read one tensor entry; returns `(name, tensor)`.
pub fn read_tensor_entry<R: Read>(r: &mut R) -> Result<(String, TensorNd<f32>)> {
    let name_len = read_decl(r, "name")? as usize;
    let mut name = vec![0u8; name_len];
    read_exact(r, &mut name)?;
    let name = String::from_utf8(name)
        .map_err(|_| FormatError::Corrupt("tensor name is not UTF-8".into()))?;
    let rank = read_u32(r)? as usize;
    if !(1..=5).contains(&rank) {
        return Err(FormatError::Corrupt(format!(
            "tensor '{name}' has rank {rank}"
        )));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut len = 1usize;
    for _ in 0..rank {
        let e = read_decl(r, "extent")? as usize;
        if e == 0 {
            return Err(FormatError::Corrupt(format!(
                "tensor '{name}' has a zero extent"
            )));
        }
        len = len
            .checked_mul(e)
            .ok_or_else(|| FormatError::Corrupt(format!("tensor '{name}' size overflow")))?;
        shape.push(e);
    }
    let mut payload = vec![0u8; len * 4];
    read_exact(r, &mut payload)?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let t = TensorNd::new(&shape, data)
        .map_err(|e| FormatError::Corrupt(format!("tensor '{name}': {e}")))?;
    Ok((name, t))
}

fn core_entries<'a>(prefix: &str, w: &'a Mamba2Weights<f32>) -> Vec<(String, &'a TensorNd<f32>)> {
    vec![
        (format!("{prefix}.in_proj"), &w.in_proj),
        (format!("{prefix}.conv_weight"), &w.conv_weight),
        (format!("{prefix}.conv_bias"), &w.conv_bias),
        (format!("{prefix}.dt_bias"), &w.dt_bias),
        (format!("{prefix}.a_log"), &w.a_log),
        (format!("{prefix}.d_skip"), &w.d_skip),
        (format!("{prefix}.norm_gain"), &w.norm_gain),
        (format!("{prefix}.out_proj"), &w.out_proj),
    ]
}

/// Serialize a model. Tensor entries are sorted by name for
/// byte-reproducibility.
pub fn save<W: Write>(model: &BiMamba2NdModel<f32>, sink: &mut W) -> Result<()> {
    model
        .validate()
        .map_err(|e| FormatError::Validation(e.to_string()))?;

    let block = ConfigBlock {
        c_in: model.c_in,
        c_out: model.c_out,
        spatial_rank: model.spatial_rank,
        bidirectional: model.bidirectional,
        core: model.cfg,
        premix: model.premix.as_ref().map(|(f, _)| PremixMeta {
            kernel: f.kernel.clone(),
            stride: f.stride.clone(),
            depthwise: f.depthwise,
            has_bias: f.bias.is_some(),
        }),
    };
    let config = serde_json::to_vec(&block)?;

    sink.write_all(MAGIC)?;
    sink.write_all(&VERSION.to_le_bytes())?;
    write_u32(sink, config.len() as u32)?;
    sink.write_all(&config)?;

    let mut entries: Vec<(String, &TensorNd<f32>)> = vec![
        ("fc_in.weight".into(), &model.fc_in_weight),
        ("fc_in.bias".into(), &model.fc_in_bias),
        ("fc_out.weight".into(), &model.fc_out_weight),
        ("fc_out.bias".into(), &model.fc_out_bias),
    ];
    entries.extend(core_entries("fwd", &model.core_forward));
    if let Some(back) = &model.core_backward {
        entries.extend(core_entries("bwd", back));
    }
    if let Some((f, b)) = &model.premix {
        entries.push(("premix_fwd.weight".into(), &f.weights));
        entries.push(("premix_bwd.weight".into(), &b.weights));
        if let Some(bias) = &f.bias {
            entries.push(("premix_fwd.bias".into(), bias));
        }
        if let Some(bias) = &b.bias {
            entries.push(("premix_bwd.bias".into(), bias));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    write_u32(sink, entries.len() as u32)?;
    for (name, t) in entries {
        write_tensor_entry(sink, &name, t)?;
    }
    Ok(())
}

struct TensorTable(BTreeMap<String, TensorNd<f32>>);

impl TensorTable {
    fn take(&mut self, name: &str) -> Result<TensorNd<f32>> {
        self.0
            .remove(name)
            .ok_or_else(|| FormatError::Validation(format!("missing tensor '{name}'")))
    }
}

fn core_from(table: &mut TensorTable, prefix: &str) -> Result<Mamba2Weights<f32>> {
    Ok(Mamba2Weights {
        in_proj: table.take(&format!("{prefix}.in_proj"))?,
        conv_weight: table.take(&format!("{prefix}.conv_weight"))?,
        conv_bias: table.take(&format!("{prefix}.conv_bias"))?,
        dt_bias: table.take(&format!("{prefix}.dt_bias"))?,
        a_log: table.take(&format!("{prefix}.a_log"))?,
        d_skip: table.take(&format!("{prefix}.d_skip"))?,
        norm_gain: table.take(&format!("{prefix}.norm_gain"))?,
        out_proj: table.take(&format!("{prefix}.out_proj"))?,
    })
}

/// Deserialize a model, verifying magic, version, and structural
/// consistency between the config block and the tensor table.
pub fn load<R: Read>(source: &mut R) -> Result<BiMamba2NdModel<f32>> {
    let mut magic = [0u8; 5];
    read_exact(source, &mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut ver = [0u8; 2];
    read_exact(source, &mut ver)?;
    let version = u16::from_le_bytes(ver);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }

    let config_len = read_decl(source, "config")? as usize;
    let mut config = vec![0u8; config_len];
    read_exact(source, &mut config)?;
    let block: ConfigBlock = serde_json::from_slice(&config)?;

    let count = read_decl(source, "tensor count")?;
    let mut table = TensorTable(BTreeMap::new());
    for _ in 0..count {
        let (name, t) = read_tensor_entry(source)?;
        if table.0.insert(name.clone(), t).is_some() {
            return Err(FormatError::Corrupt(format!("duplicate tensor '{name}'")));
        }
    }

    let core_forward = core_from(&mut table, "fwd")?;
    let core_backward = if block.bidirectional {
        Some(core_from(&mut table, "bwd")?)
    } else {
        None
    };

    let premix = match &block.premix {
        None => None,
        Some(meta) => {
            let make = |weights: TensorNd<f32>, bias: Option<TensorNd<f32>>| ConvSpec {
                kernel: meta.kernel.clone(),
                stride: meta.stride.clone(),
                channels: block.c_in,
                depthwise: meta.depthwise,
                weights,
                bias,
            };
            let fw = table.take("premix_fwd.weight")?;
            let bw = table.take("premix_bwd.weight")?;
            let (fb, bb) = if meta.has_bias {
                (
                    Some(table.take("premix_fwd.bias")?),
                    Some(table.take("premix_bwd.bias")?),
                )
            } else {
                (None, None)
            };
            Some((make(fw, fb), make(bw, bb)))
        }
    };

    let model = BiMamba2NdModel {
        c_in: block.c_in,
        c_out: block.c_out,
        spatial_rank: block.spatial_rank,
        bidirectional: block.bidirectional,
        cfg: block.core,
        fc_in_weight: table.take("fc_in.weight")?,
        fc_in_bias: table.take("fc_in.bias")?,
        fc_out_weight: table.take("fc_out.weight")?,
        fc_out_bias: table.take("fc_out.bias")?,
        core_forward,
        core_backward,
        premix,
    };

    if let Some(extra) = table.0.keys().next() {
        return Err(FormatError::Validation(format!(
            "unexpected tensor '{extra}'"
        )));
    }
    model
        .validate()
        .map_err(|e| FormatError::Validation(e.to_string()))?;
    Ok(model)
}
