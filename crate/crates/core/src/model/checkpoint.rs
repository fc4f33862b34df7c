//! Versioned binary checkpoint, all integers and reals little-endian:
//!
//! ```text
//! "SEH1"  u32 version
//! u8 precision (4 | 8)  u8 fusion (0 transformer | 1 weighted-sum)  u8 attention_scaling  u8 0
//! u64 hidden  u64 num_classes  u64 projection_layers  u64 classifier_layers  f64 dropout
//! u64 n_inputs, per input: u8 kind (0 feature | 1 label), u64 dim, u64 n_types, per type: u64 len, utf-8 bytes
//! u64 n_tensors, per tensor: u64 rows, u64 cols, f64 values row-major
//! ```

use std::path::Path;

use super::params::{init_params, FusionMode, InputSpec, ModelConfig, ModelParams};
use crate::dense::Real;
use crate::error::{Error, Result};
use crate::metapath::{Metapath, PathKind};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SEH1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Real>(params: &ModelParams<T>) -> Vec<u8> {
    let mut out = Vec::new();
    let cfg = &params.config;
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(std::mem::size_of::<T>() as u8);
    out.push(match cfg.fusion {
        FusionMode::Transformer => 0,
        FusionMode::WeightedSum => 1,
    });
    out.push(cfg.attention_scaling as u8);
    out.push(0);
    for v in [cfg.hidden, cfg.num_classes, cfg.projection_layers, cfg.classifier_layers] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&cfg.dropout.to_le_bytes());
    out.extend_from_slice(&(params.inputs.len() as u64).to_le_bytes());
    for inp in &params.inputs {
        out.push(match inp.metapath.kind() {
            PathKind::Feature => 0,
            PathKind::Label => 1,
        });
        out.extend_from_slice(&(inp.dim as u64).to_le_bytes());
        let types = inp.metapath.types();
        out.extend_from_slice(&(types.len() as u64).to_le_bytes());
        for t in types {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
    }
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for &v in t.as_slice() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint<T: Real>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

/// Stored precision in bytes (4 or 8), read from the header.
pub fn checkpoint_precision(path: &Path) -> Result<u8> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    r.header()?;
    r.u8()
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<ModelParams<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8], path: &Path) -> Result<ModelParams<T>> {
    let mut r = Reader::new(bytes, path);
    r.header()?;
    let precision = r.u8()?;
    if precision as usize != std::mem::size_of::<T>() {
        return Err(r.err(format!(
            "checkpoint holds {}-byte reals, caller asked for {}",
            precision,
            std::mem::size_of::<T>()
        )));
    }
    let fusion = match r.u8()? {
        0 => FusionMode::Transformer,
        1 => FusionMode::WeightedSum,
        other => return Err(r.err(format!("unknown fusion mode {other}"))),
    };
    let attention_scaling = r.u8()? != 0;
    r.u8()?;
    let config = ModelConfig {
        hidden: r.usize()?,
        num_classes: r.usize()?,
        projection_layers: r.usize()?,
        classifier_layers: r.usize()?,
        dropout: r.f64()?,
        fusion,
        attention_scaling,
    };
    let n_inputs = r.usize()?;
    let mut inputs = Vec::with_capacity(n_inputs.min(1 << 16));
    for _ in 0..n_inputs {
        let kind = match r.u8()? {
            0 => PathKind::Feature,
            1 => PathKind::Label,
            other => return Err(r.err(format!("unknown metapath kind {other}"))),
        };
        let dim = r.usize()?;
        let n_types = r.usize()?;
        let mut types = Vec::with_capacity(n_types.min(64));
        for _ in 0..n_types {
            let len = r.usize()?;
            let raw = r.take(len)?;
            types.push(
                String::from_utf8(raw.to_vec()).map_err(|_| r.err("type name is not utf-8".into()))?,
            );
        }
        inputs.push(InputSpec {
            metapath: Metapath::unchecked(types, kind),
            dim,
        });
    }
    // Build the parameter skeleton, then overwrite every tensor in order.
    let mut params: ModelParams<T> = init_params(&config, &inputs, 0)?;
    let n_tensors = r.usize()?;
    let expected = params.tensors().len();
    if n_tensors != expected {
        return Err(r.err(format!("{n_tensors} tensors stored, layout needs {expected}")));
    }
    for t in params.tensors_mut() {
        let (rows, cols) = (r.usize()?, r.usize()?);
        if (rows, cols) != t.shape() {
            return Err(r.err(format!(
                "tensor shape ({rows}, {cols}) does not match layout {:?}",
                t.shape()
            )));
        }
        for v in t.as_mut_slice() {
            *v = T::of(r.f64()?);
        }
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes".into()));
    }
    Ok(params)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn err(&self, msg: String) -> Error {
        Error::format(self.path, msg)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn header(&mut self) -> Result<()> {
        if self.take(4)? != CHECKPOINT_MAGIC {
            return Err(self.err("missing SEH1 magic".into()));
        }
        let version = u32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(self.err(format!("unsupported checkpoint version {version}")));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
