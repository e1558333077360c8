//! Binary checkpoint container for networks and their companion data.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "IFOCKPT\0"
//! version    u32       currently 1
//! kind       str       e.g. "policy", "discriminator", "value"
//! n_tags     u32       then n_tags × (key str, value str)
//! n_vectors  u32       then n_vectors × (name str, len u64, len × f64)
//! n_nets     u32       then per network:
//!     n_layers   u32
//!     dims       (n_layers + 1) × u64
//!     hidden     (n_layers - 1) × activation str
//!     output     str
//!     params     f64 × param_count, flat layout [W₀ row-major, b₀, W₁, b₁, ...]
//! ```
//!
//! `str` is a `u32` byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, Mlp, NumError, OutputTransform};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IFOCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub tags: BTreeMap<String, String>,
    pub vectors: BTreeMap<String, Vec<f64>>,
    pub nets: Vec<Mlp>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Self::default()
        }
    }

    pub fn tag(&self, key: &str) -> Result<&str, NumError> {
        self.tags
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| NumError::Format(format!("checkpoint is missing tag `{key}`")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NumError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        write_str(w, &self.kind)?;
        write_u32(w, self.tags.len())?;
        for (k, v) in &self.tags {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        write_u32(w, self.vectors.len())?;
        for (name, values) in &self.vectors {
            write_str(w, name)?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
            write_f64s(w, values)?;
        }
        write_u32(w, self.nets.len())?;
        for net in &self.nets {
            write_u32(w, net.layers().len())?;
            for d in net.dims() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for act in net.activations() {
                write_str(w, act.tag())?;
            }
            write_str(w, net.output_transform().tag())?;
            write_f64s(w, &net.flat_params())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NumError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NumError::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NumError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let kind = read_str(r)?;
        let mut tags = BTreeMap::new();
        for _ in 0..read_u32(r)? {
            let k = read_str(r)?;
            let v = read_str(r)?;
            tags.insert(k, v);
        }
        let mut vectors = BTreeMap::new();
        for _ in 0..read_u32(r)? {
            let name = read_str(r)?;
            let len = read_u64(r)? as usize;
            vectors.insert(name, read_f64s(r, len)?);
        }
        let mut nets = Vec::new();
        for _ in 0..read_u32(r)? {
            let n_layers = read_u32(r)? as usize;
            if n_layers == 0 {
                return Err(NumError::Format("network with zero layers".into()));
            }
            let dims = (0..=n_layers)
                .map(|_| read_u64(r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let mut acts = Vec::with_capacity(n_layers - 1);
            for _ in 1..n_layers {
                let tag = read_str(r)?;
                acts.push(Activation::from_tag(&tag).ok_or_else(|| {
                    NumError::Format(format!("unknown activation tag `{tag}`"))
                })?);
            }
            let out_tag = read_str(r)?;
            let output = OutputTransform::from_tag(&out_tag)
                .ok_or_else(|| NumError::Format(format!("unknown output tag `{out_tag}`")))?;
            let mut net = Mlp::zeros(&dims, Activation::Tanh, output)?;
            net = Mlp::from_layers(net.layers().to_vec(), acts, output)?;
            let params = read_f64s(r, net.param_count())?;
            net.set_flat_params(&params)?;
            nets.push(net);
        }
        Ok(Self {
            kind,
            tags,
            vectors,
            nets,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<(), NumError> {
    let v = u32::try_from(v).map_err(|_| NumError::Format("count exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), NumError> {
    write_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<(), NumError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<(), NumError> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32, NumError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64, NumError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String, NumError> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| NumError::Format("invalid utf-8 in string field".into()))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>, NumError> {
    let mut b = vec![0u8; len * 8];
    r.read_exact(&mut b)?;
    Ok(b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
