//! Binary checkpoints.
//!
//! Layout (little-endian throughout):
//!
//! | field | type |
//! |---|---|
//! | magic `CGEN` | 4 bytes |
//! | format version | `u32` |
//! | architecture tag (1 unrestricted, 2 restricted, 3 deep) | `u8` |
//! | layer count `L`, then `L` layer sizes | `u32`, `L x u64` |
//! | gain `g` | `f64` |
//! | `dt`, `tau`, `T` | `3 x f64` |
//! | epoch, seed | `2 x u64` |
//! | tensor count, then per tensor: rank, dims, values | `u32`, `u8`, `u64`s, `f64`s |
//! | SHA-256 of everything above | 32 bytes |
//!
//! Tensors are stored fixed matrices first, then trainable couplings, then
//! fields, each group in the order of the corresponding [`Model`] accessor.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::params::{Architecture, Model, SimConfig};

pub const MAGIC: &[u8; 4] = b"CGEN";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A model plus the state needed to resume or reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub sim: SimConfig,
    /// Number of parameter updates applied.
    pub epoch: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.model.architecture().tag());
        let sizes = self.model.layer_sizes();
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for n in &sizes {
            out.extend_from_slice(&(*n as u64).to_le_bytes());
        }
        for x in [self.model.g(), self.sim.dt, self.sim.tau, self.sim.t_target] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());

        let mut tensors: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for m in self.model.fixed_matrices().into_iter().chain(self.model.trainable_couplings()) {
            tensors.push((m.shape().to_vec(), m.iter().copied().collect()));
        }
        for f in self.model.fields() {
            tensors.push((f.shape().to_vec(), f.to_vec()));
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (shape, data) in tensors {
            out.push(shape.len() as u8);
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parse and verify a checkpoint. `name` labels checksum errors.
    pub fn decode(bytes: &[u8], name: &str) -> Result<Self> {
        ensure_len(bytes, DIGEST_LEN + 4)?;
        if &bytes[..4] != MAGIC {
            return Err(Error::format(0, "not a checkpoint (bad magic)"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum(name.to_string()));
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let tag_at = r.pos as u64;
        let tag = r.u8()?;
        let arch = Architecture::from_tag(tag)
            .ok_or_else(|| Error::format(tag_at, format!("unknown architecture tag {tag}")))?;
        let n_layers = r.u32()? as usize;
        let mut sizes = Vec::with_capacity(n_layers.min(8));
        for _ in 0..n_layers {
            sizes.push(r.usize()?);
        }
        let g = r.f64()?;
        let sim = SimConfig::new(r.f64()?, r.f64()?, r.f64()?)?;
        let epoch = r.u64()?;
        let seed = r.u64()?;

        let mut model = Model::init(arch, &sizes, 0.0, 0)
            .map_err(|e| Error::format(tag_at, format!("inconsistent header: {e}")))?;
        ensure(g.is_finite() && g >= 0.0, || format!("gain {g} in checkpoint is invalid"))?;
        set_gain(&mut model, g);

        let count_at = r.pos as u64;
        let count = r.u32()? as usize;
        let shapes = tensor_shapes(&model);
        if count != shapes.len() {
            return Err(Error::format(
                count_at,
                format!("expected {} tensors, found {count}", shapes.len()),
            ));
        }
        let mut tensors = Vec::with_capacity(count);
        for expected in &shapes {
            tensors.push(r.tensor(expected)?);
        }
        if r.pos != body.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after tensors"));
        }
        for (slot, t) in tensor_slots_mut(&mut model).into_iter().zip(tensors) {
            slot.copy_from_slice(&t);
        }
        Ok(Self {
            model,
            sim,
            epoch,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }
}

/// Checkpoint file name for an epoch, e.g. `epoch_000120.ckpt`.
pub fn file_name(epoch: u64) -> String {
    format!("epoch_{epoch:06}.ckpt")
}

fn set_gain(model: &mut Model, g: f64) {
    match model {
        Model::Unrestricted(p) => p.g = g,
        Model::Restricted(p) => p.g = g,
        Model::Deep(p) => p.g = g,
    }
}

fn tensor_shapes(model: &Model) -> Vec<Vec<usize>> {
    let matrices = model.fixed_matrices().into_iter().chain(model.trainable_couplings());
    matrices
        .map(|m| m.shape().to_vec())
        .chain(model.fields().into_iter().map(|f| f.shape().to_vec()))
        .collect()
}

/// Mutable storage of every tensor, in file order.
fn tensor_slots_mut(model: &mut Model) -> Vec<&mut [f64]> {
    let slots: Vec<&mut [f64]> = match model {
        Model::Unrestricted(p) => vec![
            p.j.as_slice_mut().unwrap(),
            p.a.as_slice_mut().unwrap(),
            p.b.as_slice_mut().unwrap(),
        ],
        Model::Restricted(p) => vec![
            p.w.as_slice_mut().unwrap(),
            p.w_tilde.as_slice_mut().unwrap(),
            p.a.as_slice_mut().unwrap(),
            p.b.as_slice_mut().unwrap(),
            p.c.as_slice_mut().unwrap(),
        ],
        Model::Deep(p) => vec![
            p.w1.as_slice_mut().unwrap(),
            p.w1_tilde.as_slice_mut().unwrap(),
            p.w2.as_slice_mut().unwrap(),
            p.w2_tilde.as_slice_mut().unwrap(),
            p.a1.as_slice_mut().unwrap(),
            p.a2.as_slice_mut().unwrap(),
            p.b.as_slice_mut().unwrap(),
            p.c.as_slice_mut().unwrap(),
            p.d.as_slice_mut().unwrap(),
        ],
    };
    slots
}

fn ensure_len(bytes: &[u8], n: usize) -> Result<()> {
    if bytes.len() < n {
        Err(Error::format(bytes.len() as u64, "checkpoint truncated"))
    } else {
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.pos as u64, "checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos as u64;
        usize::try_from(self.u64()?).map_err(|_| Error::format(at, "size overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Vec<f64>> {
        let at = self.pos as u64;
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank.min(4));
        for _ in 0..rank {
            shape.push(self.usize()?);
        }
        if shape != expected {
            return Err(Error::format(at, format!("tensor shape {shape:?}, expected {expected:?}")));
        }
        let n: usize = shape.iter().product();
        Ok(self
            .take(n.checked_mul(8).ok_or_else(|| Error::format(at, "tensor size overflows"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
