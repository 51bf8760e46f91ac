//! Named parameter tensors and checkpoint serialization.

use std::fs;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// Dense f64 buffer with a shape. The grad slot is filled by training code
/// after a backward pass and never serialized.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
        }
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(CoreError::ShapeMismatch {
                op: "tensor",
                left: shape.to_vec(),
                right: vec![values.len()],
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("tensor construction".into()));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// Uniform init on (-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    assert!(fan_in > 0, "fan_in must be positive");
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor {
        shape: shape.to_vec(),
        values,
        grad: None,
    }
}

const CKPT_MAGIC: &[u8; 8] = b"CDXCKPT1";
const CKPT_VERSION: u32 = 1;

/// Ordered, named parameter tensors for one model, plus the seed they were
/// initialized from. Serializes to a checkpoint that round-trips bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub version: u32,
    pub init_seed: u64,
    entries: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn new(init_seed: u64) -> Self {
        ModelParams {
            version: CKPT_VERSION,
            init_seed,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(CoreError::Config(format!("duplicate parameter {name:?}")));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), &mut *t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.init_seed.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != CKPT_MAGIC {
            return Err(CoreError::Format("not a checkpoint (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != CKPT_VERSION {
            return Err(CoreError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let init_seed = cur.u64()?;
        let count = cur.u32()? as usize;
        let mut params = ModelParams::new(init_seed);
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| CoreError::Format("parameter name is not utf-8".into()))?
                .to_string();
            let ndim = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut values = Vec::with_capacity(numel);
            for _ in 0..numel {
                values.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
            }
            params.add(&name, Tensor::from_values(&shape, values)?)?;
        }
        if cur.pos != bytes.len() {
            return Err(CoreError::Format("trailing bytes after checkpoint".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Digest of the exact serialized bytes; equal hashes mean bit-equal
    /// parameters.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.to_bytes());
        h.finalize().into()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
