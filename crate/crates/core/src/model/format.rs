//! NLWT weight files.
//!
//! ```text
//! "NLWT" | version u8 = 1 | h u8 | C u8 | hidden u16 | resblocks u8 | mixtures u8 | sheared u8
//! per tensor, fixed order: name_len u16 | name utf-8 | rank u8 | extents u32 × rank | f32 × n
//! FNV-1a-64 of every preceding byte, u64
//! ```
//! All integers and floats little-endian.

use std::hash::Hasher;

use fnv::FnvHasher;

use super::{ModelConfig, ResBlock, WeightSet};
use crate::error::{Error, Result};
use crate::nnkernel::Tensor;

pub const MAGIC: &[u8; 4] = b"NLWT";
pub const VERSION: u8 = 1;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn body(config: &ModelConfig, weights: &WeightSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(config.horizon as u8);
    out.push(config.channels as u8);
    out.extend_from_slice(&(config.hidden as u16).to_le_bytes());
    out.push(config.resblocks as u8);
    out.push(config.mixtures as u8);
    out.push(weights.sheared as u8);
    for (name, t) in weights.named_tensors() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) fn content_hash(config: &ModelConfig, weights: &WeightSet) -> u64 {
    fnv1a64(&body(config, weights))
}

pub fn save_weights(config: &ModelConfig, weights: &WeightSet) -> Vec<u8> {
    let mut out = body(config, weights);
    let hash = fnv1a64(&out);
    out.extend_from_slice(&hash.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let rest = self.bytes.len() - self.pos;
        if rest < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - rest,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self, expected_name: &str) -> Result<Tensor> {
        let len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
        if name != expected_name {
            return Err(Error::Format(format!(
                "expected tensor {expected_name}, found {name}"
            )));
        }
        let rank = self.u8()? as usize;
        let dims = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("{name} extents overflow")))?;
        let payload = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format("tensor too large".into()))?,
        )?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::new(dims, data).map_err(|e| Error::Format(format!("{name}: {e}")))
    }
}

/// Parses and fully validates an NLWT file.
pub fn load_weights(bytes: &[u8]) -> Result<(ModelConfig, WeightSet)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad weight-file magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported weight-file version {version}"
        )));
    }
    let horizon = r.u8()? as usize;
    let channels = r.u8()? as usize;
    let hidden = r.u16()? as usize;
    let resblocks = r.u8()? as usize;
    let mixtures = r.u8()? as usize;
    let sheared = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("invalid sheared flag {f}"))),
    };
    let config = ModelConfig {
        horizon,
        channels,
        hidden,
        resblocks,
        mixtures,
    };
    config.validate()?;

    let first_kernel = r.tensor("first.weight")?;
    let first_bias = r.tensor("first.bias")?;
    let blocks = (0..resblocks)
        .map(|b| {
            Ok(ResBlock {
                inner_weight: r.tensor(&format!("block{b}.inner.weight"))?,
                inner_bias: r.tensor(&format!("block{b}.inner.bias"))?,
                outer_weight: r.tensor(&format!("block{b}.outer.weight"))?,
                outer_bias: r.tensor(&format!("block{b}.outer.bias"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let head_weight = r.tensor("head.weight")?;
    let head_bias = r.tensor("head.bias")?;

    let body_len = r.pos;
    let stored = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after hash",
            bytes.len() - r.pos
        )));
    }
    let computed = fnv1a64(&bytes[..body_len]);
    if stored != computed {
        return Err(Error::Format(format!(
            "weight-file hash {stored:016x} does not match contents {computed:016x}"
        )));
    }
    let weights = WeightSet {
        first_kernel,
        first_bias,
        blocks,
        head_weight,
        head_bias,
        sheared,
    };
    weights.validate(&config)?;
    Ok((config, weights))
}
