//! A trained controller (network plus frozen observation statistics) and its
//! binary checkpoint format.
//!
//! Layout, all little-endian: magic `SGL1`; `u32` count of dimension words,
//! then the words `[policy layer count, policy widths.., value layer count,
//! value widths..]`; policy then value layers as row-major weights followed by
//! biases in `f64`; the log standard deviations; the normalizer mean,
//! variance and sample count.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::env::clip_action;
use super::net::{Mlp, PolicyNet};
use super::normalize::RunningMeanStd;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGL1";

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: PolicyNet,
    pub obs_norm: RunningMeanStd,
}

impl Policy {
    /// Clipped action mean for a raw (unnormalized) observation.
    pub fn act_deterministic(&self, raw_obs: &[f64]) -> Result<Vec<f64>> {
        let (mean, _) = self.net.forward(&self.obs_norm.normalize(raw_obs))?;
        Ok(mean.into_iter().map(clip_action).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut dims: Vec<u32> = Vec::new();
        for mlp in [&self.net.policy, &self.net.value] {
            let d = mlp.dims();
            dims.push(d.len() as u32);
            dims.extend(d.iter().map(|&v| v as u32));
        }
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        for mlp in [&self.net.policy, &self.net.value] {
            for (w, b) in mlp.weights.iter().zip(&mlp.biases) {
                for r in 0..w.nrows() {
                    for c in 0..w.ncols() {
                        put(w[(r, c)]);
                    }
                }
                b.iter().for_each(|&v| put(v));
            }
        }
        self.net.log_std.iter().for_each(|&v| put(v));
        self.obs_norm.mean.iter().for_each(|&v| put(v));
        self.obs_norm.var.iter().for_each(|&v| put(v));
        put(self.obs_norm.count);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic; not an SGL1 checkpoint".into()));
        }
        let words = r.u32()? as usize;
        let dims: Vec<usize> = (0..words).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let mut cursor = 0;
        let mut shape = || -> Result<Vec<usize>> {
            let n = *dims.get(cursor).ok_or_else(|| Error::Checkpoint("truncated dimension list".into()))?;
            let d = dims
                .get(cursor + 1..cursor + 1 + n)
                .ok_or_else(|| Error::Checkpoint("truncated dimension list".into()))?
                .to_vec();
            cursor += 1 + n;
            if d.len() < 2 || d.contains(&0) {
                return Err(Error::Checkpoint(format!("invalid layer widths {d:?}")));
            }
            Ok(d)
        };
        let policy_dims = shape()?;
        let value_dims = shape()?;
        if cursor != dims.len() || policy_dims[0] != value_dims[0] || *value_dims.last().unwrap() != 1 {
            return Err(Error::Checkpoint("inconsistent network shapes".into()));
        }
        let mut read_mlp = |d: &[usize]| -> Result<Mlp> {
            let mut mlp = Mlp::zeros(d);
            for (w, b) in mlp.weights.iter_mut().zip(mlp.biases.iter_mut()) {
                let (rows, cols) = w.shape();
                let data = r.f64s(rows * cols)?;
                *w = DMatrix::from_row_slice(rows, cols, &data);
                *b = DVector::from_vec(r.f64s(b.len())?);
            }
            Ok(mlp)
        };
        let policy = read_mlp(&policy_dims)?;
        let value = read_mlp(&value_dims)?;
        let act_dim = *policy_dims.last().unwrap();
        let obs_dim = policy_dims[0];
        let log_std = DVector::from_vec(r.f64s(act_dim)?);
        let mean = r.f64s(obs_dim)?;
        let var = r.f64s(obs_dim)?;
        let count = r.f64s(1)?[0];
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { net: PolicyNet { policy, value, log_std }, obs_norm: RunningMeanStd { mean, var, count } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
