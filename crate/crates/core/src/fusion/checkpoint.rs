//! Binary checkpoints plus a JSON twin for inspection.
//!
//! Layout, all integers u64 and all reals f64, little-endian:
//!
//! ```text
//! magic "LSFM" | version u32
//! dims[3] | dropout_rate | w_neg | w_pos | learning_rate | epochs | batch_size | threshold | seed
//! joint_dim | w[joint_dim] | b
//! adam_step | m_w[joint_dim] | m_b | v_w[joint_dim] | v_b
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{AdamState, ClassWeights, FusionConfig, FusionModel, FusionParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSFM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint inconsistent: {0}")]
    Inconsistent(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        if self.0.len() < N {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("split_at length"))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Inconsistent("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        if self.0.len() / 8 < n {
            return Err(CheckpointError::Truncated);
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

impl FusionModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let p = &self.params;
        let mut w = Writer(Vec::with_capacity(64 + 24 * p.dim() + 128));
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        c.dims.iter().for_each(|&d| w.u64(d as u64));
        w.f64(c.dropout_rate);
        w.f64(c.class_weights.negative);
        w.f64(c.class_weights.positive);
        w.f64(c.learning_rate);
        w.u64(c.epochs as u64);
        w.u64(c.batch_size as u64);
        w.f64(c.threshold);
        w.u64(c.seed);
        w.u64(p.dim() as u64);
        w.f64s(&p.w);
        w.f64(p.b);
        w.u64(p.adam.step);
        w.f64s(&p.adam.m_w);
        w.f64(p.adam.m_b);
        w.f64s(&p.adam.v_w);
        w.f64(p.adam.v_b);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader(bytes);
        if &r.take::<4>()? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(r.take()?);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let dims = [r.usize()?, r.usize()?, r.usize()?];
        let config = FusionConfig {
            dims,
            dropout_rate: r.f64()?,
            class_weights: ClassWeights { negative: r.f64()?, positive: r.f64()? },
            learning_rate: r.f64()?,
            epochs: r.usize()?,
            batch_size: r.usize()?,
            threshold: r.f64()?,
            seed: r.u64()?,
        };
        let dim = r.usize()?;
        if dim != config.joint_dim() {
            return Err(CheckpointError::Inconsistent(format!(
                "weight count {dim} differs from branch widths {dims:?}"
            )));
        }
        let w = r.f64s(dim)?;
        let b = r.f64()?;
        let step = r.u64()?;
        let m_w = r.f64s(dim)?;
        let m_b = r.f64()?;
        let v_w = r.f64s(dim)?;
        let v_b = r.f64()?;
        if !r.0.is_empty() {
            return Err(CheckpointError::Inconsistent(format!("{} trailing bytes", r.0.len())));
        }
        config.validate().map_err(|e| CheckpointError::Inconsistent(e.to_string()))?;
        Ok(FusionModel { config, params: FusionParams { w, b, adam: AdamState { step, m_w, v_w, m_b, v_b } } })
    }

    /// Path of the JSON twin written next to a binary checkpoint.
    pub fn json_twin_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Write the binary checkpoint and its JSON twin.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |p: &Path, e| CheckpointError::Io { path: p.display().to_string(), source: e };
        fs::write(path, self.to_bytes()).map_err(|e| io(path, e))?;
        let twin = Self::json_twin_path(path);
        fs::write(&twin, serde_json::to_vec_pretty(self)?).map_err(|e| io(&twin, e))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io { path: path.display().to_string(), source: e })?;
        Self::from_bytes(&bytes)
    }
}
