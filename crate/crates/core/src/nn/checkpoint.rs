use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchConfig, Enhancer};
use crate::dsp::{CmvnStats, FeatureKind};
use crate::error::{Error, Result};
use crate::numeric::{Parameterized, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DRVB";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Descriptor {
    #[serde(flatten)]
    arch: ArchConfig,
    input_kind: FeatureKind,
    target_kind: FeatureKind,
    input_cmvn_frames: Option<u64>,
    target_cmvn_frames: u64,
    #[serde(default)]
    info: serde_json::Value,
}

/// A trained enhancer with the normalization statistics it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Enhancer<f32>,
    pub input_kind: FeatureKind,
    pub target_kind: FeatureKind,
    /// `None` when inputs are fed without normalization.
    pub input_cmvn: Option<CmvnStats>,
    pub target_cmvn: CmvnStats,
    /// Free-form metadata, e.g. the effective training configuration.
    pub info: serde_json::Value,
}

/// Rounds statistics to the precision they are stored with, so that a saved
/// and reloaded checkpoint behaves bit-identically to the original.
fn storage_precision(mut s: CmvnStats) -> CmvnStats {
    s.mean.iter_mut().for_each(|v| *v = *v as f32 as f64);
    s.var.iter_mut().for_each(|v| *v = *v as f32 as f64);
    s
}

impl ModelCheckpoint {
    pub fn new(
        model: Enhancer<f32>,
        input_kind: FeatureKind,
        target_kind: FeatureKind,
        input_cmvn: Option<CmvnStats>,
        target_cmvn: CmvnStats,
    ) -> Result<Self> {
        if model.input_dim() != input_kind.dim() {
            return Err(Error::Config(format!(
                "model input width {} does not match {} features",
                model.input_dim(),
                input_kind
            )));
        }
        if model.output_dim() != target_kind.dim() {
            return Err(Error::Config(format!(
                "model output width {} does not match {} targets",
                model.output_dim(),
                target_kind
            )));
        }
        if let Some(c) = &input_cmvn {
            if c.kind != input_kind {
                return Err(Error::Config(
                    "input cmvn statistics are for another feature kind".into(),
                ));
            }
        }
        if target_cmvn.kind != target_kind {
            return Err(Error::Config(
                "target cmvn statistics are for another feature kind".into(),
            ));
        }
        Ok(ModelCheckpoint {
            model,
            input_kind,
            target_kind,
            input_cmvn: input_cmvn.map(storage_precision),
            target_cmvn: storage_precision(target_cmvn),
            info: serde_json::Value::Null,
        })
    }

    fn tensors(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out: Vec<(String, Tensor<f32>)> = self
            .model
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        out.extend(self.model.buffers().into_iter().map(|(n, t)| (n, t.clone())));
        let mut cmvn = |prefix: &str, s: &CmvnStats| {
            let v = |x: &[f64]| Tensor::from_f64_slice(&[x.len()], x).expect("1-d");
            out.push((format!("cmvn.{prefix}.mean"), v(&s.mean)));
            out.push((format!("cmvn.{prefix}.var"), v(&s.var)));
        };
        if let Some(s) = &self.input_cmvn {
            cmvn("input", s);
        }
        cmvn("target", &self.target_cmvn);
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let desc = Descriptor {
            arch: self.model.arch(),
            input_kind: self.input_kind,
            target_kind: self.target_kind,
            input_cmvn_frames: self.input_cmvn.as_ref().map(|s| s.frame_count),
            target_cmvn_frames: self.target_cmvn.frame_count,
            info: self.info.clone(),
        };
        let json = serde_json::to_vec(&desc)?;
        let tensors = self.tensors();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let json_len = r.u32()? as usize;
        let desc: Descriptor = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| Error::Format(format!("checkpoint descriptor: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors: Vec<(String, Tensor<f32>)> = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = r.take(
                len.checked_mul(4)
                    .ok_or_else(|| Error::Format("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint tensors".into()));
        }

        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
            let i = tensors
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor '{name}'")))?;
            let (_, t) = tensors.swap_remove(i);
            if t.shape() != shape {
                return Err(Error::shape(format!("checkpoint tensor '{name}'"), shape, t.shape()));
            }
            Ok(t)
        };

        let mut model = Enhancer::<f32>::new(&desc.arch, 0)?;
        for p in model.params_mut() {
            p.value = take(&p.name, p.value.shape())?;
            p.zero_grad();
        }
        for (name, buf) in model.buffers_mut() {
            *buf = take(&name, buf.shape())?;
        }
        let mut cmvn = |prefix: &str, kind: FeatureKind, frames: u64| -> Result<CmvnStats> {
            let d = kind.dim();
            let mean = take(&format!("cmvn.{prefix}.mean"), &[d])?;
            let var = take(&format!("cmvn.{prefix}.var"), &[d])?;
            Ok(CmvnStats {
                kind,
                mean: mean.data().iter().map(|&v| v as f64).collect(),
                var: var.data().iter().map(|&v| v as f64).collect(),
                frame_count: frames,
            })
        };
        let input_cmvn = match desc.input_cmvn_frames {
            Some(n) => Some(cmvn("input", desc.input_kind, n)?),
            None => None,
        };
        let target_cmvn = cmvn("target", desc.target_kind, desc.target_cmvn_frames)?;
        if let Some((name, _)) = tensors.first() {
            return Err(Error::Format(format!("unexpected tensor '{name}' in checkpoint")));
        }
        let mut ckpt = ModelCheckpoint::new(model, desc.input_kind, desc.target_kind, input_cmvn, target_cmvn)?;
        ckpt.info = desc.info;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Names and shapes of every stored tensor.
    pub fn inventory(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
