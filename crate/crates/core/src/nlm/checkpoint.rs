//! Checkpoint directories: `manifest.json` with metadata and `params.bin`
//! with the weights. `optim.bin` holds the Adam moments so a run can be
//! resumed exactly.
//!
//! Each binary file is a sequence of tensor records, little-endian:
//! `name_len u32 | name | dtype u8 (0 = f32) | rank u32 | shape u32 x rank | data`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::model::{Model, ParamLayout};
use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::io::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const OPTIM_FILE: &str = "optim.bin";

const DTYPE_F32: u8 = 0;

/// Position of the batch stream: the next block index for `data_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub data_seed: u64,
    pub batches_consumed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_id: String,
    pub step: u64,
    pub dev_perplexity: f64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub config_hash: String,
    pub vocab_hash: String,
    pub rng: RngState,
    pub params_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model<f32>,
    pub optimizer: Option<AdamState<f32>>,
}

pub fn checkpoint_dir(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join(format!("step-{step:07}"))
}

pub fn encode_tensors(layout: &ParamLayout, values: &[f32], prefix: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4 + layout.tensors.len() * 64);
    for t in &layout.tensors {
        let name = format!("{prefix}{}", t.name);
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &s in &t.shape {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &x in &values[t.range()] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8], layout: &ParamLayout, prefix: &str) -> Result<Vec<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    let mut out = vec![0f32; layout.total];
    let mut seen = vec![false; layout.tensors.len()];
    while r.pos < bytes.len() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name not utf-8".into()))?
            .to_string();
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("{name}: unsupported dtype {dtype}")));
        }
        let rank = r.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|s| s as usize)).collect::<Result<_>>()?;
        let bare = name
            .strip_prefix(prefix)
            .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
        let idx = layout
            .tensors
            .iter()
            .position(|t| t.name == bare)
            .ok_or_else(|| Error::Format(format!("unknown tensor {name}")))?;
        let spec = &layout.tensors[idx];
        if spec.shape != shape {
            return Err(Error::Format(format!(
                "{name}: shape {shape:?} does not match {:?}",
                spec.shape
            )));
        }
        let data = r.take(spec.len() * 4)?;
        for (dst, chunk) in out[spec.range()].iter_mut().zip(data.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        seen[idx] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!("missing tensor {}", layout.tensors[i].name)));
    }
    Ok(out)
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
            .ok_or_else(|| Error::Format("truncated tensor file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let params = encode_tensors(&self.model.layout, &self.model.params, "");
        write_atomic(&dir.join(PARAMS_FILE), &params)?;
        if let Some(opt) = &self.optimizer {
            let mut bytes = encode_tensors(&self.model.layout, &opt.m, "adam.m.");
            bytes.extend(encode_tensors(&self.model.layout, &opt.v, "adam.v."));
            write_atomic(&dir.join(OPTIM_FILE), &bytes)?;
        }
        let mut meta = self.meta.clone();
        meta.params_sha256 = sha256_hex(&params);
        let json = serde_json::to_vec_pretty(&meta)?;
        // manifest last: its presence marks a complete checkpoint
        write_atomic(&dir.join(MANIFEST_FILE), &json)
    }

    pub fn load_meta(dir: &Path) -> Result<CheckpointMeta> {
        let path = dir.join(MANIFEST_FILE);
        let text = crate::io::read_to_string(&path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = Self::load_meta(dir)?;
        let layout = ParamLayout::new(&meta.model_config);
        let path = dir.join(PARAMS_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != meta.params_sha256 {
            return Err(Error::Format(format!("{}: checksum mismatch", path.display())));
        }
        let params = decode_tensors(&bytes, &layout, "")?;
        let opt_path = dir.join(OPTIM_FILE);
        let optimizer = if opt_path.exists() {
            let bytes = std::fs::read(&opt_path).map_err(|e| Error::io(&opt_path, e))?;
            let split = bytes.len() / 2;
            Some(AdamState {
                m: decode_tensors(&bytes[..split], &layout, "adam.m.")?,
                v: decode_tensors(&bytes[split..], &layout, "adam.v.")?,
            })
        } else {
            None
        };
        let model = Model {
            config: meta.model_config.clone(),
            layout,
            params,
        };
        Ok(Checkpoint {
            meta,
            model,
            optimizer,
        })
    }
}
