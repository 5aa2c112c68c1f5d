//! Binary checkpoints: `HHNCKPT1`, a little-endian `u32` header length, a
//! JSON header, then every parameter followed by the Adam moments as
//! little-endian `f64` blobs in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::models::{Model, ModelSpec};
use super::primary::PrimaryLayout;
use super::train::{LossHistory, TrainConfig, TrainState};
use crate::autodiff::{AdamConfig, AdamState, ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HHNCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub epoch: usize,
    /// Layout of g's flat parameters: per layer, `(d_in, d_out)`; weights,
    /// then scales, then biases.
    pub primary_layout: Option<PrimaryLayout>,
    pub params: Vec<ParamEntry>,
    pub adam_config: AdamConfig,
    pub adam_step: u64,
    pub lr_scale: Vec<f64>,
    pub history: LossHistory,
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let primary_layout = match state.model()? {
        Model::Simulator(_) => None,
        Model::Designer(m) => Some(m.hyper.primary.clone()),
        Model::Array(m) => Some(m.hyper.primary.clone()),
    };
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        spec: state.spec.clone(),
        config: state.config.clone(),
        epoch: state.epoch,
        primary_layout,
        params: state
            .store
            .iter()
            .map(|(n, t)| ParamEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        adam_config: state.adam.config,
        adam_step: state.adam.step,
        lr_scale: state.adam.lr_scale.clone(),
        history: state.history.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 24 * state.store.total_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in state.store.tensors() {
        push_f64s(&mut out, t.data());
    }
    for m in &state.adam.m {
        push_f64s(&mut out, m);
    }
    for v in &state.adam.v {
        push_f64s(&mut out, v);
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
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let len = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(len)?)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {}",
            header.version
        )));
    }
    let mut store = ParamStore::new();
    for p in &header.params {
        let n = p.shape.iter().product();
        store.add(p.name.clone(), Tensor::new(p.shape.clone(), r.f64s(n)?)?);
    }
    let sizes = store.sizes();
    let m = sizes
        .iter()
        .map(|&n| r.f64s(n))
        .collect::<Result<Vec<_>>>()?;
    let v = sizes
        .iter()
        .map(|&n| r.f64s(n))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    if header.lr_scale.len() != sizes.len() {
        return Err(Error::Format(
            "learning-rate scales do not match parameters".into(),
        ));
    }
    header.spec.rebuild(&store)?;
    Ok(TrainState {
        spec: header.spec,
        config: header.config,
        store,
        adam: AdamState {
            config: header.adam_config,
            step: header.adam_step,
            m,
            v,
            lr_scale: header.lr_scale,
        },
        epoch: header.epoch,
        history: header.history,
    })
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_checkpoint(state)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    decode_checkpoint(&fs::read(path)?)
}
