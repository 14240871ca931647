use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use super::TrainConfig;
use crate::encoder::{ToyEncoderParams, Vocabulary};
use crate::error::{Error, Result};
use crate::heads::HeadKind;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub episode: u64,
    pub dev_f1: f64,
}

/// Everything about a checkpoint except the parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab: Vocabulary,
    pub head: HeadKind,
    pub train: TrainConfig,
    /// Training episodes seen when the parameters were captured.
    pub episode: u64,
    pub history: Vec<ValidationPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Array2<f64>) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&2u32.to_le_bytes())?;
    for d in t.shape() {
        w.write_all(&(*d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(
        take(bytes, 4)?.try_into().expect("4 bytes"),
    ))
}

fn take_u64(bytes: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(
        take(bytes, 8)?.try_into().expect("8 bytes"),
    ))
}

fn read_tensor(bytes: &mut &[u8]) -> Result<(String, Array2<f64>)> {
    let name_len = take_u32(bytes)? as usize;
    let name = String::from_utf8(take(bytes, name_len)?.to_vec())
        .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
    let ndim = take_u32(bytes)?;
    if ndim != 2 {
        return Err(Error::Format(format!(
            "tensor {name} has {ndim} dimensions, expected 2"
        )));
    }
    let rows = take_u64(bytes)? as usize;
    let cols = take_u64(bytes)? as usize;
    let raw = take(bytes, rows * cols * 4)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let t =
        Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok((name, t))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        let w = &mut out;
        w.extend_from_slice(CHECKPOINT_MAGIC);
        w.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        w.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        w.extend_from_slice(&meta);
        w.extend_from_slice(&3u32.to_le_bytes());
        let tensors = [
            ("embeddings", &self.model.encoder.embeddings),
            ("projection", &self.model.encoder.projection),
            ("reducer", &self.model.reducer),
        ];
        for (name, t) in tensors {
            write_tensor(w, name, t).expect("writing to a Vec cannot fail");
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let b = &mut bytes;
        if take(b, 4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = take_u32(b)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let meta_len = take_u64(b)? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(take(b, meta_len)?)?;
        let count = take_u32(b)?;
        let (mut embeddings, mut projection, mut reducer) = (None, None, None);
        for _ in 0..count {
            let (name, t) = read_tensor(b)?;
            match name.as_str() {
                "embeddings" => embeddings = Some(t),
                "projection" => projection = Some(t),
                "reducer" => reducer = Some(t),
                other => return Err(Error::Format(format!("unknown tensor {other}"))),
            }
        }
        let missing = |n: &str| Error::Format(format!("checkpoint lacks tensor {n}"));
        let embeddings = embeddings.ok_or_else(|| missing("embeddings"))?;
        let projection = projection.ok_or_else(|| missing("projection"))?;
        let reducer = reducer.ok_or_else(|| missing("reducer"))?;
        if embeddings.nrows() != meta.vocab.rows()
            || embeddings.ncols() != projection.nrows()
            || projection.ncols() != reducer.nrows()
        {
            return Err(Error::Format("checkpoint tensor shapes disagree".into()));
        }
        let model = Model {
            encoder: ToyEncoderParams {
                vocab: meta.vocab.clone(),
                embeddings,
                projection,
                radius: meta.model.radius,
            },
            reducer,
            chunk_length: meta.model.chunk_length,
        };
        if !model.is_finite() {
            return Err(Error::Numerical(
                "checkpoint holds non-finite parameters".into(),
            ));
        }
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(io_err(path))?;
        f.write_all(&bytes).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(path))?;
        Self::from_bytes(&bytes)
    }

    pub fn best_dev_f1(&self) -> Option<f64> {
        self.meta.history.iter().map(|p| p.dev_f1).reduce(f64::max)
    }
}
