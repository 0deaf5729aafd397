//! Self-describing JSON checkpoints: config, mode, vocabularies, history
//! and every parameter as base64 little-endian floats.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{IntentMode, PredictorConfig};
use crate::error::{Error, Result};
use crate::model::IntentModel;
use crate::train::{EpochRecord, TrainedPredictor};
use crate::vocab::Vocab;

const FORMAT: &str = "limp-predictor-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    dtype: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    config: PredictorConfig,
    mode: IntentMode,
    vocab: Vocab,
    num_users: usize,
    num_pois: usize,
    num_categories: usize,
    best_epoch: usize,
    history: Vec<EpochRecord>,
    tensors: BTreeMap<String, StoredTensor>,
}

fn encode(t: &Tensor) -> Result<StoredTensor> {
    let flat = t.flatten_all()?;
    let (dtype, bytes) = match t.dtype() {
        DType::F32 => ("f32", flat.to_vec1::<f32>()?.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>()),
        DType::F64 => ("f64", flat.to_vec1::<f64>()?.iter().flat_map(|x| x.to_le_bytes()).collect()),
        other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    };
    Ok(StoredTensor {
        dtype: dtype.to_string(),
        shape: t.dims().to_vec(),
        data: STANDARD.encode(bytes),
    })
}

fn decode(name: &str, s: &StoredTensor) -> Result<Tensor> {
    let bytes = STANDARD
        .decode(&s.data)
        .map_err(|e| Error::Checkpoint(format!("{name}: bad base64: {e}")))?;
    let count: usize = s.shape.iter().product();
    let width = match s.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Checkpoint(format!("{name}: unsupported dtype {other}"))),
    };
    if bytes.len() != count * width {
        return Err(Error::Checkpoint(format!(
            "{name}: {} bytes for shape {:?}",
            bytes.len(),
            s.shape
        )));
    }
    let dev = Device::Cpu;
    let t = if width == 4 {
        let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_vec(v, s.shape.clone(), &dev)?
    } else {
        let v: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_vec(v, s.shape.clone(), &dev)?
    };
    Ok(t)
}

pub fn save(predictor: &TrainedPredictor, path: &Path) -> Result<()> {
    let m = &predictor.model;
    let tensors = m
        .vars()
        .iter()
        .map(|(k, v)| Ok((k.clone(), encode(v.as_tensor())?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let c = Container {
        format: FORMAT.to_string(),
        version: VERSION,
        config: m.config.clone(),
        mode: m.mode,
        vocab: predictor.vocab.clone(),
        num_users: m.num_users,
        num_pois: m.num_pois,
        num_categories: m.num_categories,
        best_epoch: predictor.best_epoch,
        history: predictor.history.clone(),
        tensors,
    };
    let text = serde_json::to_string(&c)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainedPredictor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let c: Container = serde_json::from_str(&text)?;
    if c.format != FORMAT || c.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            c.format, c.version
        )));
    }
    if c.vocab.num_users() != c.num_users
        || c.vocab.num_pois() != c.num_pois
        || c.vocab.num_categories() != c.num_categories
    {
        return Err(Error::Checkpoint("vocabulary sizes disagree with table shapes".into()));
    }
    let tensors = c
        .tensors
        .iter()
        .map(|(k, s)| Ok((k.clone(), decode(k, s)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let model = IntentModel::from_tensors(&c.config, c.mode, c.num_users, c.num_pois, c.num_categories, tensors)?;
    Ok(TrainedPredictor {
        model,
        vocab: c.vocab,
        history: c.history,
        best_epoch: c.best_epoch,
    })
}
