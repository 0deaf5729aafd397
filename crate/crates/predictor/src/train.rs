use std::io::Write;
use std::path::Path;

use candle_core::DType;
use limp_core::evaluation::RankOutcome;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{IntentMode, PredictorConfig};
use crate::dataset::{InputUnit, PredictorDataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::model::{Batch, Dropout, IntentModel};
use crate::optim::Adam;
use crate::vocab::{Vocab, UNKNOWN};

const EVAL_BATCH: usize = 256;
/// Offset separating the shuffle/dropout stream from the init stream.
const TRAIN_STREAM: u64 = 0x5EED_0F_7EA1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when there is no validation data.
    pub val_acc1: Option<f64>,
}

pub struct TrainedPredictor {
    pub model: IntentModel,
    pub vocab: Vocab,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainedPredictor {
    pub fn mode(&self) -> IntentMode {
        self.model.mode
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.model.config
    }
}

/// Indices of samples grouped into equal-length batches, shuffled.
fn batches(samples: &[Sample], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| samples[i].len());
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match out.last_mut() {
            Some(b) if b.len() < size && samples[b[0]].len() == samples[i].len() => b.push(i),
            _ => out.push(vec![i]),
        }
    }
    out.shuffle(rng);
    out
}

/// One pass over `samples`; returns the mean batch loss.
pub fn train_epoch(
    model: &IntentModel,
    optimizer: &mut Adam,
    samples: &[Sample],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let cfg = &model.config;
    let plan = batches(samples, cfg.batch_size, rng);
    let mut total = 0.0;
    for idx in &plan {
        let group: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
        let batch = Batch::from_samples(&group, model.mode, true)?;
        let out = model.forward(&batch, &mut Dropout::train(cfg.dropout, rng))?;
        let loss = model.loss(&out, &batch)?;
        let grads = loss.total.backward()?;
        optimizer.step(model.vars(), &grads)?;
        total += loss.total.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    }
    Ok(total / plan.len() as f64)
}

/// Evaluation-mode loss over `samples`, averaged per batch of equal length.
pub fn eval_loss(model: &IntentModel, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for chunk in samples.chunks(EVAL_BATCH) {
        let group: Vec<&Sample> = chunk.iter().collect();
        let batch = Batch::from_samples(&group, model.mode, false)?;
        let out = model.forward(&batch, &mut Dropout::eval())?;
        total += model.loss(&out, &batch)?.total.to_dtype(DType::F64)?.to_scalar::<f64>()? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Rank of the true next POI at each sample's last position. Unknown
/// targets are counted as misses.
pub fn evaluate(model: &IntentModel, samples: &[Sample]) -> Result<Vec<RankOutcome>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut i = 0;
    while i < samples.len() {
        let len = samples[i].len();
        let mut j = i;
        while j < samples.len() && j - i < EVAL_BATCH && samples[j].len() == len {
            j += 1;
        }
        let group: Vec<&Sample> = samples[i..j].iter().collect();
        let batch = Batch::from_samples(&group, model.mode, false)?;
        let heads = model.forward(&batch, &mut Dropout::eval())?;
        let logits = heads.poi_logits.to_dtype(DType::F32)?.to_vec2::<f32>()?;
        for (b, s) in group.iter().enumerate() {
            let target = s.target_pois[len - 1];
            if target == UNKNOWN {
                out.push(RankOutcome::missing());
            } else {
                out.push(RankOutcome::from_scores(&logits[b * len + len - 1], target as usize));
            }
        }
        i = j;
    }
    Ok(out)
}

fn acc1(model: &IntentModel, samples: &[Sample]) -> Result<f64> {
    let outcomes = evaluate(model, samples)?;
    Ok(limp_core::evaluation::acc_at_k(&outcomes, 1)?)
}

/// Trains `model` in place and leaves the best-validation weights loaded.
pub fn fit(model: &IntentModel, train: &[Sample], val: &[Sample]) -> Result<(Vec<EpochRecord>, usize)> {
    if train.is_empty() {
        return Err(invalid("training needs at least one sample"));
    }
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_STREAM);
    let mut optimizer = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, _)> = None;
    for epoch in 1..=cfg.epochs {
        let train_loss = train_epoch(model, &mut optimizer, train, &mut rng)?;
        if !train_loss.is_finite() {
            return Err(invalid(format!("training diverged at epoch {epoch}")));
        }
        let val_acc1 = if val.is_empty() { None } else { Some(acc1(model, val)?) };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4}, val Acc@1 {}",
            val_acc1.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_acc1,
        });
        // Without validation data the last epoch wins.
        let score = val_acc1.unwrap_or(epoch as f64);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.snapshot()?));
        }
        if let (Some(p), Some((_, e, _))) = (cfg.patience, &best) {
            if epoch - e >= p {
                log::info!("no validation gain for {p} epochs; stopping");
                break;
            }
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch ran");
    model.restore(&weights)?;
    Ok((history, best_epoch))
}

/// Fresh model sized to the dataset's vocabularies, trained with `mode`.
pub fn train(dataset: &PredictorDataset, config: &PredictorConfig, mode: IntentMode) -> Result<TrainedPredictor> {
    if let Some(s) = dataset.train.first() {
        if s.len() != config.units_per_window() {
            return Err(invalid(format!(
                "dataset windows have {} units but the config expects {}",
                s.len(),
                config.units_per_window()
            )));
        }
    }
    let v = &dataset.vocab;
    let model = IntentModel::new(config, mode, v.num_users(), v.num_pois(), v.num_categories(), DType::F32)?;
    log::info!("training {mode} model with {} parameters", model.parameter_count());
    let (history, best_epoch) = fit(&model, &dataset.train, &dataset.val)?;
    Ok(TrainedPredictor {
        model,
        vocab: dataset.vocab.clone(),
        history,
        best_epoch,
    })
}

/// The `k` highest-scoring POIs after the last unit, best first; ties go
/// to the lower index.
pub fn predict_topk(model: &IntentModel, units: &[InputUnit], k: usize) -> Result<Vec<(u32, f32)>> {
    if k < 1 || k > model.num_pois {
        return Err(invalid(format!("k must be in 1..={}, got {k}", model.num_pois)));
    }
    let batch = Batch::from_units(units, model.mode)?;
    let out = model.forward(&batch, &mut Dropout::eval())?;
    let logits = out.poi_logits_at(0, units.len() - 1)?;
    Ok(top_k(&logits, k))
}

/// Sorting helper shared by [`predict_topk`]: descending score, ascending index.
pub fn top_k(scores: &[f32], k: usize) -> Vec<(u32, f32)> {
    let mut ranked: Vec<(u32, f32)> = scores.iter().enumerate().map(|(i, &s)| (i as u32, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from("epoch,train_loss,val_acc1\n");
    for r in history {
        let acc = r.val_acc1.map_or(String::new(), |a| format!("{a}"));
        text.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, acc));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
