//! Numerical self-checks: finite-difference gradients, causality,
//! single-batch overfitting and checkpoint stability.

use candle_core::{DType, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{IntentMode, PredictorConfig};
use crate::dataset::{InputUnit, Sample};
use crate::error::{invalid, Result};
use crate::model::{Batch, Dropout, IntentModel};
use crate::train::{eval_loss, fit};
use limp_core::{Intent, NUM_INTENTS};

/// Random but valid samples for a model of the given vocabulary sizes.
pub fn random_samples(
    count: usize,
    len: usize,
    users: usize,
    pois: usize,
    categories: usize,
    seed: u64,
) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let user = rng.random_range(0..users as u32);
            let units = (0..len)
                .map(|_| {
                    let mut p = [0.0; NUM_INTENTS];
                    p.iter_mut().for_each(|x| *x = rng.random::<f64>() + 1e-3);
                    let s: f64 = p.iter().sum();
                    p.iter_mut().for_each(|x| *x /= s);
                    InputUnit {
                        user,
                        poi: rng.random_range(0..pois as u32),
                        category: rng.random_range(0..categories as u32),
                        next_time: rng.random::<f64>(),
                        probs: p,
                    }
                })
                .collect();
            Sample {
                units,
                next_intents: (0..len).map(|_| Intent::ALL[rng.random_range(0..NUM_INTENTS)]).collect(),
                target_pois: (0..len).map(|_| rng.random_range(1..pois as u32)).collect(),
                target_categories: (0..len).map(|_| rng.random_range(1..categories as u32)).collect(),
                target_times: (0..len).map(|_| rng.random::<f64>()).collect(),
            }
        })
        .collect()
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[derive(Debug, Clone)]
pub struct GradientCheck {
    /// Per parameter: (name, entries checked, norm-wise relative error).
    pub parameters: Vec<(String, usize, f64)>,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.parameters.iter().map(|p| p.2).fold(0.0, f64::max)
    }
}

/// Central differences against autodiff on an f64 copy of `config`, in
/// evaluation mode. Checks every intent-table entry and up to
/// `per_parameter` entries of every other parameter.
pub fn gradient_check(config: &PredictorConfig, per_parameter: usize, seed: u64) -> Result<GradientCheck> {
    let (users, pois, categories) = (3, 9, 5);
    let model = IntentModel::new(config, IntentMode::Weighted, users, pois, categories, DType::F64)?;
    let samples = random_samples(2, config.units_per_window(), users, pois, categories, seed);
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs, IntentMode::Weighted, false)?;
    let loss_of = |m: &IntentModel| -> Result<Tensor> {
        let out = m.forward(&batch, &mut Dropout::eval())?;
        Ok(m.loss(&out, &batch)?.total)
    };
    let grads = loss_of(&model)?.backward()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1D1);
    let h = 1e-6;
    let mut report = GradientCheck { parameters: Vec::new() };
    for (name, var) in model.vars() {
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .ok_or_else(|| invalid(format!("no gradient for {name}")))?
            .flatten_all()?
            .to_vec1()?;
        let base: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        let entries: Vec<usize> = if name == "intent_embedding" || base.len() <= per_parameter {
            (0..base.len()).collect()
        } else {
            (0..per_parameter).map(|_| rng.random_range(0..base.len())).collect()
        };
        let shape = var.as_tensor().shape().clone();
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for &i in &entries {
            let mut w = base.clone();
            w[i] = base[i] + h;
            var.set(&Tensor::from_vec(w.clone(), shape.clone(), model.device())?)?;
            let up = scalar(&loss_of(&model)?)?;
            w[i] = base[i] - h;
            var.set(&Tensor::from_vec(w, shape.clone(), model.device())?)?;
            let down = scalar(&loss_of(&model)?)?;
            let numeric = (up - down) / (2.0 * h);
            diff2 += (numeric - analytic[i]).powi(2);
            a2 += analytic[i].powi(2);
            n2 += numeric.powi(2);
        }
        var.set(&Tensor::from_vec(base, shape, model.device())?)?;
        let scale = a2.sqrt().max(n2.sqrt());
        let rel = if scale < 1e-12 { diff2.sqrt() } else { diff2.sqrt() / scale };
        report.parameters.push((name.clone(), entries.len(), rel));
    }
    Ok(report)
}

/// Largest absolute change at positions `<= k` after every future
/// position `> k` is replaced, over all `k`. Zero means causal.
pub fn causality_probe(model: &IntentModel, seed: u64) -> Result<f64> {
    let len = model.config.units_per_window();
    let base = random_samples(1, len, model.num_users, model.num_pois, model.num_categories, seed).remove(0);
    let other = random_samples(1, len, model.num_users, model.num_pois, model.num_categories, seed + 1).remove(0);
    let rows = |s: &Sample| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let b = Batch::from_samples(&[s], model.mode, false)?;
        let o = model.forward(&b, &mut Dropout::eval())?;
        let f = |t: &Tensor| -> Result<Vec<Vec<f64>>> { Ok(t.to_dtype(DType::F64)?.to_vec2()?) };
        Ok((f(&o.poi_logits)?, f(&o.category_logits)?, f(&o.time)?))
    };
    let reference = rows(&base)?;
    let mut worst: f64 = 0.0;
    for k in 0..len - 1 {
        let mut probe = base.clone();
        for j in k + 1..len {
            probe.units[j] = other.units[j];
            probe.units[j].user = base.units[j].user;
        }
        let changed = rows(&probe)?;
        for (a, b) in [(&reference.0, &changed.0), (&reference.1, &changed.1), (&reference.2, &changed.2)] {
            for pos in 0..=k {
                for (x, y) in a[pos].iter().zip(&b[pos]) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct OverfitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

impl OverfitReport {
    pub fn ratio(&self) -> f64 {
        self.final_loss / self.initial_loss
    }
}

/// Trains on one repeated window for `config.epochs` epochs and compares
/// its evaluation-mode loss before and after.
pub fn overfit_one_batch(config: &PredictorConfig, mode: IntentMode, seed: u64) -> Result<OverfitReport> {
    let (users, pois, categories) = (4, 30, 6);
    let model = IntentModel::new(config, mode, users, pois, categories, DType::F32)?;
    let samples = random_samples(1, config.units_per_window(), users, pois, categories, seed);
    let initial_loss = eval_loss(&model, &samples)?;
    let (history, _) = fit(&model, &samples, &[])?;
    Ok(OverfitReport {
        initial_loss,
        final_loss: eval_loss(&model, &samples)?,
        epochs: history.len(),
    })
}

/// Forward outputs of `samples` in evaluation mode, as raw bits.
pub fn output_bits(model: &IntentModel, samples: &[Sample]) -> Result<Vec<u64>> {
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs, model.mode, false)?;
    let out = model.forward(&batch, &mut Dropout::eval())?;
    let mut bits = Vec::new();
    for t in [&out.poi_logits, &out.category_logits, &out.time] {
        match t.dtype() {
            DType::F32 => bits.extend(t.flatten_all()?.to_vec1::<f32>()?.iter().map(|x| x.to_bits() as u64)),
            _ => bits.extend(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?.iter().map(|x| x.to_bits())),
        }
    }
    Ok(bits)
}
