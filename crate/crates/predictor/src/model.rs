use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use limp_core::intentprob::argmax;
use limp_core::{Intent, NUM_INTENTS};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{IntentMode, PredictorConfig};
use crate::dataset::{InputUnit, Sample};
use crate::error::{invalid, Result};

/// Additive attention mask value for future positions.
const MASK_VALUE: f64 = -1e9;
const LN_EPS: f64 = 1e-5;

/// Where the intent slice of a batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentSource {
    Distribution,
    DistributionArgmax,
    AnnotatedLabels,
    Absent,
}

/// Equal-length sequences packed row-major as `(batch, len)`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub batch: usize,
    pub len: usize,
    pub users: Vec<u32>,
    pub pois: Vec<u32>,
    pub categories: Vec<u32>,
    pub times: Vec<f64>,
    /// `batch * len * 6` intent weights after the mode is applied.
    pub intents: Vec<f64>,
    pub intent_source: IntentSource,
    pub target_pois: Vec<u32>,
    pub target_categories: Vec<u32>,
    pub target_times: Vec<f64>,
}

fn one_hot(intent: Intent) -> [f64; NUM_INTENTS] {
    let mut v = [0.0; NUM_INTENTS];
    v[intent.index()] = 1.0;
    v
}

impl Batch {
    /// Packs samples for `mode`. `training` only matters for
    /// [`IntentMode::TrainReal`], which reads the annotated next intents.
    pub fn from_samples(samples: &[&Sample], mode: IntentMode, training: bool) -> Result<Batch> {
        let Some(first) = samples.first() else {
            return Err(invalid("a batch needs at least one sample"));
        };
        let len = first.len();
        if len == 0 || samples.iter().any(|s| s.len() != len) {
            return Err(invalid("samples in a batch must share a non-zero length"));
        }
        let source = match (mode, training) {
            (IntentMode::Weighted, _) => IntentSource::Distribution,
            (IntentMode::MaxProb, _) | (IntentMode::TrainReal, false) => IntentSource::DistributionArgmax,
            (IntentMode::TrainReal, true) => IntentSource::AnnotatedLabels,
            (IntentMode::None, _) => IntentSource::Absent,
        };
        let n = samples.len() * len;
        let mut b = Batch {
            batch: samples.len(),
            len,
            users: Vec::with_capacity(n),
            pois: Vec::with_capacity(n),
            categories: Vec::with_capacity(n),
            times: Vec::with_capacity(n),
            intents: Vec::with_capacity(n * NUM_INTENTS),
            intent_source: source,
            target_pois: Vec::with_capacity(n),
            target_categories: Vec::with_capacity(n),
            target_times: Vec::with_capacity(n),
        };
        for s in samples {
            for (k, u) in s.units.iter().enumerate() {
                b.users.push(u.user);
                b.pois.push(u.poi);
                b.categories.push(u.category);
                b.times.push(u.next_time);
                let w = match source {
                    IntentSource::Distribution => u.probs,
                    IntentSource::DistributionArgmax => one_hot(argmax(&u.probs)),
                    IntentSource::AnnotatedLabels => one_hot(s.next_intents[k]),
                    IntentSource::Absent => [0.0; NUM_INTENTS],
                };
                b.intents.extend_from_slice(&w);
            }
            b.target_pois.extend_from_slice(&s.target_pois);
            b.target_categories.extend_from_slice(&s.target_categories);
            b.target_times.extend_from_slice(&s.target_times);
        }
        Ok(b)
    }

    /// A single unlabeled sequence, as used for inference.
    pub fn from_units(units: &[InputUnit], mode: IntentMode) -> Result<Batch> {
        let sample = Sample {
            units: units.to_vec(),
            next_intents: vec![Intent::AtHome; units.len()],
            target_pois: vec![0; units.len()],
            target_categories: vec![0; units.len()],
            target_times: vec![0.0; units.len()],
        };
        Batch::from_samples(&[&sample], mode, false)
    }

    pub fn positions(&self) -> usize {
        self.batch * self.len
    }
}

/// Per-position heads, flattened to `(batch * len, ·)`.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub batch: usize,
    pub len: usize,
    pub poi_logits: Tensor,
    pub category_logits: Tensor,
    pub time: Tensor,
}

impl Outputs {
    /// POI logits at one position as f32.
    pub fn poi_logits_at(&self, sample: usize, position: usize) -> Result<Vec<f32>> {
        let row = sample * self.len + position;
        Ok(self.poi_logits.get(row)?.to_dtype(DType::F32)?.to_vec1()?)
    }
}

/// Weighted loss and its parts (the parts are plain numbers).
#[derive(Debug, Clone)]
pub struct Loss {
    pub total: Tensor,
    pub poi: f64,
    pub category: f64,
    pub time: f64,
}

/// Dropout is active only when a random source is supplied.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Dropout<'a> {
    pub fn eval() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Dropout { rate, rng: Some(rng) }
    }

    fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x.clone());
        };
        if self.rate == 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mask: Vec<f32> = (0..x.elem_count())
            .map(|_| if rng.random::<f64>() < keep { scale as f32 } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok(x.mul(&mask)?)
    }
}

/// The intent-conditioned next-POI transformer.
pub struct IntentModel {
    pub config: PredictorConfig,
    pub mode: IntentMode,
    pub num_users: usize,
    pub num_pois: usize,
    pub num_categories: usize,
    dtype: DType,
    device: Device,
    vars: BTreeMap<String, Var>,
}

/// Shapes of every parameter, in creation order.
fn parameter_shapes(
    c: &PredictorConfig,
    mode: IntentMode,
    users: usize,
    pois: usize,
    categories: usize,
) -> Vec<(String, Vec<usize>, Init)> {
    let d = c.model_dim();
    let pu = c.poi_user_dim();
    let ct = c.category_time_dim();
    let mut out = vec![
        ("poi_embedding".to_string(), vec![pois, c.poi_dim], Init::Normal),
        ("user_embedding".into(), vec![users, c.user_dim], Init::Normal),
        ("category_embedding".into(), vec![categories, c.category_dim], Init::Normal),
        ("time.weight".into(), vec![1, c.time_dim], Init::Normal),
        ("time.bias".into(), vec![1, c.time_dim], Init::Normal),
        ("fuse_pu.weight".into(), vec![pu, pu], Init::Fan(pu)),
        ("fuse_pu.bias".into(), vec![1, pu], Init::Fan(pu)),
        ("fuse_ct.weight".into(), vec![ct, ct], Init::Fan(ct)),
        ("fuse_ct.bias".into(), vec![1, ct], Init::Fan(ct)),
    ];
    if mode.has_intent_table() {
        out.push(("intent_embedding".into(), vec![NUM_INTENTS, c.intent_dim], Init::Normal));
    }
    for l in 0..c.layers {
        for p in ["q", "k", "v", "o"] {
            out.push((format!("layer{l}.{p}.weight"), vec![d, d], Init::Fan(d)));
            out.push((format!("layer{l}.{p}.bias"), vec![1, d], Init::Zero));
        }
        out.push((format!("layer{l}.norm1.gain"), vec![1, d], Init::One));
        out.push((format!("layer{l}.norm1.bias"), vec![1, d], Init::Zero));
        out.push((format!("layer{l}.ff1.weight"), vec![d, c.ff_dim], Init::Fan(d)));
        out.push((format!("layer{l}.ff1.bias"), vec![1, c.ff_dim], Init::Fan(d)));
        out.push((format!("layer{l}.ff2.weight"), vec![c.ff_dim, d], Init::Fan(c.ff_dim)));
        out.push((format!("layer{l}.ff2.bias"), vec![1, d], Init::Fan(c.ff_dim)));
        out.push((format!("layer{l}.norm2.gain"), vec![1, d], Init::One));
        out.push((format!("layer{l}.norm2.bias"), vec![1, d], Init::Zero));
    }
    out.push(("head_poi.weight".into(), vec![d, pois], Init::Uniform(0.1)));
    out.push(("head_poi.bias".into(), vec![1, pois], Init::Zero));
    out.push(("head_category.weight".into(), vec![d, categories], Init::Uniform(0.1)));
    out.push(("head_category.bias".into(), vec![1, categories], Init::Zero));
    out.push(("head_time.weight".into(), vec![d, 1], Init::Uniform(0.1)));
    out.push(("head_time.bias".into(), vec![1, 1], Init::Zero));
    out
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    /// Uniform in ±1/sqrt(fan_in).
    Fan(usize),
    Uniform(f64),
    Zero,
    One,
}

impl Init {
    fn sample(self, rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let uniform = |rng: &mut ChaCha8Rng, a: f64| rng.random_range(-a..a);
        (0..count)
            .map(|_| match self {
                Init::Normal => normal.sample(rng),
                Init::Fan(f) => uniform(rng, 1.0 / (f as f64).sqrt()),
                Init::Uniform(a) => uniform(rng, a),
                Init::Zero => 0.0,
                Init::One => 1.0,
            })
            .collect()
    }
}

fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok((x.relu()? - x.neg()?.relu()?.affine(slope, 0.0)?)?)
}

/// Softmax over the last dimension. The max shift is detached; softmax
/// is invariant to it.
fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let z = x.broadcast_sub(&m)?;
    let lse = z.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(z.broadcast_sub(&lse)?)
}

/// Mean negative log-likelihood of `targets` under `(n, classes)` logits.
pub fn cross_entropy(logits: &Tensor, targets: &[u32]) -> Result<Tensor> {
    let t = Tensor::from_slice(targets, (targets.len(), 1), logits.device())?;
    let picked = log_softmax_last(logits)?.gather(&t, 1)?;
    Ok(picked.mean_all()?.neg()?)
}

/// Sinusoidal position table, `(len, d)`.
fn positional_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for pos in 0..len {
        for i in (0..d).step_by(2) {
            let angle = pos as f64 / 10000f64.powf(i as f64 / d as f64);
            pe[pos * d + i] = angle.sin();
            if i + 1 < d {
                pe[pos * d + i + 1] = angle.cos();
            }
        }
    }
    pe
}

impl IntentModel {
    pub fn new(
        config: &PredictorConfig,
        mode: IntentMode,
        num_users: usize,
        num_pois: usize,
        num_categories: usize,
        dtype: DType,
    ) -> Result<Self> {
        config.validate()?;
        if num_users == 0 || num_pois == 0 || num_categories == 0 {
            return Err(invalid("vocabularies must be non-empty"));
        }
        let device = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut vars = BTreeMap::new();
        for (name, shape, init) in parameter_shapes(config, mode, num_users, num_pois, num_categories) {
            let count = shape.iter().product();
            let data = init.sample(&mut rng, count);
            let t = Tensor::from_vec(data, shape, &device)?.to_dtype(dtype)?;
            vars.insert(name, Var::from_tensor(&t)?);
        }
        Ok(IntentModel {
            config: config.clone(),
            mode,
            num_users,
            num_pois,
            num_categories,
            dtype,
            device,
            vars,
        })
    }

    /// Rebuilds a model around stored tensors; every expected parameter
    /// must be present with its expected shape.
    pub fn from_tensors(
        config: &PredictorConfig,
        mode: IntentMode,
        num_users: usize,
        num_pois: usize,
        num_categories: usize,
        tensors: BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let mut tensors = tensors;
        let mut vars = BTreeMap::new();
        let mut dtype = None;
        for (name, shape, _) in parameter_shapes(config, mode, num_users, num_pois, num_categories) {
            let t = tensors
                .remove(&name)
                .ok_or_else(|| invalid(format!("missing parameter {name}")))?;
            if t.dims() != shape.as_slice() {
                return Err(invalid(format!("parameter {name} has shape {:?}, expected {shape:?}", t.dims())));
            }
            if *dtype.get_or_insert(t.dtype()) != t.dtype() {
                return Err(invalid("parameters have mixed dtypes"));
            }
            vars.insert(name, Var::from_tensor(&t)?);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(invalid(format!("unexpected parameter {extra}")));
        }
        Ok(IntentModel {
            config: config.clone(),
            mode,
            num_users,
            num_pois,
            num_categories,
            dtype: dtype.unwrap_or(DType::F32),
            device: Device::Cpu,
            vars,
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Trainable parameters by name. The intent table is absent in `None` mode.
    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Result<&Var> {
        self.vars.get(name).ok_or_else(|| invalid(format!("no parameter named {name}")))
    }

    fn p(&self, name: &str) -> &Tensor {
        self.vars[name].as_tensor()
    }

    fn linear(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let w = self.p(&format!("{name}.weight"));
        let b = self.p(&format!("{name}.bias"));
        Ok(x.matmul(w)?.broadcast_add(b)?)
    }

    fn layer_norm(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&var.affine(1.0, LN_EPS)?.sqrt()?)?;
        let g = self.p(&format!("{name}.gain"));
        let b = self.p(&format!("{name}.bias"));
        Ok(normed.broadcast_mul(g)?.broadcast_add(b)?)
    }

    fn f(&self, data: &[f64], shape: (usize, usize)) -> Result<Tensor> {
        Ok(Tensor::from_slice(data, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    fn u(&self, data: &[u32]) -> Result<Tensor> {
        Ok(Tensor::from_slice(data, data.len(), &self.device)?)
    }

    /// `P @ table` for rows of distributions, `(n, Γ)`.
    pub fn intent_embedding(&self, probs: &[[f64; NUM_INTENTS]]) -> Result<Tensor> {
        let flat: Vec<f64> = probs.iter().flatten().copied().collect();
        self.intent_slice(&flat, probs.len())
    }

    fn intent_slice(&self, flat: &[f64], n: usize) -> Result<Tensor> {
        match self.vars.get("intent_embedding") {
            Some(table) => Ok(self.f(flat, (n, NUM_INTENTS))?.matmul(table.as_tensor())?),
            None => Ok(Tensor::zeros((n, self.config.intent_dim), self.dtype, &self.device)?),
        }
    }

    /// Learned periodic time encoding, `(n, time_dim)`: one linear channel
    /// followed by sinusoidal channels.
    pub fn time_encoding(&self, times: &[f64]) -> Result<Tensor> {
        let t = self.f(times, (times.len(), 1))?;
        let lin = t.broadcast_mul(self.p("time.weight"))?.broadcast_add(self.p("time.bias"))?;
        let k = self.config.time_dim;
        Ok(Tensor::cat(&[lin.narrow(1, 0, 1)?, lin.narrow(1, 1, k - 1)?.sin()?], 1)?)
    }

    fn check_indices(&self, batch: &Batch) -> Result<()> {
        let bad = |v: &[u32], limit: usize| v.iter().find(|&&i| i as usize >= limit).copied();
        if let Some(i) = bad(&batch.users, self.num_users) {
            return Err(invalid(format!("user index {i} out of range")));
        }
        if let Some(i) = bad(&batch.pois, self.num_pois) {
            return Err(invalid(format!("POI index {i} out of range")));
        }
        if let Some(i) = bad(&batch.categories, self.num_categories) {
            return Err(invalid(format!("category index {i} out of range")));
        }
        Ok(())
    }

    /// Stay embeddings `[e_pu ‖ e_ct ‖ e_I]`, `(batch * len, d)`.
    pub fn embed(&self, batch: &Batch) -> Result<Tensor> {
        self.check_indices(batch)?;
        let a = self.config.leaky_slope;
        let n = batch.positions();
        let e_p = self.p("poi_embedding").index_select(&self.u(&batch.pois)?, 0)?;
        let e_u = self.p("user_embedding").index_select(&self.u(&batch.users)?, 0)?;
        let e_pu = leaky_relu(&self.linear(&Tensor::cat(&[e_p, e_u], 1)?, "fuse_pu")?, a)?;
        let e_c = self.p("category_embedding").index_select(&self.u(&batch.categories)?, 0)?;
        let e_t = self.time_encoding(&batch.times)?;
        let e_ct = leaky_relu(&self.linear(&Tensor::cat(&[e_c, e_t], 1)?, "fuse_ct")?, a)?;
        let e_i = self.intent_slice(&batch.intents, n)?;
        Ok(Tensor::cat(&[e_pu, e_ct, e_i], 1)?)
    }

    /// Causal encoder plus heads. Position `k` sees positions `0..=k` and
    /// predicts movement `k + 1`.
    pub fn forward(&self, batch: &Batch, dropout: &mut Dropout<'_>) -> Result<Outputs> {
        let (b, l) = (batch.batch, batch.len);
        if l == 0 || l > self.config.units_per_window() {
            return Err(invalid(format!(
                "sequence length {l} outside 1..={}",
                self.config.units_per_window()
            )));
        }
        let d = self.config.model_dim();
        let h = self.config.heads;
        let dh = d / h;
        let n = b * l;

        let pe = self.f(&positional_encoding(l, d), (l, d))?;
        let x = self.embed(batch)?.affine((d as f64).sqrt(), 0.0)?;
        let x = x.reshape((b, l, d))?.broadcast_add(&pe)?;
        let mut x = dropout.apply(&x)?.reshape((n, d))?;

        let mut mask = vec![0.0; l * l];
        for i in 0..l {
            for j in i + 1..l {
                mask[i * l + j] = MASK_VALUE;
            }
        }
        let mask = self.f(&mask, (l, l))?;
        let scale = 1.0 / (dh as f64).sqrt();

        for layer in 0..self.config.layers {
            let heads = |name: &str| -> Result<Tensor> {
                let t = self.linear(&x, &format!("layer{layer}.{name}"))?;
                Ok(t.reshape((b, l, h, dh))?.transpose(1, 2)?.contiguous()?)
            };
            let (q, k, v) = (heads("q")?, heads("k")?, heads("v")?);
            let scores = q.matmul(&k.t()?.contiguous()?)?.affine(scale, 0.0)?;
            let attn = softmax_last(&scores.broadcast_add(&mask)?)?;
            let attn = dropout.apply(&attn)?;
            let ctx = attn.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((n, d))?;
            let o = self.linear(&ctx, &format!("layer{layer}.o"))?;
            x = self.layer_norm(&(&x + dropout.apply(&o)?)?, &format!("layer{layer}.norm1"))?;
            let ff = self.linear(&x, &format!("layer{layer}.ff1"))?.relu()?;
            let ff = self.linear(&dropout.apply(&ff)?, &format!("layer{layer}.ff2"))?;
            x = self.layer_norm(&(&x + dropout.apply(&ff)?)?, &format!("layer{layer}.norm2"))?;
        }

        Ok(Outputs {
            batch: b,
            len: l,
            poi_logits: self.linear(&x, "head_poi")?,
            category_logits: self.linear(&x, "head_category")?,
            time: self.linear(&x, "head_time")?,
        })
    }

    /// Weighted sum of POI and category cross-entropy and time MSE, each
    /// averaged over positions.
    pub fn loss(&self, out: &Outputs, batch: &Batch) -> Result<Loss> {
        let w = self.config.loss_weights;
        let poi = cross_entropy(&out.poi_logits, &batch.target_pois)?;
        let cat = cross_entropy(&out.category_logits, &batch.target_categories)?;
        let target = self.f(&batch.target_times, (batch.positions(), 1))?;
        let time = (&out.time - target)?.sqr()?.mean_all()?;
        let total = ((poi.affine(w.poi, 0.0)? + cat.affine(w.category, 0.0)?)? + time.affine(w.time, 0.0)?)?;
        let scalar = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
        Ok(Loss {
            poi: scalar(&poi)?,
            category: scalar(&cat)?,
            time: scalar(&time)?,
            total,
        })
    }

    /// Deep copies of all parameters.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach())))
            .collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let t = snapshot
                .get(name)
                .ok_or_else(|| invalid(format!("snapshot lacks parameter {name}")))?;
            var.set(t)?;
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }
}
