use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// How the intent slice of each input unit is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntentMode {
    /// Probability-weighted sum of the intent rows.
    Weighted,
    /// The row of the most probable intent; ties go to the lowest ordinal.
    MaxProb,
    /// Annotated next intent while training, `MaxProb` at evaluation.
    TrainReal,
    /// Zero intent slice; the intent table does not exist.
    None,
}

impl IntentMode {
    pub const ALL: [IntentMode; 4] = [
        IntentMode::Weighted,
        IntentMode::MaxProb,
        IntentMode::TrainReal,
        IntentMode::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentMode::Weighted => "weighted",
            IntentMode::MaxProb => "max-prob",
            IntentMode::TrainReal => "train-real",
            IntentMode::None => "none",
        }
    }

    /// Row label in the model ablation table.
    pub fn table_name(self) -> &'static str {
        match self {
            IntentMode::Weighted => "Full",
            IntentMode::MaxProb => "Max-Prob",
            IntentMode::TrainReal => "Train-Real",
            IntentMode::None => "w/o intent",
        }
    }

    pub fn has_intent_table(self) -> bool {
        self != IntentMode::None
    }
}

impl fmt::Display for IntentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "weighted" | "full" => Ok(IntentMode::Weighted),
            "max-prob" | "maxprob" => Ok(IntentMode::MaxProb),
            "train-real" | "trainreal" => Ok(IntentMode::TrainReal),
            "none" | "w/o-intent" => Ok(IntentMode::None),
            _ => Err(invalid(format!("unknown intent mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub poi: f64,
    pub category: f64,
    pub time: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            poi: 1.0,
            category: 1.0,
            time: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub poi_dim: usize,
    pub user_dim: usize,
    pub category_dim: usize,
    pub time_dim: usize,
    pub intent_dim: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Stays per training window; a window yields `window - 1` input units.
    pub window: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without a better validation Acc@1.
    pub patience: Option<usize>,
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            poi_dim: 128,
            user_dim: 128,
            category_dim: 32,
            time_dim: 32,
            intent_dim: 32,
            layers: 2,
            ff_dim: 1024,
            heads: 2,
            dropout: 0.3,
            leaky_slope: 0.2,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            epochs: 200,
            window: 12,
            batch_size: 32,
            patience: None,
            loss_weights: LossWeights::default(),
            seed: 42,
        }
    }
}

impl PredictorConfig {
    /// Narrower widths and fewer epochs for CPU-scale ablations.
    pub fn compact() -> Self {
        PredictorConfig {
            poi_dim: 32,
            user_dim: 32,
            category_dim: 16,
            time_dim: 16,
            intent_dim: 16,
            ff_dim: 256,
            epochs: 20,
            ..PredictorConfig::default()
        }
    }

    /// Two layers, every block eight wide. Used by gradient checks.
    pub fn toy() -> Self {
        PredictorConfig {
            poi_dim: 4,
            user_dim: 4,
            category_dim: 4,
            time_dim: 4,
            intent_dim: 8,
            layers: 2,
            ff_dim: 8,
            heads: 2,
            dropout: 0.0,
            epochs: 10,
            window: 6,
            batch_size: 4,
            ..PredictorConfig::default()
        }
    }

    pub fn poi_user_dim(&self) -> usize {
        self.poi_dim + self.user_dim
    }

    pub fn category_time_dim(&self) -> usize {
        self.category_dim + self.time_dim
    }

    /// Width of one stay embedding.
    pub fn model_dim(&self) -> usize {
        self.poi_user_dim() + self.category_time_dim() + self.intent_dim
    }

    /// Input units per training window.
    pub fn units_per_window(&self) -> usize {
        self.window - 1
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("poi_dim", self.poi_dim),
            ("user_dim", self.user_dim),
            ("category_dim", self.category_dim),
            ("intent_dim", self.intent_dim),
            ("layers", self.layers),
            ("ff_dim", self.ff_dim),
            ("heads", self.heads),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in widths {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.time_dim < 2 {
            return Err(invalid("time_dim needs one linear and at least one periodic channel"));
        }
        if self.window < 2 {
            return Err(invalid(format!("window must be at least 2, got {}", self.window)));
        }
        if self.model_dim() % self.heads != 0 {
            return Err(invalid(format!(
                "model width {} is not divisible by {} heads",
                self.model_dim(),
                self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("loss_weights.poi", self.loss_weights.poi),
            ("loss_weights.category", self.loss_weights.category),
            ("loss_weights.time", self.loss_weights.time),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid("weight_decay must be non-negative"));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(invalid("leaky_slope must be non-negative"));
        }
        if self.patience == Some(0) {
            return Err(invalid("patience must be positive when set"));
        }
        Ok(())
    }
}
