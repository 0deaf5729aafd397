use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use limp_core::a2i::{FallbackPolicy, PromptVariant};
use limp_core::data::SplitRatios;
use limp_core::intentprob::KernelParams;
use limp_predictor::PredictorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every other seed is derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitRatios,
    pub kernel: KernelConfig,
    pub predictor: PredictorConfig,
    pub annotation: AnnotationConfig,
    pub finetune: FinetuneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("limp-out"),
            data: DataConfig::default(),
            split: SplitRatios::default(),
            kernel: KernelConfig::default(),
            predictor: PredictorConfig::default(),
            annotation: AnnotationConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Stay records (CSV or JSONL). Defaults to `<out>/data/stays.csv`.
    pub stays: Option<PathBuf>,
    /// Ground-truth labels CSV. Defaults to `<out>/data/labels.csv` when present.
    pub labels: Option<PathBuf>,
    /// Synthetic world size used by `synth`.
    pub users: usize,
    pub days: usize,
    pub pois: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            stays: None,
            labels: None,
            users: 50,
            days: 60,
            pois: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub t_max_hours: f64,
    pub resolution_secs: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            t_max_hours: 4.0,
            resolution_secs: 60.0,
        }
    }
}

impl KernelConfig {
    pub fn params(&self) -> Result<KernelParams> {
        Ok(KernelParams::with_hours(self.t_max_hours)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Heuristic,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub variant: PromptVariant,
    pub backend: BackendKind,
    /// Adds the noise profile to the mock backend.
    pub noisy_mock: bool,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub parallelism: usize,
    pub retries: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub fallback: FallbackPolicy,
    /// Users labeled by the heuristic protocol to seed the insight stage
    /// when no ground truth is available.
    pub seed_users: usize,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            variant: PromptVariant::A2i,
            backend: BackendKind::Mock,
            noisy_mock: false,
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: "LIMP_API_KEY".into(),
            timeout_secs: 120,
            parallelism: 1,
            retries: 3,
            temperature: 0.0,
            max_tokens: 1024,
            fallback: FallbackPolicy::Heuristic,
            seed_users: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub users: usize,
    pub fraction: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            users: limp_core::finetune::DEFAULT_USER_COUNT,
            fraction: limp_core::finetune::DEFAULT_FRACTION,
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, or the config recorded in a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let Some(c) = manifest.get("config") else {
                bail!("{} is not a run manifest", path.display());
            };
            serde_json::from_value(c.clone()).context("manifest config")?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.kernel.params()?;
        if !(self.kernel.resolution_secs.is_finite() && self.kernel.resolution_secs > 0.0) {
            bail!("kernel.resolution_secs must be positive");
        }
        self.predictor.validate()?;
        if self.data.users == 0 || self.data.days == 0 {
            bail!("data.users and data.days must be positive");
        }
        if self.annotation.parallelism == 0 {
            bail!("annotation.parallelism must be at least 1");
        }
        if !(self.finetune.fraction > 0.0 && self.finetune.fraction <= 1.0) {
            bail!("finetune.fraction must be in (0, 1]");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(canonical))
    }

    /// Seed for one named purpose, derived from the root seed.
    pub fn derive_seed(&self, purpose: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(purpose.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.out_dir.join(sub)
    }

    pub fn stays_path(&self) -> PathBuf {
        self.data.stays.clone().unwrap_or_else(|| self.dir("data").join("stays.csv"))
    }

    /// Configured labels path, or the synthetic one if it exists.
    pub fn labels_path(&self) -> Option<PathBuf> {
        match &self.data.labels {
            Some(p) => Some(p.clone()),
            None => {
                let p = self.dir("data").join("labels.csv");
                p.exists().then_some(p)
            }
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
