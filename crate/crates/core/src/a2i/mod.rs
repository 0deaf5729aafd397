//! Analyze-Abstract-Infer annotation workflow: insights from labeled
//! statistics, per-user home/work identification, then per-day intents.

pub mod backend;
pub mod http;
pub mod mock;
pub mod parse;
pub mod prompts;
pub mod workflow;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::intent::Intent;
use crate::literal::py_str;

pub use backend::{BackendError, BackendIdentity, ChatBackend, Fault, FaultInjector};
pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{MockBackend, NoiseProfile};
pub use parse::{parse_anchor_response, parse_insight_response, parse_intent_response, AnchorAnswer};
pub use prompts::{
    render_feature_prompt, render_hwi_prompt, render_intent_prompt, render_task1_prompt,
    render_task2_prompt,
};
pub use workflow::{
    run_a2i, A2iConfig, A2iRun, AnnotationResult, FallbackPolicy, LabelSource, Provenance,
    StayLabel, UserFailure, read_annotations, write_annotations,
};

/// Prompt set used for a run: full workflow, no feature engineering, no
/// home/work identification, or zero-shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptVariant {
    #[serde(rename = "A2I")]
    A2i,
    #[serde(rename = "NFE")]
    Nfe,
    #[serde(rename = "NHWI")]
    Nhwi,
    #[serde(rename = "ZS")]
    Zs,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 4] = [
        PromptVariant::A2i,
        PromptVariant::Nfe,
        PromptVariant::Nhwi,
        PromptVariant::Zs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::A2i => "A2I",
            PromptVariant::Nfe => "NFE",
            PromptVariant::Nhwi => "NHWI",
            PromptVariant::Zs => "ZS",
        }
    }

    pub fn uses_insights(self) -> bool {
        self == PromptVariant::A2i
    }

    pub fn uses_hwi(self) -> bool {
        matches!(self, PromptVariant::A2i | PromptVariant::Nfe)
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A2I" => Ok(PromptVariant::A2i),
            "NFE" => Ok(PromptVariant::Nfe),
            "NHWI" => Ok(PromptVariant::Nhwi),
            "ZS" => Ok(PromptVariant::Zs),
            _ => Err(invalid(format!("unknown prompt variant {s:?}"))),
        }
    }
}

/// Intents covered by an insight set, in rendering order.
pub const INSIGHT_INTENTS: [Intent; 3] = [Intent::AtHome, Intent::Working, Intent::RunningErrands];

/// Text features describing At Home, Working and Running errands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightSet {
    pub at_home: Vec<String>,
    pub working: Vec<String>,
    pub running_errands: Vec<String>,
    /// Fingerprint of the statistics the features were extracted from.
    pub source_fingerprint: String,
}

impl InsightSet {
    pub fn new(
        at_home: Vec<String>,
        working: Vec<String>,
        running_errands: Vec<String>,
        source_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let set = InsightSet {
            at_home,
            working,
            running_errands,
            source_fingerprint: source_fingerprint.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for intent in INSIGHT_INTENTS {
            if self.features(intent).is_empty() {
                return Err(invalid(format!("insight set has no features for {intent}")));
            }
        }
        Ok(())
    }

    pub fn features(&self, intent: Intent) -> &[String] {
        match intent {
            Intent::AtHome => &self.at_home,
            Intent::Working => &self.working,
            Intent::RunningErrands => &self.running_errands,
            _ => &[],
        }
    }

    fn entry(&self, intent: Intent) -> Value {
        json!({"intent": intent.prompt_name(), "features": self.features(intent)})
    }

    /// `{"features": [{"intent": ..., "features": [...]}, ...]}` with
    /// four-space indentation.
    pub fn to_pretty_json(&self) -> String {
        use serde::Serialize as _;
        let value = json!({"features": INSIGHT_INTENTS.iter().map(|i| self.entry(*i)).collect::<Vec<_>>()});
        let mut buf = Vec::new();
        let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
        value.serialize(&mut ser).expect("serializing a JSON value cannot fail");
        String::from_utf8(buf).expect("serde_json writes UTF-8")
    }

    /// Python literal of the At Home and Working features only.
    pub fn home_work_py_repr(&self) -> String {
        let entries: Vec<String> = [Intent::AtHome, Intent::Working]
            .iter()
            .map(|i| {
                let feats: Vec<String> = self.features(*i).iter().map(|f| py_str(f)).collect();
                format!(
                    "{{'intent': {}, 'features': [{}]}}",
                    py_str(i.prompt_name()),
                    feats.join(", ")
                )
            })
            .collect();
        format!("{{'features': [{}]}}", entries.join(", "))
    }
}
