//! The six-intent taxonomy.
//!
//! Ordinals follow the alphabetical order of the two-letter abbreviations
//! (AH, EO, LE, RE, SP, WK). Embedding tables and confusion matrices index
//! by this ordinal, so it must never change.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of intents in the taxonomy.
pub const NUM_INTENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intent {
    AtHome,
    EatingOut,
    LeisureAndEntertainment,
    RunningErrands,
    Shopping,
    Working,
}

impl Intent {
    /// All intents in ordinal order.
    pub const ALL: [Intent; NUM_INTENTS] = [
        Intent::AtHome,
        Intent::EatingOut,
        Intent::LeisureAndEntertainment,
        Intent::RunningErrands,
        Intent::Shopping,
        Intent::Working,
    ];

    /// The order in which prompts enumerate the intents.
    pub const PROMPT_ORDER: [Intent; NUM_INTENTS] = [
        Intent::AtHome,
        Intent::Working,
        Intent::RunningErrands,
        Intent::EatingOut,
        Intent::LeisureAndEntertainment,
        Intent::Shopping,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Intent> {
        Self::ALL.get(index).copied()
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            Intent::AtHome => "AH",
            Intent::EatingOut => "EO",
            Intent::LeisureAndEntertainment => "LE",
            Intent::RunningErrands => "RE",
            Intent::Shopping => "SP",
            Intent::Working => "WK",
        }
    }

    /// Canonical display name.
    pub fn name(self) -> &'static str {
        match self {
            Intent::AtHome => "At Home",
            Intent::EatingOut => "Eating Out",
            Intent::LeisureAndEntertainment => "Leisure and Entertainment",
            Intent::RunningErrands => "Running Errands",
            Intent::Shopping => "Shopping",
            Intent::Working => "Working",
        }
    }

    /// Spelling used inside prompt templates and LLM answers.
    pub fn prompt_name(self) -> &'static str {
        match self {
            Intent::RunningErrands => "Running errands",
            Intent::LeisureAndEntertainment => "Leisure and entertainment",
            other => other.name(),
        }
    }

    /// Lenient lookup used for LLM output: case-insensitive, whitespace
    /// collapsed, common spelling variants accepted.
    pub fn from_label(label: &str) -> Option<Intent> {
        let normalized: String = label
            .trim()
            .trim_matches(|c| c == '"' || c == '\'' || c == '`')
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase()
            .replace('&', "and");
        let intent = match normalized.as_str() {
            "at home" | "home" | "ah" => Intent::AtHome,
            "working" | "work" | "at work" | "wk" => Intent::Working,
            "running errands" | "running errand" | "errands" | "errand" | "re" => {
                Intent::RunningErrands
            }
            "eating out" | "eating" | "dining" | "eo" => Intent::EatingOut,
            "leisure and entertainment" | "leisure" | "entertainment" | "le" => {
                Intent::LeisureAndEntertainment
            }
            "shopping" | "shop" | "sp" => Intent::Shopping,
            _ => return None,
        };
        Some(intent)
    }

    /// `['At Home', 'Working', ...]` exactly as the prompt templates list them.
    pub fn prompt_choice_list() -> String {
        let names: Vec<String> = Self::PROMPT_ORDER
            .iter()
            .map(|i| format!("'{}'", i.prompt_name()))
            .collect();
        format!("[{}]", names.join(", "))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown intent label {0:?}")]
pub struct UnknownIntent(pub String);

impl FromStr for Intent {
    type Err = UnknownIntent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Intent::from_label(s).ok_or_else(|| UnknownIntent(s.to_string()))
    }
}

impl Serialize for Intent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Intent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
