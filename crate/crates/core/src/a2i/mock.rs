//! Offline chat backend built on the heuristic annotator.
//!
//! It recognises every prompt template, answers in the requested JSON shape
//! and, without a noise profile, reproduces the heuristic labels exactly.
//! The noise profile degrades answers in proportion to the context a
//! prompt withholds.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::annotator::{AnchorPlaces, HeuristicAnnotator, PoiRef, RuleClass};
use crate::data::{compute_poi_stats, parse_timestamp, StayRecord, UserTimeline};
use crate::intent::{Intent, NUM_INTENTS};
use crate::literal::parse_literal;

use super::backend::{BackendError, BackendIdentity, ChatBackend};

/// Error rates of the noisy mock. Rates add up per stay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    /// Chance of relabeling any stay.
    pub flip_rate: f64,
    /// Extra relabel chance when the intent prompt carries no anchors.
    pub no_anchor_error: f64,
    /// Extra relabel chance for the zero-shot prompt.
    pub zero_shot_error: f64,
    /// Chance that identification without insights names a wrong workplace.
    pub no_insight_anchor_error: f64,
    pub seed: u64,
}

impl NoiseProfile {
    pub fn standard(seed: u64) -> Self {
        NoiseProfile {
            flip_rate: 0.08,
            no_anchor_error: 0.08,
            zero_shot_error: 0.03,
            no_insight_anchor_error: 0.1,
            seed,
        }
    }
}

pub struct MockBackend {
    annotator: HeuristicAnnotator,
    anchor_book: HashMap<String, AnchorPlaces>,
    catalog: HashMap<String, String>,
    noise: Option<NoiseProfile>,
    tuple_re: Regex,
    task2_re: Regex,
}

const FEATURE_PREFIX: &str = "Your task is to extract the features of intent";
const HWI_PREFIX: &str = "Your objective is to identify the potential 'home,' and 'work' places";
const TASK1_PREFIX: &str = "Your task is to identify the user's home and work place";
const INTENT_PREFIX: &str = "Your task is to give intent prediction using trajectory data.";
const TASK2_MARKER: &str = "Stay in trajectory data corresponds one by one to intent.";
const TRAJECTORY_MARKER: &str = "The trajectory data under analysis is as follows: ";

impl MockBackend {
    pub fn new(annotator: HeuristicAnnotator) -> Self {
        let ts = r"\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}";
        MockBackend {
            annotator,
            anchor_book: HashMap::new(),
            catalog: HashMap::new(),
            noise: None,
            tuple_re: Regex::new(&format!(r"\(([^()]*?), ({ts})(?:, ({ts}))?\)")).expect("valid regex"),
            task2_re: Regex::new(&format!(r"\(([^()]*?), ([^(),]*), ({ts})\)")).expect("valid regex"),
        }
    }

    /// Registers every POI and the heuristic anchors of every user, keyed by
    /// the rendered POI statistics of the timeline.
    pub fn from_timelines(annotator: HeuristicAnnotator, timelines: &BTreeMap<String, UserTimeline>) -> Self {
        let mut mock = MockBackend::new(annotator);
        for timeline in timelines.values() {
            mock.register_timeline(timeline);
        }
        mock
    }

    pub fn register_timeline(&mut self, timeline: &UserTimeline) {
        for s in timeline.stays() {
            self.catalog
                .entry(s.poi_name.clone())
                .or_insert_with(|| s.category.clone());
        }
        if let (Ok(stats), Ok(anchors)) = (
            compute_poi_stats(timeline),
            self.annotator.identify_anchors(timeline),
        ) {
            self.anchor_book.insert(stats.to_py_repr(), anchors);
        }
    }

    pub fn with_noise(mut self, noise: NoiseProfile) -> Self {
        self.noise = Some(noise);
        self
    }

    fn rng_for(&self, prompt: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.noise.map_or(0, |n| n.seed).to_le_bytes());
        h.update(prompt.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn class_of_name(&self, name: &str) -> RuleClass {
        self.catalog
            .get(name)
            .map_or(RuleClass::Other, |c| self.annotator.categories.class_of(c))
    }

    fn answer_features(&self, prompt: &str) -> String {
        let marker = "intent distribution:{";
        let Some(pos) = prompt.find(marker) else {
            return "I could not find the statistics.".into();
        };
        let Ok((stats, _)) = parse_literal(&prompt[pos + marker.len()..]) else {
            return "The statistics are unreadable.".into();
        };
        let entries: Vec<Value> = super::INSIGHT_INTENTS
            .iter()
            .map(|intent| {
                let name = intent.prompt_name();
                let pct = stats[name]["percentage_distribution"].as_f64().unwrap_or(0.0);
                let visits = stats[name]["average_visit"].as_f64().unwrap_or(0.0);
                let hours: Vec<(usize, f64)> = (0..24)
                    .map(|h| {
                        let v = stats["Time Distribution of Intents"][name][h.to_string()]
                            .as_f64()
                            .unwrap_or(0.0);
                        (h, v)
                    })
                    .collect();
                let mut ranked = hours.clone();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let top: Vec<String> = ranked.iter().take(3).map(|(h, _)| h.to_string()).collect();
                let low: Vec<String> = ranked.iter().rev().take(3).map(|(h, _)| h.to_string()).collect();
                let mean = |range: &[usize]| {
                    range.iter().map(|&h| hours[h].1).sum::<f64>() / range.len() as f64
                };
                let night: Vec<usize> = (21..24).chain(0..7).collect();
                let office: Vec<usize> = (9..17).collect();
                json!({
                    "intent": name,
                    "features": [
                        format!("Percentage distribution: {pct:.2}%"),
                        format!("Average visit: {visits:.2} times"),
                        format!("Peak start hours: {}", top.join(", ")),
                        format!("Lowest start hours: {}", low.join(", ")),
                        format!("Mean share during night hours (21-6): {:.1}%", mean(&night)),
                        format!("Mean share during office hours (9-16): {:.1}%", mean(&office)),
                    ]
                })
            })
            .collect();
        json!({ "features": entries }).to_string()
    }

    /// The POI statistics literal embedded after the trajectory marker,
    /// without the template's wrapping braces.
    fn poi_block(prompt: &str) -> Option<&str> {
        let start = prompt.find(TRAJECTORY_MARKER)? + TRAJECTORY_MARKER.len();
        let line = prompt[start..].lines().next()?;
        let line = line.strip_prefix('{').and_then(|l| l.strip_suffix('}')).unwrap_or(line);
        Some(line)
    }

    fn anchors_from_block(&self, block: &str) -> AnchorPlaces {
        if let Some(anchors) = self.anchor_book.get(block) {
            return anchors.clone();
        }
        let names = Self::poi_names(block);
        let pick = |class: RuleClass, skip: Option<&str>| {
            names
                .iter()
                .find(|n| self.class_of_name(n) == class && Some(n.as_str()) != skip)
                .map(|n| PoiRef {
                    poi_id: n.clone(),
                    poi_name: n.clone(),
                })
        };
        let home = pick(RuleClass::Residence, None);
        let work = pick(RuleClass::Workplace, home.as_ref().map(|h| h.poi_name.as_str()));
        AnchorPlaces {
            home,
            work,
            rationale: "most visited residence and workplace".into(),
        }
    }

    fn poi_names(block: &str) -> Vec<String> {
        match parse_literal(block) {
            Ok((Value::Array(items), _)) => items
                .iter()
                .filter_map(|e| e.get("Name").and_then(Value::as_str).map(str::to_string))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn answer_anchors(&self, prompt: &str, with_reason: bool) -> String {
        let Some(block) = Self::poi_block(prompt) else {
            return "There is no trajectory data to analyse.".into();
        };
        let mut anchors = self.anchors_from_block(block);
        let has_insights = prompt.contains("Here are the general and unique features")
            || prompt.starts_with(TASK1_PREFIX);
        if let Some(noise) = self.noise {
            if !has_insights && self.rng_for(prompt).random::<f64>() < noise.no_insight_anchor_error {
                let taken: Vec<String> = [&anchors.home, &anchors.work]
                    .iter()
                    .filter_map(|a| a.as_ref().map(|p| p.poi_name.clone()))
                    .collect();
                if let Some(wrong) = Self::poi_names(block).into_iter().find(|n| !taken.contains(n)) {
                    anchors.work = Some(PoiRef {
                        poi_id: wrong.clone(),
                        poi_name: wrong,
                    });
                }
            }
        }
        let name = |p: &Option<PoiRef>| p.as_ref().map_or("None".to_string(), |p| p.poi_name.clone());
        if with_reason {
            json!({"home": name(&anchors.home), "work": name(&anchors.work), "reason": anchors.rationale})
                .to_string()
        } else {
            json!({"home": name(&anchors.home), "work": name(&anchors.work)}).to_string()
        }
    }

    fn anchor_named(prompt: &str, pattern: &str) -> Option<PoiRef> {
        let re = Regex::new(pattern).expect("valid regex");
        re.captures(prompt).map(|c| PoiRef {
            poi_id: c[1].to_string(),
            poi_name: c[1].to_string(),
        })
    }

    fn stay_for(&self, name: &str, category: Option<&str>, start: &str, end: Option<&str>) -> Option<StayRecord> {
        Some(StayRecord {
            user_id: "mock".into(),
            poi_id: name.to_string(),
            poi_name: name.to_string(),
            category: category
                .map(str::to_string)
                .or_else(|| self.catalog.get(name).cloned())
                .unwrap_or_default(),
            arrival_time: parse_timestamp(start).ok()?,
            departure_time: end.and_then(|e| parse_timestamp(e).ok()),
        })
    }

    fn label_with_noise(&self, prompt: &str, stays: &[StayRecord], anchors: &AnchorPlaces, zero_shot: bool) -> Vec<Intent> {
        let anchored = anchors.home.is_some() || anchors.work.is_some();
        let mut labels: Vec<Intent> = stays
            .iter()
            .map(|s| {
                if anchored {
                    return self.annotator.annotate_stay(s, anchors);
                }
                match self.annotator.class_of(s) {
                    RuleClass::Residence => Intent::AtHome,
                    RuleClass::Workplace => Intent::Working,
                    _ => self.annotator.annotate_stay(s, anchors),
                }
            })
            .collect();
        if let Some(noise) = self.noise {
            let mut rate = noise.flip_rate;
            if !anchored {
                rate += noise.no_anchor_error;
            }
            if zero_shot {
                rate += noise.zero_shot_error;
            }
            let mut rng = self.rng_for(prompt);
            for label in labels.iter_mut() {
                if rng.random::<f64>() < rate {
                    let shift = rng.random_range(1..NUM_INTENTS);
                    *label = Intent::from_index((label.index() + shift) % NUM_INTENTS).expect("in range");
                }
            }
        }
        labels
    }

    fn answer_intents(&self, prompt: &str) -> String {
        let Some(start) = prompt.find(TRAJECTORY_MARKER) else {
            return "There is no trajectory data to analyse.".into();
        };
        let line = prompt[start..].lines().next().unwrap_or_default();
        let stays: Option<Vec<StayRecord>> = self
            .tuple_re
            .captures_iter(line)
            .map(|c| self.stay_for(&c[1], None, &c[2], c.get(3).map(|m| m.as_str())))
            .collect();
        let Some(stays) = stays.filter(|s| !s.is_empty()) else {
            return "I could not read the stays.".into();
        };
        let anchors = AnchorPlaces {
            home: Self::anchor_named(prompt, r"- At Home: When the user is at \{(.*?)\}, it is mostly"),
            work: Self::anchor_named(prompt, r"- Working: When the user is at \{(.*?)\}, it is mostly"),
            rationale: String::new(),
        };
        let zero_shot = !prompt.contains("Let's think step by step");
        let labels = self.label_with_noise(prompt, &stays, &anchors, zero_shot);
        let names: Vec<&str> = labels.iter().map(|i| i.prompt_name()).collect();
        json!({ "predicted_intent": names }).to_string()
    }

    fn answer_task2(&self, prompt: &str) -> String {
        let Some(start) = prompt.find(TRAJECTORY_MARKER) else {
            return "There is no trajectory data to analyse.".into();
        };
        let line = prompt[start..].lines().next().unwrap_or_default();
        let stays: Option<Vec<StayRecord>> = self
            .task2_re
            .captures_iter(line)
            .map(|c| self.stay_for(&c[1], Some(&c[2]), &c[3], None))
            .collect();
        let Some(stays) = stays.filter(|s| !s.is_empty()) else {
            return "I could not read the stays.".into();
        };
        let anchors = AnchorPlaces {
            home: Self::anchor_named(prompt, r"- At Home: When the user is at (.*?), it is always"),
            work: Self::anchor_named(prompt, r"- Working: When the user is at (.*?), it is always"),
            rationale: String::new(),
        };
        let labels = self.label_with_noise(prompt, &stays, &anchors, false);
        let quoted: Vec<String> = labels.iter().map(|i| format!("'{}'", i.prompt_name())).collect();
        format!("[{}]", quoted.join(","))
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> Result<String, BackendError> {
        let text = if prompt.starts_with(FEATURE_PREFIX) {
            self.answer_features(prompt)
        } else if prompt.starts_with(HWI_PREFIX) {
            self.answer_anchors(prompt, true)
        } else if prompt.starts_with(TASK1_PREFIX) {
            self.answer_anchors(prompt, false)
        } else if prompt.starts_with(INTENT_PREFIX) && prompt.contains(TASK2_MARKER) {
            self.answer_task2(prompt)
        } else if prompt.starts_with(INTENT_PREFIX) {
            self.answer_intents(prompt)
        } else {
            "I can only help with trajectory annotation.".into()
        };
        Ok(text)
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            backend: "mock".into(),
            model: if self.noise.is_some() { "heuristic-noisy" } else { "heuristic" }.into(),
        }
    }
}
