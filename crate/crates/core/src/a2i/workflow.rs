//! Stage orchestration: insights once per run, identification once per
//! user, intents once per calendar day.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::annotator::{AnchorPlaces, HeuristicAnnotator, PoiRef};
use crate::data::{compute_poi_stats, IntentStats, PoiVisitStats, UserTimeline};
use crate::error::{invalid, Error, Result};
use crate::intent::Intent;

use super::backend::{BackendIdentity, ChatBackend};
use super::parse::{parse_anchor_response, parse_insight_response, parse_intent_response};
use super::prompts::{render_feature_prompt, render_hwi_prompt, render_intent_prompt};
use super::{InsightSet, PromptVariant};

/// What to do with a stay once every attempt at its day has failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    Heuristic,
    MarkFailed,
}

#[derive(Debug, Clone)]
pub struct A2iConfig {
    /// Extra attempts after the first one.
    pub retries: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub parallelism: usize,
    pub fallback: FallbackPolicy,
    pub annotator: HeuristicAnnotator,
}

impl Default for A2iConfig {
    fn default() -> Self {
        A2iConfig {
            retries: 3,
            temperature: 0.0,
            max_tokens: 1024,
            parallelism: 1,
            fallback: FallbackPolicy::Heuristic,
            annotator: HeuristicAnnotator::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Backend,
    Fallback,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StayLabel {
    pub stay_index: usize,
    /// `None` only when the source is [`LabelSource::Failed`].
    pub intent: Option<Intent>,
    pub source: LabelSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: BackendIdentity,
    pub variant: PromptVariant,
    pub calls: usize,
    pub retries: usize,
    pub failed_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub user_id: String,
    pub anchors: AnchorPlaces,
    pub labels: Vec<StayLabel>,
    pub provenance: Provenance,
    pub errors: Vec<String>,
}

impl AnnotationResult {
    pub fn intents(&self) -> Vec<Option<Intent>> {
        self.labels.iter().map(|l| l.intent).collect()
    }

    pub fn count(&self, source: LabelSource) -> usize {
        self.labels.iter().filter(|l| l.source == source).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFailure {
    pub user_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2iRun {
    pub variant: PromptVariant,
    pub insights: Option<InsightSet>,
    pub insight_error: Option<String>,
    pub results: BTreeMap<String, AnnotationResult>,
    pub failures: Vec<UserFailure>,
}

impl A2iRun {
    pub fn total_stays(&self) -> usize {
        self.results.values().map(|r| r.labels.len()).sum()
    }

    pub fn total_retries(&self) -> usize {
        self.results.values().map(|r| r.provenance.retries).sum()
    }
}

struct CallStats {
    calls: usize,
    retries: usize,
    failed: usize,
}

/// Calls the backend until `parse` accepts the answer, at most
/// `1 + retries` times. Returns the last error on exhaustion.
fn call_with_retries<T>(
    backend: &dyn ChatBackend,
    prompt: &str,
    config: &A2iConfig,
    stats: &mut CallStats,
    parse: impl Fn(&str) -> std::result::Result<T, Error>,
) -> std::result::Result<T, String> {
    stats.calls += 1;
    let mut last = String::new();
    for attempt in 0..=config.retries {
        if attempt > 0 {
            stats.retries += 1;
        }
        match backend.complete(prompt, config.temperature, config.max_tokens) {
            Ok(raw) => match parse(&raw) {
                Ok(value) => return Ok(value),
                Err(e) => last = e.to_string(),
            },
            Err(e) => last = e.to_string(),
        }
        log::debug!("attempt {} failed: {last}", attempt + 1);
    }
    stats.failed += 1;
    Err(last)
}

fn resolve(stats: &PoiVisitStats, name: Option<&str>) -> Option<PoiRef> {
    let name = name?;
    match stats.by_name(name) {
        Some(p) => Some(PoiRef {
            poi_id: p.poi_id.clone(),
            poi_name: p.name.clone(),
        }),
        None => {
            log::warn!("anchor {name:?} is not among the user's POIs");
            None
        }
    }
}

fn annotate_user(
    timeline: &UserTimeline,
    insights: Option<&InsightSet>,
    backend: &dyn ChatBackend,
    variant: PromptVariant,
    config: &A2iConfig,
) -> (AnnotationResult, Vec<UserFailure>) {
    let mut stats = CallStats {
        calls: 0,
        retries: 0,
        failed: 0,
    };
    let mut errors = Vec::new();
    let mut failures = Vec::new();
    let user = timeline.user_id.clone();
    let mut fail = |stage: &str, message: String, errors: &mut Vec<String>| {
        errors.push(format!("{stage}: {message}"));
        failures.push(UserFailure {
            user_id: user.clone(),
            stage: stage.to_string(),
            message,
        });
    };

    let anchors = if variant.uses_hwi() && !timeline.is_empty() {
        let poi_stats = compute_poi_stats(timeline).expect("non-empty timeline");
        let prompt = render_hwi_prompt(&poi_stats, insights);
        match call_with_retries(backend, &prompt, config, &mut stats, |raw| {
            parse_anchor_response(raw).map_err(Error::from)
        }) {
            Ok(answer) => AnchorPlaces {
                home: resolve(&poi_stats, answer.home.as_deref()),
                work: resolve(&poi_stats, answer.work.as_deref()),
                rationale: answer.reason,
            },
            Err(message) => {
                fail("hwi", message, &mut errors);
                match config.fallback {
                    FallbackPolicy::Heuristic => config
                        .annotator
                        .identify_anchors(timeline)
                        .unwrap_or_else(|_| AnchorPlaces::none()),
                    FallbackPolicy::MarkFailed => AnchorPlaces::none(),
                }
            }
        }
    } else {
        AnchorPlaces::none()
    };

    let mut labels = Vec::with_capacity(timeline.len());
    for (start, day) in timeline.day_segments() {
        let answer = match render_intent_prompt(day, &anchors, variant) {
            Ok(prompt) => call_with_retries(backend, &prompt, config, &mut stats, |raw| {
                parse_intent_response(raw, day.len()).map_err(Error::from)
            }),
            Err(e) => Err(e.to_string()),
        };
        match answer {
            Ok(intents) => labels.extend(intents.into_iter().enumerate().map(|(i, intent)| StayLabel {
                stay_index: start + i,
                intent: Some(intent),
                source: LabelSource::Backend,
            })),
            Err(message) => {
                let date = day[0].arrival_date();
                fail("intent", format!("{date}: {message}"), &mut errors);
                for (i, stay) in day.iter().enumerate() {
                    let (intent, source) = match config.fallback {
                        FallbackPolicy::Heuristic => (
                            Some(config.annotator.annotate_stay(stay, &anchors)),
                            LabelSource::Fallback,
                        ),
                        FallbackPolicy::MarkFailed => (None, LabelSource::Failed),
                    };
                    labels.push(StayLabel {
                        stay_index: start + i,
                        intent,
                        source,
                    });
                }
            }
        }
    }

    let result = AnnotationResult {
        user_id: timeline.user_id.clone(),
        anchors,
        labels,
        provenance: Provenance {
            backend: backend.identity(),
            variant,
            calls: stats.calls,
            retries: stats.retries,
            failed_calls: stats.failed,
        },
        errors,
    };
    (result, failures)
}

/// Runs the workflow over every user. `seed_stats` (intent statistics of a
/// small labeled set) is required for the A2I variant. A failed insight
/// stage downgrades identification to the no-insight template.
pub fn run_a2i(
    users: &BTreeMap<String, UserTimeline>,
    seed_stats: Option<&IntentStats>,
    backend: &dyn ChatBackend,
    variant: PromptVariant,
    config: &A2iConfig,
) -> Result<A2iRun> {
    if config.parallelism == 0 {
        return Err(invalid("parallelism must be at least 1"));
    }
    let mut insights = None;
    let mut insight_error = None;
    if variant.uses_insights() {
        let seed = seed_stats.ok_or_else(|| {
            invalid("the A2I variant needs labeled seed statistics for the insight stage")
        })?;
        let prompt = render_feature_prompt(seed);
        let fingerprint = seed.fingerprint();
        let mut stats = CallStats {
            calls: 0,
            retries: 0,
            failed: 0,
        };
        match call_with_retries(backend, &prompt, config, &mut stats, |raw| {
            parse_insight_response(raw, &fingerprint).map_err(Error::from)
        }) {
            Ok(set) => insights = Some(set),
            Err(message) => {
                log::warn!("insight stage failed, continuing without insights: {message}");
                insight_error = Some(message);
            }
        }
    }

    let timelines: Vec<&UserTimeline> = users.values().collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let workers = config.parallelism.min(timelines.len()).max(1);
    let mut results = BTreeMap::new();
    let mut failures = Vec::new();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, timelines, insights) = (&next, &timelines, insights.as_ref());
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(timeline) = timelines.get(i) else { break };
                let out = annotate_user(timeline, insights, backend, variant, config);
                if tx.send(out).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (result, user_failures) in rx {
            failures.extend(user_failures);
            results.insert(result.user_id.clone(), result);
        }
    });
    failures.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.stage.cmp(&b.stage)));
    Ok(A2iRun {
        variant,
        insights,
        insight_error,
        results,
        failures,
    })
}

pub fn write_annotations(path: &Path, results: &BTreeMap<String, AnnotationResult>) -> Result<usize> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in results.values() {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(results.len())
}

pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, AnnotationResult>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AnnotationResult = serde_json::from_str(&line)?;
        out.insert(r.user_id.clone(), r);
    }
    Ok(out)
}
