//! Instruction-tuning records (anchor identification and per-day intent
//! labeling) built from annotated timelines.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::a2i::prompts::{render_task1_prompt, render_task2_prompt};
use crate::a2i::InsightSet;
use crate::annotator::AnchorPlaces;
use crate::data::{PoiVisitStats, StayRecord, UserTimeline};
use crate::error::{invalid, Error, Result};
use crate::intent::Intent;
use crate::literal::{find_first_list, find_first_object};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Task1,
    Task2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub task: Task,
    pub prompt: String,
    pub answer: String,
    pub user_id: String,
    /// Identifier of the annotation run the labels came from.
    pub provenance: String,
}

/// The exported line: only what a trainer needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportedRecord {
    pub task: Task,
    pub prompt: String,
    pub answer: String,
}

impl From<&InstructionRecord> for ExportedRecord {
    fn from(r: &InstructionRecord) -> Self {
        ExportedRecord {
            task: r.task,
            prompt: r.prompt.clone(),
            answer: r.answer.clone(),
        }
    }
}

pub const DEFAULT_USER_COUNT: usize = 100;
pub const DEFAULT_FRACTION: f64 = 0.2;
const MIN_STAYS: usize = 5;

/// Picks `count` users with at least five stays and keeps the earliest
/// `ceil(fraction * m)` stays of each. The result is sorted by user id.
pub fn sample_finetune_users(
    dataset: &BTreeMap<String, UserTimeline>,
    count: usize,
    fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, UserTimeline>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let eligible: Vec<&UserTimeline> = dataset.values().filter(|t| t.len() >= MIN_STAYS).collect();
    if eligible.len() < count {
        return Err(invalid(format!(
            "need {count} users with at least {MIN_STAYS} stays, found {}",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, eligible.len(), count).into_vec();
    picked.sort_unstable();
    let mut out = BTreeMap::new();
    for i in picked {
        let t = eligible[i];
        let keep = ((fraction * t.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        let stays = t.stays()[..keep.min(t.len())].to_vec();
        out.insert(t.user_id.clone(), UserTimeline::new(t.user_id.clone(), stays)?);
    }
    Ok(out)
}

fn task1_answer(home: &str, work: &str) -> String {
    format!(
        "{{\"home\": {}, \"work\": {}}}",
        Value::String(home.into()),
        Value::String(work.into())
    )
}

/// `None` (with a warning) when either anchor is missing.
pub fn build_task1_record(
    stats: &PoiVisitStats,
    insights: &InsightSet,
    anchors: &AnchorPlaces,
    provenance: &str,
) -> Option<InstructionRecord> {
    let (Some(home), Some(work)) = (&anchors.home, &anchors.work) else {
        log::warn!("skipping task-1 record for {}: anchors incomplete", stats.user_id);
        return None;
    };
    Some(InstructionRecord {
        task: Task::Task1,
        prompt: render_task1_prompt(stats, insights),
        answer: task1_answer(&home.poi_name, &work.poi_name),
        user_id: stats.user_id.clone(),
        provenance: provenance.to_string(),
    })
}

/// `['Working','Working','At Home']`
pub fn task2_answer(labels: &[Intent]) -> String {
    let quoted: Vec<String> = labels.iter().map(|l| format!("'{}'", l.prompt_name())).collect();
    format!("[{}]", quoted.join(","))
}

pub fn build_task2_record(
    day: &[StayRecord],
    anchors: &AnchorPlaces,
    labels: &[Intent],
    provenance: &str,
) -> Result<InstructionRecord> {
    if day.is_empty() {
        return Err(invalid("task-2 record needs at least one stay"));
    }
    if day.len() != labels.len() {
        return Err(invalid(format!(
            "{} stays but {} labels",
            day.len(),
            labels.len()
        )));
    }
    let (Some(home), Some(work)) = (&anchors.home, &anchors.work) else {
        return Err(invalid("task-2 record needs both anchor places"));
    };
    Ok(InstructionRecord {
        task: Task::Task2,
        prompt: render_task2_prompt(day, &home.poi_name, &work.poi_name)?,
        answer: task2_answer(labels),
        user_id: day[0].user_id.clone(),
        provenance: provenance.to_string(),
    })
}

/// Anchors and labels of one user, labels aligned with the timeline.
pub struct UserAnnotation<'a> {
    pub anchors: &'a AnchorPlaces,
    pub labels: &'a [Intent],
}

/// One task-1 record per user and one task-2 record per calendar day.
/// Users with incomplete anchors are skipped with a warning.
pub fn build_finetune_records(
    sampled: &BTreeMap<String, UserTimeline>,
    annotations: &BTreeMap<String, UserAnnotation<'_>>,
    insights: &InsightSet,
    provenance: &str,
) -> Result<Vec<InstructionRecord>> {
    let mut records = Vec::new();
    for (user, timeline) in sampled {
        let Some(ann) = annotations.get(user) else {
            log::warn!("no annotation for sampled user {user}");
            continue;
        };
        if ann.labels.len() < timeline.len() {
            return Err(invalid(format!(
                "user {user}: {} labels for {} stays",
                ann.labels.len(),
                timeline.len()
            )));
        }
        let stats = crate::data::compute_poi_stats(timeline)?;
        let Some(task1) = build_task1_record(&stats, insights, ann.anchors, provenance) else {
            continue;
        };
        records.push(task1);
        for (start, day) in timeline.day_segments() {
            records.push(build_task2_record(
                day,
                ann.anchors,
                &ann.labels[start..start + day.len()],
                provenance,
            )?);
        }
    }
    Ok(records)
}

pub fn export_jsonl(records: &[InstructionRecord], path: &Path) -> Result<usize> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &ExportedRecord::from(r))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(records.len())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ExportedRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExportedRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// The `k` in "There are k stays" of a task-2 prompt.
pub fn stated_stay_count(prompt: &str) -> Option<usize> {
    let re = Regex::new(r"There are \{?(\d+)\}? stays").expect("valid regex");
    re.captures(prompt).and_then(|c| c[1].parse().ok())
}

pub fn parse_task1_answer(answer: &str) -> Result<(String, String)> {
    let obj = find_first_object(answer).ok_or_else(|| Error::Schema("task-1 answer is not an object".into()))?;
    match (obj.get("home").and_then(Value::as_str), obj.get("work").and_then(Value::as_str)) {
        (Some(h), Some(w)) => Ok((h.to_string(), w.to_string())),
        _ => Err(Error::Schema("task-1 answer needs string keys home and work".into())),
    }
}

pub fn parse_task2_answer(answer: &str) -> Result<Vec<Intent>> {
    let Some(Value::Array(items)) = find_first_list(answer) else {
        return Err(Error::Schema("task-2 answer is not a list".into()));
    };
    items
        .iter()
        .map(|v| {
            v.as_str()
                .and_then(Intent::from_label)
                .ok_or_else(|| Error::Schema(format!("unknown intent {v} in task-2 answer")))
        })
        .collect()
}

/// Checks answer shape and, for task 2, that the answer length equals the
/// stay count stated in the prompt.
pub fn validate_record(record: &ExportedRecord) -> Result<()> {
    match record.task {
        Task::Task1 => parse_task1_answer(&record.answer).map(|_| ()),
        Task::Task2 => {
            let labels = parse_task2_answer(&record.answer)?;
            let stated = stated_stay_count(&record.prompt)
                .ok_or_else(|| Error::Schema("task-2 prompt states no stay count".into()))?;
            if labels.len() != stated {
                return Err(Error::Schema(format!(
                    "task-2 answer has {} intents, prompt states {stated}",
                    labels.len()
                )));
            }
            Ok(())
        }
    }
}
