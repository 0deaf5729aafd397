//! Stay records, per-user timelines, sliding windows, chronological splits
//! and the statistics that feed the annotation prompts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{invalid, Error, Result};
use crate::intent::{Intent, NUM_INTENTS};
use crate::literal::{py_float, py_str, round_to};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// One user stay at a POI. Times are naive local times in the dataset's
/// fixed timezone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StayRecord {
    pub user_id: String,
    pub poi_id: String,
    pub poi_name: String,
    pub category: String,
    #[serde(with = "timestamp")]
    pub arrival_time: NaiveDateTime,
    #[serde(default, with = "opt_timestamp", skip_serializing_if = "Option::is_none")]
    pub departure_time: Option<NaiveDateTime>,
}

impl StayRecord {
    pub fn validate(&self) -> Result<()> {
        if self.user_id.is_empty() {
            return Err(invalid("user_id is empty"));
        }
        if self.poi_id.is_empty() {
            return Err(invalid("poi_id is empty"));
        }
        if let Some(departure) = self.departure_time {
            if departure < self.arrival_time {
                return Err(invalid(format!(
                    "departure_time {departure} precedes arrival_time {}",
                    self.arrival_time
                )));
            }
        }
        Ok(())
    }

    pub fn arrival_hour(&self) -> usize {
        self.arrival_time.hour() as usize
    }

    pub fn arrival_date(&self) -> NaiveDate {
        self.arrival_time.date()
    }

    /// Seconds since the (naive) epoch; multiples of 86400 fall on local
    /// midnight.
    pub fn arrival_seconds(&self) -> f64 {
        self.arrival_time.and_utc().timestamp() as f64
    }
}

/// Parses the timestamp spellings found in trajectory exports: ISO-8601 with
/// `T` or a space, optional fractional seconds, optional UTC offset (the
/// local wall-clock time is kept).
pub fn parse_timestamp(text: &str) -> Result<NaiveDateTime> {
    let text = text.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(text) {
        return Ok(dt.naive_local());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok(dt);
        }
    }
    Err(invalid(format!("unparseable timestamp {text:?}")))
}

mod timestamp {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(super::TIMESTAMP_FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s).map_err(serde::de::Error::custom)
    }
}

mod opt_timestamp {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<NaiveDateTime>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => super::timestamp::serialize(t, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDateTime>, D::Error> {
        match Option::<String>::deserialize(d)? {
            Some(s) if !s.trim().is_empty() => super::parse_timestamp(&s)
                .map(Some)
                .map_err(serde::de::Error::custom),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl RecordFormat {
    pub fn from_path(path: &std::path::Path) -> RecordFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => RecordFormat::Jsonl,
            _ => RecordFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<StayRecord>,
    pub row_errors: Vec<RowError>,
}

const REQUIRED_COLUMNS: [&str; 5] = ["user_id", "poi_id", "poi_name", "category", "arrival_time"];

fn build_record(get: impl Fn(&str) -> Option<String>) -> Result<StayRecord> {
    let field = |name: &str| get(name).unwrap_or_default();
    let arrival_time = parse_timestamp(&field("arrival_time"))?;
    let departure_time = match get("departure_time") {
        Some(s) if !s.trim().is_empty() => Some(parse_timestamp(&s)?),
        _ => None,
    };
    let record = StayRecord {
        user_id: field("user_id").trim().to_string(),
        poi_id: field("poi_id").trim().to_string(),
        poi_name: field("poi_name"),
        category: field("category").trim().to_string(),
        arrival_time,
        departure_time,
    };
    record.validate()?;
    Ok(record)
}

/// Reads stay records in file order. Malformed rows are collected with
/// their line numbers; the call only fails on a schema problem or when every
/// row is malformed.
pub fn parse_stay_records(source: impl Read, format: RecordFormat) -> Result<ParsedRecords> {
    let mut out = ParsedRecords::default();
    match format {
        RecordFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(source);
            let headers = match reader.headers() {
                Ok(h) => h.clone(),
                Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
                Err(_) => return Ok(out),
            };
            if headers.is_empty() {
                return Ok(out);
            }
            let index: HashMap<String, usize> = headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_string(), i))
                .collect();
            let missing: Vec<_> = REQUIRED_COLUMNS
                .iter()
                .filter(|c| !index.contains_key(**c))
                .collect();
            if !missing.is_empty() {
                return Err(Error::Schema(format!("missing columns {missing:?}")));
            }
            for row in reader.records() {
                let row = match row {
                    Ok(r) => r,
                    Err(e) => {
                        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                        out.row_errors.push(RowError {
                            line,
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let get = |name: &str| index.get(name).and_then(|&i| row.get(i)).map(str::to_string);
                match build_record(get) {
                    Ok(r) => out.records.push(r),
                    Err(e) => out.row_errors.push(RowError {
                        line,
                        message: e.to_string(),
                    }),
                }
            }
        }
        RecordFormat::Jsonl => {
            for (i, line) in BufReader::new(source).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(|e| Error::io("<stream>", e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: std::result::Result<Map<String, Value>, _> = serde_json::from_str(&line);
                let result = match parsed {
                    Ok(obj) => {
                        let missing: Vec<_> = REQUIRED_COLUMNS
                            .iter()
                            .filter(|c| !obj.contains_key(**c))
                            .collect();
                        if missing.is_empty() {
                            build_record(|name| {
                                obj.get(name).and_then(|v| match v {
                                    Value::String(s) => Some(s.clone()),
                                    Value::Null => None,
                                    other => Some(other.to_string()),
                                })
                            })
                        } else {
                            Err(Error::Schema(format!("missing fields {missing:?}")))
                        }
                    }
                    Err(e) => Err(e.into()),
                };
                match result {
                    Ok(r) => out.records.push(r),
                    Err(e) => out.row_errors.push(RowError {
                        line: line_no,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    if out.records.is_empty() && !out.row_errors.is_empty() {
        let first = &out.row_errors[0];
        return Err(Error::AllRowsFailed {
            rows: out.row_errors.len(),
            first_line: first.line,
            first_message: first.message.clone(),
        });
    }
    Ok(out)
}

pub fn write_stay_records<'a>(
    records: impl IntoIterator<Item = &'a StayRecord>,
    sink: impl Write,
    format: RecordFormat,
) -> Result<()> {
    match format {
        RecordFormat::Csv => {
            let mut writer = csv::Writer::from_writer(sink);
            writer.write_record([
                "user_id",
                "poi_id",
                "poi_name",
                "category",
                "arrival_time",
                "departure_time",
            ])?;
            for r in records {
                let arrival = r.arrival_time.format(TIMESTAMP_FORMAT).to_string();
                let departure = r
                    .departure_time
                    .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
                    .unwrap_or_default();
                writer.write_record([
                    r.user_id.as_str(),
                    &r.poi_id,
                    &r.poi_name,
                    &r.category,
                    &arrival,
                    &departure,
                ])?;
            }
            writer.flush().map_err(|e| Error::io("<sink>", e))?;
        }
        RecordFormat::Jsonl => {
            let mut sink = std::io::BufWriter::new(sink);
            for r in records {
                serde_json::to_writer(&mut sink, r)?;
                sink.write_all(b"\n").map_err(|e| Error::io("<sink>", e))?;
            }
            sink.flush().map_err(|e| Error::io("<sink>", e))?;
        }
    }
    Ok(())
}

/// One user's stays in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTimeline {
    pub user_id: String,
    stays: Vec<StayRecord>,
}

impl UserTimeline {
    /// Builds a timeline, sorting stably by arrival time.
    pub fn new(user_id: impl Into<String>, mut stays: Vec<StayRecord>) -> Result<Self> {
        let user_id = user_id.into();
        if let Some(bad) = stays.iter().find(|s| s.user_id != user_id) {
            return Err(invalid(format!(
                "stay of user {:?} in timeline of {user_id:?}",
                bad.user_id
            )));
        }
        stays.sort_by_key(|s| s.arrival_time);
        Ok(UserTimeline { user_id, stays })
    }

    pub fn stays(&self) -> &[StayRecord] {
        &self.stays
    }

    pub fn len(&self) -> usize {
        self.stays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stays.is_empty()
    }

    /// Consecutive runs of stays sharing a calendar date (local midnight
    /// boundary), paired with the index of their first stay.
    pub fn day_segments(&self) -> Vec<(usize, &[StayRecord])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.stays.len() {
            if i == self.stays.len() || self.stays[i].arrival_date() != self.stays[start].arrival_date()
            {
                if i > start {
                    out.push((start, &self.stays[start..i]));
                }
                start = i;
            }
        }
        out
    }
}

/// Groups records per user. Sorting is stable, so equal timestamps keep
/// their input order.
pub fn build_timelines(records: impl IntoIterator<Item = StayRecord>) -> BTreeMap<String, UserTimeline> {
    let mut grouped: BTreeMap<String, Vec<StayRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.user_id.clone()).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(user, stays)| {
            let timeline = UserTimeline::new(user.clone(), stays).expect("grouped by user");
            (user, timeline)
        })
        .collect()
}

/// A fixed-length run of consecutive stays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryWindow<'a> {
    pub user_id: &'a str,
    pub stays: &'a [StayRecord],
    pub window_index: usize,
}

/// All `m - n + 1` windows of length `n`; window `k` covers stays `[k, k+n)`.
pub fn sliding_windows(timeline: &UserTimeline, n: usize) -> Result<Vec<TrajectoryWindow<'_>>> {
    if n < 2 {
        return Err(invalid(format!("window length must be at least 2, got {n}")));
    }
    Ok(timeline
        .stays()
        .windows(n)
        .enumerate()
        .map(|(k, stays)| TrajectoryWindow {
            user_id: &timeline.user_id,
            stays,
            window_index: k,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(invalid(format!("split ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    /// (train, val, test) sizes for `m` stays.
    pub fn sizes(&self, m: usize) -> (usize, usize, usize) {
        // The epsilon absorbs products such as 0.7 * 10 landing just below 7.
        let floor = |r: f64| ((m as f64) * r + 1e-9).floor() as usize;
        let train = floor(self.train).min(m);
        let val = floor(self.val).min(m - train);
        (train, val, m - train - val)
    }
}

#[derive(Debug, Clone)]
pub struct TimelineSplit {
    pub train: UserTimeline,
    pub val: UserTimeline,
    pub test: UserTimeline,
}

pub fn chronological_split(timeline: &UserTimeline, ratios: SplitRatios) -> Result<TimelineSplit> {
    ratios.validate()?;
    let (train, val, _) = ratios.sizes(timeline.len());
    let stays = timeline.stays();
    let part = |range: std::ops::Range<usize>| UserTimeline {
        user_id: timeline.user_id.clone(),
        stays: stays[range].to_vec(),
    };
    Ok(TimelineSplit {
        train: part(0..train),
        val: part(train..train + val),
        test: part(train + val..stays.len()),
    })
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: BTreeMap<String, UserTimeline>,
    pub val: BTreeMap<String, UserTimeline>,
    pub test: BTreeMap<String, UserTimeline>,
}

pub fn split_dataset(
    timelines: &BTreeMap<String, UserTimeline>,
    ratios: SplitRatios,
) -> Result<DatasetSplit> {
    let mut out = DatasetSplit::default();
    for (user, timeline) in timelines {
        let s = chronological_split(timeline, ratios)?;
        out.train.insert(user.clone(), s.train);
        out.val.insert(user.clone(), s.val);
        out.test.insert(user.clone(), s.test);
    }
    Ok(out)
}

/// Windows of every timeline in a split. Users too short for a single
/// window are dropped with a warning.
pub fn split_windows<'a>(
    split_name: &str,
    timelines: &'a BTreeMap<String, UserTimeline>,
    n: usize,
) -> Result<Vec<TrajectoryWindow<'a>>> {
    let mut out = Vec::new();
    for timeline in timelines.values() {
        if timeline.len() < n {
            log::warn!(
                "dropping user {} from {split_name} split: {} stays < window length {n}",
                timeline.user_id,
                timeline.len()
            );
            continue;
        }
        out.extend(sliding_windows(timeline, n)?);
    }
    Ok(out)
}

/// Dataset-level intent statistics: share of stays per intent, mean visits
/// per (user, POI) carrying the intent, and per-hour intent shares.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentStats {
    /// Percent of all labeled stays, indexed by intent ordinal.
    pub percentage_distribution: [f64; NUM_INTENTS],
    pub average_visit: [f64; NUM_INTENTS],
    /// `time_distribution[intent][hour]`: percent of the stays starting in
    /// `hour` that carry `intent`.
    pub time_distribution: [[f64; 24]; NUM_INTENTS],
}

pub fn compute_intent_stats<'a>(
    labeled: impl IntoIterator<Item = (&'a StayRecord, Intent)>,
) -> Result<IntentStats> {
    let mut total = 0usize;
    let mut per_intent = [0usize; NUM_INTENTS];
    let mut pois: [HashSet<(&str, &str)>; NUM_INTENTS] = Default::default();
    let mut per_hour = [0usize; 24];
    let mut per_intent_hour = [[0usize; 24]; NUM_INTENTS];
    for (stay, intent) in labeled {
        let i = intent.index();
        let h = stay.arrival_hour();
        total += 1;
        per_intent[i] += 1;
        pois[i].insert((stay.user_id.as_str(), stay.poi_id.as_str()));
        per_hour[h] += 1;
        per_intent_hour[i][h] += 1;
    }
    if total == 0 {
        return Err(invalid("intent statistics need at least one labeled stay"));
    }
    let mut stats = IntentStats {
        percentage_distribution: [0.0; NUM_INTENTS],
        average_visit: [0.0; NUM_INTENTS],
        time_distribution: [[0.0; 24]; NUM_INTENTS],
    };
    for i in 0..NUM_INTENTS {
        stats.percentage_distribution[i] = 100.0 * per_intent[i] as f64 / total as f64;
        if !pois[i].is_empty() {
            stats.average_visit[i] = per_intent[i] as f64 / pois[i].len() as f64;
        }
        for h in 0..24 {
            if per_hour[h] > 0 {
                stats.time_distribution[i][h] =
                    100.0 * per_intent_hour[i][h] as f64 / per_hour[h] as f64;
            }
        }
    }
    Ok(stats)
}

impl IntentStats {
    pub fn percentage(&self, intent: Intent) -> f64 {
        self.percentage_distribution[intent.index()]
    }

    /// JSON export with the prompt payload's keys, intents in prompt order,
    /// percentages rounded to two decimals.
    pub fn payload(&self) -> Value {
        let mut root = Map::new();
        for intent in Intent::PROMPT_ORDER {
            let i = intent.index();
            root.insert(
                intent.prompt_name().to_string(),
                json!({
                    "percentage_distribution": round_to(self.percentage_distribution[i], 2),
                    "average_visit": self.average_visit[i],
                }),
            );
        }
        let mut time = Map::new();
        for intent in Intent::PROMPT_ORDER {
            let hours: Map<String, Value> = (0..24)
                .map(|h| {
                    (
                        h.to_string(),
                        json!(round_to(self.time_distribution[intent.index()][h], 2)),
                    )
                })
                .collect();
            time.insert(intent.prompt_name().to_string(), Value::Object(hours));
        }
        root.insert("Time Distribution of Intents".into(), Value::Object(time));
        Value::Object(root)
    }

    /// The payload as a Python dict literal, as embedded in the feature
    /// extraction prompt.
    pub fn to_py_repr(&self) -> String {
        let mut parts = Vec::new();
        for intent in Intent::PROMPT_ORDER {
            let i = intent.index();
            parts.push(format!(
                "{}: {{'percentage_distribution': {}, 'average_visit': {}}}",
                py_str(intent.prompt_name()),
                py_float(round_to(self.percentage_distribution[i], 2)),
                py_float(self.average_visit[i]),
            ));
        }
        let time: Vec<String> = Intent::PROMPT_ORDER
            .iter()
            .map(|intent| {
                let hours: Vec<String> = (0..24)
                    .map(|h| {
                        format!(
                            "{h}: {}",
                            py_float(round_to(self.time_distribution[intent.index()][h], 2))
                        )
                    })
                    .collect();
                format!("{}: {{{}}}", py_str(intent.prompt_name()), hours.join(", "))
            })
            .collect();
        parts.push(format!("'Time Distribution of Intents': {{{}}}", time.join(", ")));
        format!("{{{}}}", parts.join(", "))
    }

    /// Short content hash identifying the statistics an insight set came from.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_py_repr().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiVisit {
    pub poi_id: String,
    pub name: String,
    /// Share of the user's stays at this POI, in percent.
    pub percent: f64,
    /// Percent of this POI's visits starting in each hour.
    pub hourly: [f64; 24],
}

/// Per-POI visit shares and start-hour histograms for one user, most
/// visited first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiVisitStats {
    pub user_id: String,
    pub pois: Vec<PoiVisit>,
}

pub fn compute_poi_stats(timeline: &UserTimeline) -> Result<PoiVisitStats> {
    compute_poi_stats_for(&timeline.user_id, timeline.stays())
}

pub(crate) fn compute_poi_stats_for(user_id: &str, stays: &[StayRecord]) -> Result<PoiVisitStats> {
    if stays.is_empty() {
        return Err(invalid("POI statistics need a non-empty timeline"));
    }
    let mut counts: BTreeMap<&str, (&str, usize, [usize; 24])> = BTreeMap::new();
    for s in stays {
        let entry = counts.entry(&s.poi_id).or_insert((&s.poi_name, 0, [0; 24]));
        entry.1 += 1;
        entry.2[s.arrival_hour()] += 1;
    }
    let m = stays.len() as f64;
    let mut pois: Vec<PoiVisit> = counts
        .into_iter()
        .map(|(poi_id, (name, count, hours))| {
            let mut hourly = [0.0; 24];
            for h in 0..24 {
                hourly[h] = 100.0 * hours[h] as f64 / count as f64;
            }
            PoiVisit {
                poi_id: poi_id.to_string(),
                name: name.to_string(),
                percent: 100.0 * count as f64 / m,
                hourly,
            }
        })
        .collect();
    pois.sort_by(|a, b| {
        b.percent
            .partial_cmp(&a.percent)
            .expect("finite percents")
            .then_with(|| a.poi_id.cmp(&b.poi_id))
    });
    Ok(PoiVisitStats {
        user_id: user_id.to_string(),
        pois,
    })
}

impl PoiVisitStats {
    /// `[{'Name': ..., 'Percent': '8.5%', 'Time Distribution': {8: 50.0}}, ...]`
    /// with only the hours that carry visits.
    pub fn to_py_repr(&self) -> String {
        let entries: Vec<String> = self
            .pois
            .iter()
            .map(|p| {
                let hours: Vec<String> = (0..24)
                    .filter(|&h| p.hourly[h] > 0.0)
                    .map(|h| format!("{h}: {}", py_float(round_to(p.hourly[h], 2))))
                    .collect();
                format!(
                    "{{'Name': {}, 'Percent': '{:.1}%', 'Time Distribution': {{{}}}}}",
                    py_str(&p.name),
                    p.percent,
                    hours.join(", ")
                )
            })
            .collect();
        format!("[{}]", entries.join(", "))
    }

    pub fn by_name(&self, name: &str) -> Option<&PoiVisit> {
        self.pois.iter().find(|p| p.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn stay(user: &str, poi: &str, category: &str, at: &str) -> StayRecord {
        StayRecord {
            user_id: user.into(),
            poi_id: poi.into(),
            poi_name: format!("{poi} name"),
            category: category.into(),
            arrival_time: parse_timestamp(at).unwrap(),
            departure_time: None,
        }
    }

    const HEADER: &str = "user_id,poi_id,poi_name,category,arrival_time,departure_time\n";

    #[test]
    fn empty_source_yields_nothing() {
        let parsed = parse_stay_records("".as_bytes(), RecordFormat::Csv).unwrap();
        assert!(parsed.records.is_empty() && parsed.row_errors.is_empty());
        let parsed = parse_stay_records(HEADER.as_bytes(), RecordFormat::Csv).unwrap();
        assert!(parsed.records.is_empty() && parsed.row_errors.is_empty());
        let parsed = parse_stay_records("".as_bytes(), RecordFormat::Jsonl).unwrap();
        assert!(parsed.records.is_empty());
    }

    #[test]
    fn one_row_round_trips_fields() {
        let src = format!("{HEADER}u1,p1,Cafe Luna,restaurant,2019-10-11T12:30:00,2019-10-11 13:15:00\n");
        let parsed = parse_stay_records(src.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.user_id, "u1");
        assert_eq!(r.poi_id, "p1");
        assert_eq!(r.poi_name, "Cafe Luna");
        assert_eq!(r.category, "restaurant");
        assert_eq!(r.arrival_time, parse_timestamp("2019-10-11 12:30:00").unwrap());
        assert_eq!(r.departure_time, Some(parse_timestamp("2019-10-11T13:15:00").unwrap()));

        let jsonl = r#"{"user_id":"u1","poi_id":"p1","poi_name":"Cafe Luna","category":"restaurant","arrival_time":"2019-10-11T12:30:00","departure_time":"2019-10-11T13:15:00"}"#;
        let parsed_json = parse_stay_records(jsonl.as_bytes(), RecordFormat::Jsonl).unwrap();
        assert_eq!(parsed_json.records, parsed.records);
    }

    #[test]
    fn departure_before_arrival_is_a_row_error() {
        let src = format!(
            "{HEADER}u1,p1,A,residence,2019-10-11T12:30:00,2019-10-11T11:00:00\n\
             u1,p2,B,office,2019-10-11T13:30:00,\n"
        );
        let parsed = parse_stay_records(src.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.row_errors.len(), 1);
        assert_eq!(parsed.row_errors[0].line, 2);
        assert!(parsed.row_errors[0].message.contains("precedes arrival_time"));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let src = "user_id,poi_id,category,arrival_time\nu1,p1,x,2019-10-11T12:30:00\n";
        let err = parse_stay_records(src.as_bytes(), RecordFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn all_rows_failing_is_fatal_but_some_is_not() {
        let src = format!("{HEADER}u1,p1,A,r,yesterday,\nu1,p1,A,r,noon,\n");
        let err = parse_stay_records(src.as_bytes(), RecordFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::AllRowsFailed { rows: 2, first_line: 2, .. }), "{err}");
        let src = format!("{HEADER}u1,p1,A,r,yesterday,\nu1,p1,A,r,2019-10-11T12:30:00,\n");
        let parsed = parse_stay_records(src.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.row_errors[0].line, 2);
    }

    #[test]
    fn timelines_sort_per_user_and_keep_tie_order() {
        let records = vec![
            stay("b", "p3", "x", "2019-10-11T10:00:00"),
            stay("a", "p1", "x", "2019-10-11T09:00:00"),
            stay("b", "p4", "x", "2019-10-11T08:00:00"),
            stay("a", "p2", "x", "2019-10-11T09:00:00"),
            stay("a", "p0", "x", "2019-10-11T07:00:00"),
        ];
        let timelines = build_timelines(records);
        assert_eq!(timelines.len(), 2);
        let a: Vec<_> = timelines["a"].stays().iter().map(|s| s.poi_id.as_str()).collect();
        assert_eq!(a, ["p0", "p1", "p2"]);
        let b: Vec<_> = timelines["b"].stays().iter().map(|s| s.poi_id.as_str()).collect();
        assert_eq!(b, ["p4", "p3"]);
    }

    fn numbered_timeline(m: usize) -> UserTimeline {
        let base = parse_timestamp("2019-10-07T00:00:00").unwrap();
        let stays = (0..m)
            .map(|i| StayRecord {
                user_id: "u".into(),
                poi_id: format!("p{i}"),
                poi_name: format!("poi {i}"),
                category: "errand".into(),
                arrival_time: base + chrono::Duration::minutes(37 * i as i64),
                departure_time: None,
            })
            .collect();
        UserTimeline::new("u", stays).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(sliding_windows(&numbered_timeline(15), 12).unwrap().len(), 4);
        let t = numbered_timeline(12);
        let w = sliding_windows(&t, 12).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].stays, t.stays());
        assert!(sliding_windows(&numbered_timeline(11), 12).unwrap().is_empty());
        assert!(matches!(
            sliding_windows(&numbered_timeline(5), 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn split_sizes_follow_floor_arithmetic() {
        let t = numbered_timeline(10);
        let s = chronological_split(&t, SplitRatios::new(0.7, 0.1, 0.2).unwrap()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitRatios::new(0.5, 0.2, 0.2).is_err());
        assert!(SplitRatios::new(0.5, -0.1, 0.6).is_err());
    }

    #[test]
    fn split_of_long_timeline_is_a_partition() {
        let t = numbered_timeline(1000);
        let s = chronological_split(&t, SplitRatios::default()).unwrap();
        let joined: Vec<_> = s
            .train
            .stays()
            .iter()
            .chain(s.val.stays())
            .chain(s.test.stays())
            .cloned()
            .collect();
        assert_eq!(joined, t.stays());
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (700, 100, 200));
    }

    #[test]
    fn all_home_stats() {
        let stays: Vec<_> = (0..5)
            .map(|h| stay("u", "home", "residence", &format!("2019-10-11T0{h}:10:00")))
            .collect();
        let stats = compute_intent_stats(stays.iter().map(|s| (s, Intent::AtHome))).unwrap();
        for intent in Intent::ALL {
            let expected = if intent == Intent::AtHome { 100.0 } else { 0.0 };
            assert_eq!(stats.percentage(intent), expected);
        }
        assert_eq!(stats.average_visit[Intent::AtHome.index()], 5.0);
        assert_eq!(stats.time_distribution[Intent::AtHome.index()][3], 100.0);
        assert_eq!(stats.time_distribution[Intent::AtHome.index()][12], 0.0);
        assert!(compute_intent_stats(std::iter::empty()).is_err());
    }

    #[test]
    fn stats_payload_uses_prompt_keys() {
        let stays = [
            stay("u", "home", "residence", "2019-10-11T00:10:00"),
            stay("u", "work", "office", "2019-10-11T09:10:00"),
            stay("u", "work", "office", "2019-10-11T13:10:00"),
        ];
        let labels = [Intent::AtHome, Intent::Working, Intent::Working];
        let stats = compute_intent_stats(stays.iter().zip(labels)).unwrap();
        let payload = stats.payload();
        let keys: Vec<_> = payload.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            [
                "At Home",
                "Working",
                "Running errands",
                "Eating Out",
                "Leisure and entertainment",
                "Shopping",
                "Time Distribution of Intents"
            ]
        );
        assert_eq!(payload["At Home"]["percentage_distribution"], json!(33.33));
        assert_eq!(payload["Working"]["average_visit"], json!(2.0));
        assert_eq!(payload["Time Distribution of Intents"]["Working"]["9"], json!(100.0));
        let repr = stats.to_py_repr();
        assert!(repr.starts_with(
            "{'At Home': {'percentage_distribution': 33.33, 'average_visit': 1.0}, 'Working': {'percentage_distribution': 66.67, 'average_visit': 2.0}"
        ));
        assert!(repr.contains("'Time Distribution of Intents': {'At Home': {0: 100.0, 1: 0.0,"));
        assert!(repr.ends_with("23: 0.0}}}"));
    }

    #[test]
    fn single_poi_stats() {
        let stays: Vec<_> = ["08", "08", "12", "19"]
            .iter()
            .map(|h| stay("u", "p", "shop", &format!("2019-10-11T{h}:00:00")))
            .collect();
        let t = UserTimeline::new("u", stays).unwrap();
        let stats = compute_poi_stats(&t).unwrap();
        assert_eq!(stats.pois.len(), 1);
        let p = &stats.pois[0];
        assert_eq!(p.percent, 100.0);
        assert_eq!(p.hourly[8], 50.0);
        assert_eq!(p.hourly[12], 25.0);
        assert_eq!(p.hourly[19], 25.0);
        assert_eq!(
            stats.to_py_repr(),
            "[{'Name': 'p name', 'Percent': '100.0%', 'Time Distribution': {8: 50.0, 12: 25.0, 19: 25.0}}]"
        );
        assert!(compute_poi_stats(&UserTimeline::new("u", vec![]).unwrap()).is_err());
    }

    #[test]
    fn day_segments_split_at_midnight() {
        let stays = vec![
            stay("u", "a", "x", "2019-10-11T00:10:00"),
            stay("u", "b", "x", "2019-10-11T23:59:00"),
            stay("u", "a", "x", "2019-10-12T00:00:00"),
        ];
        let t = UserTimeline::new("u", stays).unwrap();
        let days = t.day_segments();
        assert_eq!(days.len(), 2);
        assert_eq!((days[0].0, days[0].1.len()), (0, 2));
        assert_eq!((days[1].0, days[1].1.len()), (2, 1));
    }
}
