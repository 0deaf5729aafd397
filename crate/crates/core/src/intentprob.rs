//! Time-of-day intent distributions from a user's labeled history.
//!
//! Each past intent occurrence contributes a triangular bump that peaks at
//! its timestamp and fades out by the neighbouring events (or after `T`).
//! Folding the bumps onto one day gives P(intent | time of day, user).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::StayRecord;
use crate::error::{invalid, Error, Result};
use crate::intent::{Intent, NUM_INTENTS};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Maximum influence half-width, in seconds.
    pub t_max: f64,
    /// Folding period, in seconds; always one day.
    pub delta_t: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            t_max: 4.0 * 3600.0,
            delta_t: SECONDS_PER_DAY,
        }
    }
}

impl KernelParams {
    pub fn with_hours(t_max_hours: f64) -> Result<Self> {
        let p = KernelParams {
            t_max: t_max_hours * 3600.0,
            delta_t: SECONDS_PER_DAY,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(invalid(format!("T must be positive, got {}", self.t_max)));
        }
        if self.delta_t != SECONDS_PER_DAY {
            return Err(invalid("the folding period must be exactly one day"));
        }
        Ok(())
    }
}

/// A user's intents with timestamps in seconds, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentHistory {
    pub user_id: String,
    times: Vec<f64>,
    intents: Vec<Intent>,
}

impl IntentHistory {
    pub fn new(user_id: impl Into<String>, mut events: Vec<(f64, Intent)>) -> Result<Self> {
        if events.iter().any(|(t, _)| !t.is_finite()) {
            return Err(invalid("event times must be finite"));
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, intents) = events.into_iter().unzip();
        Ok(IntentHistory {
            user_id: user_id.into(),
            times,
            intents,
        })
    }

    /// Pairs stays with their labels; arrival times become event times.
    pub fn from_labeled_stays(user_id: impl Into<String>, stays: &[StayRecord], labels: &[Intent]) -> Result<Self> {
        if stays.len() != labels.len() {
            return Err(invalid(format!(
                "{} stays but {} labels",
                stays.len(),
                labels.len()
            )));
        }
        let events = stays
            .iter()
            .zip(labels)
            .map(|(s, l)| (s.arrival_seconds(), *l))
            .collect();
        Self::new(user_id, events)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intents(&self) -> &[Intent] {
        &self.intents
    }
}

/// `(t_begin, t_end)` of event `i` (0-based). Neighbours outside the history
/// are taken as `t_1 - T` and `t_N + T`.
pub fn influence_window(i: usize, times: &[f64], params: &KernelParams) -> Result<(f64, f64)> {
    if i >= times.len() {
        return Err(invalid(format!(
            "event index {i} out of range for {} events",
            times.len()
        )));
    }
    let t = times[i];
    let prev = if i == 0 { t - params.t_max } else { times[i - 1] };
    let next = if i + 1 == times.len() { t + params.t_max } else { times[i + 1] };
    Ok((prev.max(t - params.t_max), next.min(t + params.t_max)))
}

/// Rising-edge ratio with the zero-width limit: 1 at the peak, +inf after
/// it, -inf before it.
fn ramp(t: f64, from: f64, peak: f64) -> f64 {
    if peak > from {
        (t - from) / (peak - from)
    } else if t == peak {
        1.0
    } else if t > peak {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

fn hat(t: f64, t_begin: f64, t_i: f64, t_end: f64) -> f64 {
    let up = ramp(t, t_begin, t_i);
    // Falling edge mirrored onto a rising one.
    let down = ramp(-t, -t_end, -t_i);
    up.min(down).max(0.0)
}

fn hat_at(history: &IntentHistory, i: usize, t: f64, params: &KernelParams) -> f64 {
    let (b, e) = influence_window(i, &history.times, params).expect("index in range");
    hat(t, b, history.times[i], e)
}

/// Indices of events whose window can contain `t`.
fn candidates(history: &IntentHistory, t: f64, params: &KernelParams) -> std::ops::Range<usize> {
    let lo = history.times.partition_point(|&x| x < t - params.t_max);
    let hi = history.times.partition_point(|&x| x <= t + params.t_max);
    lo..hi
}

/// f_intent(t): sum of the hats of every event carrying `intent`.
pub fn kernel_value(intent: Intent, t: f64, history: &IntentHistory, params: &KernelParams) -> f64 {
    candidates(history, t, params)
        .filter(|&i| history.intents[i] == intent)
        .map(|i| hat_at(history, i, t, params))
        .sum()
}

/// All six kernel values at `t` in one pass.
pub fn kernel_values(t: f64, history: &IntentHistory, params: &KernelParams) -> [f64; NUM_INTENTS] {
    let mut out = [0.0; NUM_INTENTS];
    for i in candidates(history, t, params) {
        out[history.intents[i].index()] += hat_at(history, i, t, params);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentDistribution {
    pub user_id: String,
    /// Time of day, in seconds since midnight.
    pub t0: f64,
    /// Indexed by intent ordinal.
    pub probabilities: [f64; NUM_INTENTS],
}

impl IntentDistribution {
    pub fn probability(&self, intent: Intent) -> f64 {
        self.probabilities[intent.index()]
    }

    /// Most likely intent; ties go to the lowest ordinal.
    pub fn argmax(&self) -> Intent {
        argmax(&self.probabilities)
    }
}

pub fn argmax(p: &[f64; NUM_INTENTS]) -> Intent {
    let mut best = 0;
    for j in 1..NUM_INTENTS {
        if p[j] > p[best] {
            best = j;
        }
    }
    Intent::from_index(best).expect("in range")
}

pub const UNIFORM: [f64; NUM_INTENTS] = [1.0 / NUM_INTENTS as f64; NUM_INTENTS];

/// Folded, normalized kernel mass at time of day `t0` (seconds since
/// midnight). Only days where the kernels can be non-zero are visited.
pub fn intent_probabilities(t0: f64, history: &IntentHistory, params: &KernelParams) -> [f64; NUM_INTENTS] {
    if history.is_empty() {
        return UNIFORM;
    }
    let first = history.times[0] - params.t_max;
    let last = history.times[history.len() - 1] + params.t_max;
    let k_min = ((first - t0) / params.delta_t).ceil() as i64;
    let k_max = ((last - t0) / params.delta_t).floor() as i64;
    let mut mass = [0.0; NUM_INTENTS];
    for k in k_min..=k_max {
        let values = kernel_values(t0 + k as f64 * params.delta_t, history, params);
        for j in 0..NUM_INTENTS {
            mass[j] += values[j];
        }
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return UNIFORM;
    }
    mass.map(|m| m / total)
}

pub fn intent_distribution(t0: f64, history: &IntentHistory, params: &KernelParams) -> Result<IntentDistribution> {
    if !(0.0..SECONDS_PER_DAY).contains(&t0) {
        return Err(invalid(format!("time of day {t0} outside [0, 86400)")));
    }
    Ok(IntentDistribution {
        user_id: history.user_id.clone(),
        t0,
        probabilities: intent_probabilities(t0, history, params),
    })
}

/// Precomputed distributions on a fixed time-of-day grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub resolution: f64,
    pub rows: Vec<[f64; NUM_INTENTS]>,
}

impl DistributionTable {
    pub fn bin_of(&self, t0: f64) -> usize {
        let t = t0.rem_euclid(SECONDS_PER_DAY);
        ((t / self.resolution).floor() as usize).min(self.rows.len() - 1)
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        bin_center(bin, self.resolution)
    }

    pub fn lookup(&self, t0: f64) -> &[f64; NUM_INTENTS] {
        &self.rows[self.bin_of(t0)]
    }
}

fn bin_center(bin: usize, resolution: f64) -> f64 {
    let start = bin as f64 * resolution;
    let end = (start + resolution).min(SECONDS_PER_DAY);
    0.5 * (start + end)
}

pub fn distribution_table(history: &IntentHistory, params: &KernelParams, resolution: f64) -> Result<DistributionTable> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(invalid(format!("resolution must be positive, got {resolution}")));
    }
    let bins = (SECONDS_PER_DAY / resolution).ceil() as usize;
    let rows = (0..bins)
        .map(|b| intent_probabilities(bin_center(b, resolution), history, params))
        .collect();
    Ok(DistributionTable { resolution, rows })
}

/// Per-user tables, cacheable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCache {
    pub params: KernelParams,
    pub resolution: f64,
    pub tables: BTreeMap<String, DistributionTable>,
}

impl DistributionCache {
    pub fn build<'a>(
        histories: impl IntoIterator<Item = &'a IntentHistory>,
        params: KernelParams,
        resolution: f64,
    ) -> Result<Self> {
        params.validate()?;
        let mut tables = BTreeMap::new();
        for h in histories {
            tables.insert(h.user_id.clone(), distribution_table(h, &params, resolution)?);
        }
        Ok(DistributionCache {
            params,
            resolution,
            tables,
        })
    }

    /// Uniform for users without a history.
    pub fn lookup(&self, user_id: &str, t0: f64) -> [f64; NUM_INTENTS] {
        self.tables.get(user_id).map_or(UNIFORM, |t| *t.lookup(t0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 3600.0;

    fn params() -> KernelParams {
        KernelParams::default()
    }

    #[test]
    fn windows() {
        let p = params();
        assert_eq!(influence_window(0, &[10.0 * H], &p).unwrap(), (6.0 * H, 14.0 * H));
        let w = influence_window(1, &[9.0 * H, 10.0 * H], &p).unwrap();
        assert_eq!(w.0, 9.0 * H);
        assert_eq!(w.1, 14.0 * H);
        assert_eq!(influence_window(0, &[9.0 * H, 10.0 * H], &p).unwrap().0, 5.0 * H);
        assert!(influence_window(2, &[1.0, 2.0], &p).is_err());
        assert!(KernelParams::with_hours(0.0).is_err());
    }

    #[test]
    fn isolated_hat() {
        let h = IntentHistory::new("u", vec![(10.0 * H, Intent::Working)]).unwrap();
        let p = params();
        assert_eq!(kernel_value(Intent::Working, 10.0 * H, &h, &p), 1.0);
        assert_eq!(kernel_value(Intent::Working, 6.0 * H, &h, &p), 0.0);
        assert_eq!(kernel_value(Intent::Working, 8.0 * H, &h, &p), 0.5);
        assert_eq!(kernel_value(Intent::Working, 13.0 * H, &h, &p), 0.25);
        assert_eq!(kernel_value(Intent::AtHome, 10.0 * H, &h, &p), 0.0);
        assert_eq!(kernel_value(Intent::Working, 20.0 * H, &h, &p), 0.0);
    }

    #[test]
    fn degenerate_ramps() {
        let h = IntentHistory::new("u", vec![(10.0 * H, Intent::AtHome), (10.0 * H, Intent::Shopping)]).unwrap();
        let p = params();
        // First event: left ramp full, right side zero width.
        assert_eq!(kernel_value(Intent::AtHome, 10.0 * H, &h, &p), 1.0);
        assert_eq!(kernel_value(Intent::AtHome, 8.0 * H, &h, &p), 0.5);
        assert_eq!(kernel_value(Intent::AtHome, 10.0 * H + 1.0, &h, &p), 0.0);
        // Second event: step up at t_i, then the right ramp.
        assert_eq!(kernel_value(Intent::Shopping, 10.0 * H, &h, &p), 1.0);
        assert_eq!(kernel_value(Intent::Shopping, 10.0 * H - 1.0, &h, &p), 0.0);
        assert_eq!(kernel_value(Intent::Shopping, 12.0 * H, &h, &p), 0.5);
    }

    #[test]
    fn single_intent_collapse_and_uniform_fallback() {
        let p = params();
        let events = (0..5).map(|d| (d as f64 * SECONDS_PER_DAY + 2.0 * H, Intent::AtHome)).collect();
        let h = IntentHistory::new("u", events).unwrap();
        let d = intent_distribution(3.0 * H, &h, &p).unwrap();
        assert_eq!(d.probability(Intent::AtHome), 1.0);
        let far = intent_distribution(14.0 * H, &h, &p).unwrap();
        assert_eq!(far.probabilities, UNIFORM);
        let empty = IntentHistory::new("u", vec![]).unwrap();
        assert_eq!(intent_distribution(0.0, &empty, &p).unwrap().probabilities, UNIFORM);
        assert!(intent_distribution(SECONDS_PER_DAY, &h, &p).is_err());
    }

    #[test]
    fn tables() {
        let p = params();
        let h = IntentHistory::new(
            "u",
            vec![(8.0 * H, Intent::Working), (12.0 * H, Intent::EatingOut), (20.0 * H, Intent::AtHome)],
        )
        .unwrap();
        assert_eq!(distribution_table(&h, &p, SECONDS_PER_DAY).unwrap().rows.len(), 1);
        let t = distribution_table(&h, &p, 900.0).unwrap();
        assert_eq!(t.rows.len(), 96);
        for row in &t.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let probe = 10.0 * H + 123.0;
        let direct = intent_probabilities(t.bin_center(t.bin_of(probe)), &h, &p);
        assert_eq!(*t.lookup(probe), direct);
        assert!(distribution_table(&h, &p, 0.0).is_err());
        assert_eq!(argmax(&UNIFORM), Intent::AtHome);
    }

    #[test]
    fn cache_round_trip() {
        let p = params();
        let h = IntentHistory::new("u", vec![(8.0 * H, Intent::Working)]).unwrap();
        let cache = DistributionCache::build([&h], p, 3600.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        cache.save(&path).unwrap();
        assert_eq!(DistributionCache::load(&path).unwrap(), cache);
        assert_eq!(cache.lookup("nobody", 0.0), UNIFORM);
    }
}
