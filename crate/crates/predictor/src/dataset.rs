use std::collections::BTreeMap;

use limp_core::data::{chronological_split, SplitRatios, StayRecord, UserTimeline};
use limp_core::intentprob::{DistributionCache, IntentHistory, KernelParams, SECONDS_PER_DAY};
use limp_core::{Intent, NUM_INTENTS};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::vocab::Vocab;

/// One position of a model input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputUnit {
    pub user: u32,
    pub poi: u32,
    pub category: u32,
    /// Time of day of the next movement, in [0, 1).
    pub next_time: f64,
    /// Intent distribution at the next movement's time.
    pub probs: [f64; NUM_INTENTS],
}

/// Units of one window and, per position, what the next movement was.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub units: Vec<InputUnit>,
    pub next_intents: Vec<Intent>,
    pub target_pois: Vec<u32>,
    pub target_categories: Vec<u32>,
    pub target_times: Vec<f64>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub ratios: SplitRatios,
    /// Stays per window.
    pub window: usize,
    pub kernel: KernelParams,
    /// Bin width of the cached intent tables, seconds.
    pub resolution: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            ratios: SplitRatios::default(),
            window: 12,
            kernel: KernelParams::default(),
            resolution: 60.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictorDataset {
    pub vocab: Vocab,
    pub cache: DistributionCache,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn seconds_of_day(stay: &StayRecord) -> f64 {
    stay.arrival_seconds().rem_euclid(SECONDS_PER_DAY)
}

/// Sample for consecutive `stays` whose annotated intents are `labels`.
/// `stays.len() - 1` units are produced; the last stay only supplies targets.
pub fn window_sample(
    stays: &[StayRecord],
    labels: &[Intent],
    vocab: &Vocab,
    cache: &DistributionCache,
) -> Result<Sample> {
    let user_id = stays.first().map(|s| s.user_id.clone()).unwrap_or_default();
    build_sample(stays, labels, vocab, |k| cache.lookup(&user_id, seconds_of_day(&stays[k])))
}

/// `probs(k)` is the intent distribution for the movement into `stays[k]`.
fn build_sample(
    stays: &[StayRecord],
    labels: &[Intent],
    vocab: &Vocab,
    probs: impl Fn(usize) -> [f64; NUM_INTENTS],
) -> Result<Sample> {
    if stays.len() < 2 || stays.len() != labels.len() {
        return Err(invalid(format!(
            "a window needs at least two stays with one label each, got {} stays and {} labels",
            stays.len(),
            labels.len()
        )));
    }
    let user = vocab.user(&stays[0].user_id)?;
    let l = stays.len() - 1;
    let mut sample = Sample {
        units: Vec::with_capacity(l),
        next_intents: Vec::with_capacity(l),
        target_pois: Vec::with_capacity(l),
        target_categories: Vec::with_capacity(l),
        target_times: Vec::with_capacity(l),
    };
    for k in 0..l {
        let (cur, next) = (&stays[k], &stays[k + 1]);
        let t = seconds_of_day(next) / SECONDS_PER_DAY;
        sample.units.push(InputUnit {
            user,
            poi: vocab.poi(&cur.poi_id),
            category: vocab.category(&cur.category),
            next_time: t,
            probs: probs(k + 1),
        });
        sample.next_intents.push(labels[k + 1]);
        sample.target_pois.push(vocab.poi(&next.poi_id));
        sample.target_categories.push(vocab.category(&next.category));
        sample.target_times.push(t);
    }
    Ok(sample)
}

fn split_samples(
    timeline: &UserTimeline,
    labels: &[Intent],
    window: usize,
    vocab: &Vocab,
    cache: &DistributionCache,
) -> Result<Vec<Sample>> {
    timeline
        .stays()
        .windows(window)
        .zip(labels.windows(window))
        .map(|(s, l)| window_sample(s, l, vocab, cache))
        .collect()
}

/// Chronological per-user split, vocabularies and intent tables from the
/// training part, and sliding-window samples for every part.
///
/// `labels` holds one annotated intent per stay of each full timeline.
/// Only the training part's labels feed the intent tables.
pub fn build_dataset(
    timelines: &BTreeMap<String, UserTimeline>,
    labels: &BTreeMap<String, Vec<Intent>>,
    options: &DatasetOptions,
) -> Result<PredictorDataset> {
    if options.window < 2 {
        return Err(invalid(format!("window must be at least 2, got {}", options.window)));
    }
    let mut parts = Vec::new();
    for (user, timeline) in timelines {
        let user_labels = labels
            .get(user)
            .ok_or_else(|| invalid(format!("no labels for user {user:?}")))?;
        if user_labels.len() != timeline.len() {
            return Err(invalid(format!(
                "user {user:?} has {} stays but {} labels",
                timeline.len(),
                user_labels.len()
            )));
        }
        let split = chronological_split(timeline, options.ratios)?;
        if split.train.is_empty() {
            log::warn!("dropping user {user}: empty training split");
            continue;
        }
        let (a, b) = (split.train.len(), split.val.len());
        parts.push((split, &user_labels[..a], &user_labels[a..a + b], &user_labels[a + b..]));
    }
    let train_timelines: BTreeMap<String, UserTimeline> =
        parts.iter().map(|p| (p.0.train.user_id.clone(), p.0.train.clone())).collect();
    let vocab = Vocab::build(&train_timelines)?;
    let histories = parts
        .iter()
        .map(|(s, train_labels, _, _)| IntentHistory::from_labeled_stays(&s.train.user_id, s.train.stays(), train_labels))
        .collect::<limp_core::Result<Vec<_>>>()?;
    let cache = DistributionCache::build(&histories, options.kernel, options.resolution)?;

    let mut ds = PredictorDataset {
        vocab,
        cache,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (split, tl, vl, sl) in &parts {
        let w = options.window;
        ds.train.extend(split_samples(&split.train, tl, w, &ds.vocab, &ds.cache)?);
        ds.val.extend(split_samples(&split.val, vl, w, &ds.vocab, &ds.cache)?);
        ds.test.extend(split_samples(&split.test, sl, w, &ds.vocab, &ds.cache)?);
    }
    if ds.train.is_empty() {
        return Err(invalid(format!(
            "no training windows of length {}; timelines are too short",
            options.window
        )));
    }
    log::info!(
        "dataset: {} users, {} POIs, {} train / {} val / {} test windows",
        ds.vocab.num_users(),
        ds.vocab.num_pois() - 1,
        ds.train.len(),
        ds.val.len(),
        ds.test.len()
    );
    Ok(ds)
}
