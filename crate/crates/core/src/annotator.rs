//! Rule-based intent annotation: home/work anchors from night and weekday
//! work-hour regularity, then category and meal-time rules for everything
//! else. Used as the offline oracle, inside the mock chat backend, and as
//! the fallback labeler when a backend gives up.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, Duration, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use crate::data::{StayRecord, UserTimeline};
use crate::error::{invalid, Result};
use crate::intent::Intent;

/// What a POI category means to the rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleClass {
    Residence,
    Workplace,
    Dining,
    Recreation,
    Retail,
    Other,
}

/// Category label → rule class. Lookups are case-insensitive; unknown
/// categories fall into [`RuleClass::Other`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    #[serde(flatten)]
    classes: BTreeMap<String, RuleClass>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        use RuleClass::*;
        let table: &[(&str, RuleClass)] = &[
            ("residence", Residence),
            ("residential", Residence),
            ("apartment", Residence),
            ("housing", Residence),
            ("dormitory", Residence),
            ("home", Residence),
            ("office", Workplace),
            ("company", Workplace),
            ("workplace", Workplace),
            ("factory", Workplace),
            ("industrial park", Workplace),
            ("restaurant", Dining),
            ("cafe", Dining),
            ("fast food", Dining),
            ("food street", Dining),
            ("food court", Dining),
            ("bakery", Dining),
            ("entertainment", Recreation),
            ("bar", Recreation),
            ("game center", Recreation),
            ("gym", Recreation),
            ("sports ground", Recreation),
            ("park", Recreation),
            ("cinema", Recreation),
            ("ktv", Recreation),
            ("shop", Retail),
            ("store", Retail),
            ("shopping mall", Retail),
            ("mall", Retail),
            ("supermarket", Retail),
            ("market", Retail),
            ("convenience store", Retail),
            ("errand", Other),
            ("hospital", Other),
            ("bank", Other),
            ("post office", Other),
            ("government", Other),
        ];
        CategoryMap {
            classes: table.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

impl CategoryMap {
    pub fn empty() -> Self {
        CategoryMap {
            classes: BTreeMap::new(),
        }
    }

    /// Parses a TOML table of `category = "class"` pairs.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let classes: BTreeMap<String, RuleClass> =
            toml::from_str(text).map_err(|e| invalid(format!("category map: {e}")))?;
        Ok(CategoryMap {
            classes: classes
                .into_iter()
                .map(|(k, v)| (k.trim().to_lowercase(), v))
                .collect(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.classes).expect("string keys serialize")
    }

    pub fn insert(&mut self, category: &str, class: RuleClass) {
        self.classes.insert(category.trim().to_lowercase(), class);
    }

    pub fn class_of(&self, category: &str) -> RuleClass {
        self.classes
            .get(&category.trim().to_lowercase())
            .copied()
            .unwrap_or(RuleClass::Other)
    }
}

/// Half-open time-of-day interval; `start > end` wraps past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl DayWindow {
    pub fn new(start: (u32, u32), end: (u32, u32)) -> Self {
        DayWindow {
            start: NaiveTime::from_hms_opt(start.0, start.1, 0).expect("valid time"),
            end: NaiveTime::from_hms_opt(end.0, end.1, 0).expect("valid time"),
        }
    }

    pub fn contains(&self, t: NaiveTime) -> bool {
        if self.start <= self.end {
            self.start <= t && t < self.end
        } else {
            t >= self.start || t < self.end
        }
    }

    /// Absolute `[start, end)` spans of this window anchored on `date`.
    fn span_on(&self, date: chrono::NaiveDate) -> (NaiveDateTime, NaiveDateTime) {
        let start = date.and_time(self.start);
        let mut end = date.and_time(self.end);
        if self.start > self.end {
            end += Duration::days(1);
        }
        (start, end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub night_window: DayWindow,
    pub work_window: DayWindow,
    pub meal_windows: Vec<DayWindow>,
    /// Distinct weekdays a candidate work POI must be seen on.
    pub min_work_days: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            night_window: DayWindow::new((21, 0), (8, 0)),
            work_window: DayWindow::new((9, 0), (18, 0)),
            meal_windows: vec![
                DayWindow::new((6, 30), (9, 30)),
                DayWindow::new((11, 0), (14, 0)),
                DayWindow::new((17, 0), (21, 0)),
            ],
            min_work_days: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoiRef {
    pub poi_id: String,
    pub poi_name: String,
}

impl PoiRef {
    pub fn of(stay: &StayRecord) -> Self {
        PoiRef {
            poi_id: stay.poi_id.clone(),
            poi_name: stay.poi_name.clone(),
        }
    }
}

/// A user's home and work places.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnchorPlaces {
    pub home: Option<PoiRef>,
    pub work: Option<PoiRef>,
    pub rationale: String,
}

impl AnchorPlaces {
    pub fn none() -> Self {
        AnchorPlaces::default()
    }

    pub fn home_id(&self) -> Option<&str> {
        self.home.as_ref().map(|p| p.poi_id.as_str())
    }

    pub fn work_id(&self) -> Option<&str> {
        self.work.as_ref().map(|p| p.poi_id.as_str())
    }

    pub fn is_complete(&self) -> bool {
        self.home.is_some() && self.work.is_some()
    }
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicAnnotator {
    pub categories: CategoryMap,
    pub config: AnnotatorConfig,
}

fn interval(stay: &StayRecord) -> (NaiveDateTime, NaiveDateTime) {
    (stay.arrival_time, stay.departure_time.unwrap_or(stay.arrival_time))
}

fn is_weekday(d: chrono::NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Dates (anchoring a window span) whose span the stay touches.
fn touched_dates(
    stay: &StayRecord,
    window: &DayWindow,
) -> impl Iterator<Item = chrono::NaiveDate> {
    let (a, e) = interval(stay);
    let window = *window;
    let first = a.date() - Duration::days(1);
    first
        .iter_days()
        .take_while(move |d| *d <= e.date())
        .filter(move |d| {
            let (ws, we) = window.span_on(*d);
            a < we && e >= ws
        })
}

impl HeuristicAnnotator {
    pub fn new(categories: CategoryMap, config: AnnotatorConfig) -> Self {
        HeuristicAnnotator { categories, config }
    }

    pub fn class_of(&self, stay: &StayRecord) -> RuleClass {
        self.categories.class_of(&stay.category)
    }

    /// Home is the residence-class POI with the most stays touching the night
    /// window; work is the non-home POI with the most stays touching the
    /// weekday work window, seen on at least `min_work_days` weekdays.
    pub fn identify_anchors(&self, timeline: &UserTimeline) -> Result<AnchorPlaces> {
        if timeline.is_empty() {
            return Err(invalid("cannot identify anchors of an empty timeline"));
        }
        let stays = timeline.stays();
        let pick = |scores: HashMap<&str, (usize, &StayRecord)>| {
            scores
                .into_iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then_with(|| b.0.cmp(a.0)))
                .map(|(_, (count, stay))| (count, PoiRef::of(stay)))
        };

        let mut night: HashMap<&str, (usize, &StayRecord)> = HashMap::new();
        for s in stays {
            if self.class_of(s) != RuleClass::Residence {
                continue;
            }
            let touched = touched_dates(s, &self.config.night_window).count();
            if touched > 0 {
                night.entry(&s.poi_id).or_insert((0, s)).0 += 1;
            }
        }
        let home = pick(night);

        let home_id = home.as_ref().map(|(_, p)| p.poi_id.clone());
        let mut work_days: HashMap<&str, std::collections::HashSet<chrono::NaiveDate>> =
            HashMap::new();
        let mut work: HashMap<&str, (usize, &StayRecord)> = HashMap::new();
        for s in stays {
            if Some(&s.poi_id) == home_id.as_ref() {
                continue;
            }
            let days: Vec<_> = touched_dates(s, &self.config.work_window)
                .filter(|d| is_weekday(*d))
                .collect();
            if !days.is_empty() {
                work.entry(&s.poi_id).or_insert((0, s)).0 += 1;
                work_days.entry(&s.poi_id).or_default().extend(days);
            }
        }
        let min_days = self.config.min_work_days;
        work.retain(|poi, _| work_days.get(poi).map_or(0, |d| d.len()) >= min_days);
        let work = pick(work);

        let describe = |label: &str, found: &Option<(usize, PoiRef)>| match found {
            Some((count, p)) => format!("{label}: {} ({count} stays in window)", p.poi_name),
            None => format!("{label}: none"),
        };
        let rationale = format!("{}; {}", describe("home", &home), describe("work", &work));
        Ok(AnchorPlaces {
            home: home.map(|(_, p)| p),
            work: work.map(|(_, p)| p),
            rationale,
        })
    }

    /// Anchor rules first, then dining-at-mealtime, recreation, retail;
    /// anything else is an errand.
    pub fn annotate_stay(&self, stay: &StayRecord, anchors: &AnchorPlaces) -> Intent {
        if anchors.home_id() == Some(stay.poi_id.as_str()) {
            return Intent::AtHome;
        }
        if anchors.work_id() == Some(stay.poi_id.as_str()) {
            return Intent::Working;
        }
        let t = stay.arrival_time.time();
        match self.class_of(stay) {
            RuleClass::Dining if self.config.meal_windows.iter().any(|w| w.contains(t)) => {
                Intent::EatingOut
            }
            RuleClass::Recreation => Intent::LeisureAndEntertainment,
            RuleClass::Retail => Intent::Shopping,
            _ => Intent::RunningErrands,
        }
    }

    pub fn annotate_stays(&self, stays: &[StayRecord], anchors: &AnchorPlaces) -> Vec<Intent> {
        stays.iter().map(|s| self.annotate_stay(s, anchors)).collect()
    }

    pub fn annotate_timeline(&self, timeline: &UserTimeline, anchors: &AnchorPlaces) -> Vec<Intent> {
        self.annotate_stays(timeline.stays(), anchors)
    }

    /// Anchors plus labels for a whole timeline; empty timelines get no
    /// anchors and no labels.
    pub fn label_timeline(&self, timeline: &UserTimeline) -> (AnchorPlaces, Vec<Intent>) {
        match self.identify_anchors(timeline) {
            Ok(anchors) => {
                let labels = self.annotate_timeline(timeline, &anchors);
                (anchors, labels)
            }
            Err(_) => (AnchorPlaces::none(), Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_timestamp;

    fn stay(poi: &str, category: &str, at: &str, until: Option<&str>) -> StayRecord {
        StayRecord {
            user_id: "u".into(),
            poi_id: poi.into(),
            poi_name: format!("{poi} name"),
            category: category.into(),
            arrival_time: parse_timestamp(at).unwrap(),
            departure_time: until.map(|t| parse_timestamp(t).unwrap()),
        }
    }

    fn anchors(home: Option<&str>, work: Option<&str>) -> AnchorPlaces {
        let r = |p: &str| PoiRef {
            poi_id: p.into(),
            poi_name: format!("{p} name"),
        };
        AnchorPlaces {
            home: home.map(r),
            work: work.map(r),
            rationale: String::new(),
        }
    }

    #[test]
    fn nightly_residence_is_home() {
        let mut stays = Vec::new();
        // 2019-10-07 is a Monday.
        for d in 7..12 {
            stays.push(stay("flat", "residence", &format!("2019-10-{d:02}T00:20:00"), Some(&format!("2019-10-{d:02}T07:40:00"))));
            stays.push(stay("desk", "office", &format!("2019-10-{d:02}T08:50:00"), Some(&format!("2019-10-{d:02}T17:30:00"))));
            stays.push(stay("other_flat", "residence", &format!("2019-10-{d:02}T18:30:00"), Some(&format!("2019-10-{d:02}T19:30:00"))));
        }
        let t = UserTimeline::new("u", stays).unwrap();
        let a = HeuristicAnnotator::default().identify_anchors(&t).unwrap();
        assert_eq!(a.home_id(), Some("flat"));
        assert_eq!(a.work_id(), Some("desk"));
        assert!(a.rationale.contains("flat name"));
    }

    #[test]
    fn no_weekday_daytime_regularity_means_no_work() {
        let stays = vec![
            stay("flat", "residence", "2019-10-12T00:20:00", None),
            stay("mall", "shop", "2019-10-12T14:00:00", None), // Saturday
            stay("flat", "residence", "2019-10-12T22:00:00", None),
            stay("bank", "errand", "2019-10-14T10:00:00", None), // one weekday only
        ];
        let t = UserTimeline::new("u", stays).unwrap();
        let a = HeuristicAnnotator::default().identify_anchors(&t).unwrap();
        assert_eq!(a.home_id(), Some("flat"));
        assert_eq!(a.work, None);
        assert!(HeuristicAnnotator::default()
            .identify_anchors(&UserTimeline::new("u", vec![]).unwrap())
            .is_err());
    }

    #[test]
    fn paper_rule_examples() {
        let h = HeuristicAnnotator::default();
        let a = anchors(Some("home"), Some("work"));
        assert_eq!(h.annotate_stay(&stay("r", "restaurant", "2019-10-11T12:30:00", None), &a), Intent::EatingOut);
        assert_eq!(h.annotate_stay(&stay("home", "restaurant", "2019-10-11T12:30:00", None), &a), Intent::AtHome);
        assert_eq!(h.annotate_stay(&stay("hosp", "hospital", "2019-10-11T10:00:00", None), &a), Intent::RunningErrands);
        assert_eq!(h.annotate_stay(&stay("work", "shop", "2019-10-11T03:00:00", None), &a), Intent::Working);
        assert_eq!(h.annotate_stay(&stay("bar", "bar", "2019-10-11T23:00:00", None), &a), Intent::LeisureAndEntertainment);
        assert_eq!(h.annotate_stay(&stay("m", "Shopping Mall", "2019-10-11T15:00:00", None), &a), Intent::Shopping);
        // Dining outside meal windows is not eating out.
        assert_eq!(h.annotate_stay(&stay("r", "restaurant", "2019-10-11T15:30:00", None), &a), Intent::RunningErrands);
        // Non-anchor residence or office is an errand.
        assert_eq!(h.annotate_stay(&stay("x", "residence", "2019-10-11T02:00:00", None), &a), Intent::RunningErrands);
    }

    #[test]
    fn batch_annotation() {
        let h = HeuristicAnnotator::default();
        let empty = UserTimeline::new("u", vec![]).unwrap();
        assert!(h.annotate_timeline(&empty, &AnchorPlaces::none()).is_empty());
        let stays: Vec<_> = (0..6)
            .map(|k| stay("home", "residence", &format!("2019-10-11T{:02}:00:00", k * 4), None))
            .collect();
        let t = UserTimeline::new("u", stays).unwrap();
        let labels = h.annotate_timeline(&t, &anchors(Some("home"), None));
        assert_eq!(labels, vec![Intent::AtHome; 6]);
    }

    #[test]
    fn category_map_from_toml() {
        let map = CategoryMap::from_toml_str("\"Noodle Shop\" = \"dining\"\nclinic = \"other\"\n").unwrap();
        assert_eq!(map.class_of("noodle shop"), RuleClass::Dining);
        assert_eq!(map.class_of("Clinic"), RuleClass::Other);
        assert_eq!(map.class_of("unlisted"), RuleClass::Other);
        assert!(CategoryMap::from_toml_str("x = \"castle\"").is_err());
        let default = CategoryMap::default();
        let back = CategoryMap::from_toml_str(&default.to_toml_string()).unwrap();
        assert_eq!(back, default);
    }

    #[test]
    fn wrapping_window() {
        let w = DayWindow::new((21, 0), (8, 0));
        assert!(w.contains(NaiveTime::from_hms_opt(23, 0, 0).unwrap()));
        assert!(w.contains(NaiveTime::from_hms_opt(3, 0, 0).unwrap()));
        assert!(!w.contains(NaiveTime::from_hms_opt(8, 0, 0).unwrap()));
        assert!(!w.contains(NaiveTime::from_hms_opt(12, 0, 0).unwrap()));
    }
}
