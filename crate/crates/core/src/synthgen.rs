//! Synthetic users with home/work anchors and intent-driven daily routines.
//!
//! Every stay carries the intent it was generated for. Each non-anchor
//! intent draws its POI from a small per-user pool with skewed preferences,
//! so the intent of the next movement says a lot about where it goes.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::StayRecord;
use crate::error::{invalid, Result};
use crate::intent::Intent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiCategory {
    Residence,
    Office,
    Restaurant,
    Entertainment,
    Shop,
    Errand,
}

impl PoiCategory {
    pub const ALL: [PoiCategory; 6] = [
        PoiCategory::Residence,
        PoiCategory::Office,
        PoiCategory::Restaurant,
        PoiCategory::Entertainment,
        PoiCategory::Shop,
        PoiCategory::Errand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoiCategory::Residence => "residence",
            PoiCategory::Office => "office",
            PoiCategory::Restaurant => "restaurant",
            PoiCategory::Entertainment => "entertainment",
            PoiCategory::Shop => "shop",
            PoiCategory::Errand => "errand",
        }
    }

    fn share(self) -> f64 {
        match self {
            PoiCategory::Residence => 0.30,
            PoiCategory::Office => 0.15,
            PoiCategory::Restaurant => 0.20,
            PoiCategory::Entertainment => 0.12,
            PoiCategory::Shop => 0.12,
            PoiCategory::Errand => 0.11,
        }
    }

    fn kinds(self) -> &'static [&'static str] {
        match self {
            PoiCategory::Residence => &["Apartments", "Residence", "Garden Homes"],
            PoiCategory::Office => &["Office Tower", "Tech Park", "Business Center"],
            PoiCategory::Restaurant => &["Noodle House", "Dumpling Kitchen", "Cafe", "Hot Pot"],
            PoiCategory::Entertainment => &["Cinema", "Game Center", "Gym", "KTV"],
            PoiCategory::Shop => &["Supermarket", "Shopping Mall", "Bookstore"],
            PoiCategory::Errand => &["Hospital", "Bank", "Post Office", "Pharmacy"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPoi {
    pub poi_id: String,
    pub poi_name: String,
    pub category: PoiCategory,
}

/// Per-user routine: hour means (decimal hours), jitter, and propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineParams {
    pub commute_hour: f64,
    pub lunch_hour: f64,
    pub leave_hour: f64,
    pub jitter_hours: f64,
    pub p_breakfast_out: f64,
    pub p_lunch_out: f64,
    /// Weekday evening after work: home, dinner out, shopping, leisure, errand.
    pub evening: [f64; 5],
    /// Habitual hours between leaving work and starting each evening outing:
    /// dinner out, shopping, leisure, errand. Weekend outings are offset by
    /// the same habits.
    pub evening_delay: [f64; 4],
    /// Chance of a weekend leisure/shopping outing in each half of the day.
    pub p_weekend_outing: f64,
}

/// POI pools per non-anchor intent, most preferred first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPools {
    pub eating_out: Vec<usize>,
    pub leisure: Vec<usize>,
    pub shopping: Vec<usize>,
    pub errands: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthUser {
    pub user_id: String,
    /// Index into [`SyntheticWorld::pois`].
    pub home: usize,
    pub work: usize,
    pub routine: RoutineParams,
    pub pools: IntentPools,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub pois: Vec<SynthPoi>,
    pub users: Vec<SynthUser>,
    pub rng_seed: u64,
}

impl SyntheticWorld {
    pub fn poi(&self, index: usize) -> &SynthPoi {
        &self.pois[index]
    }

    pub fn home_of(&self, user: &SynthUser) -> &SynthPoi {
        &self.pois[user.home]
    }

    pub fn work_of(&self, user: &SynthUser) -> &SynthPoi {
        &self.pois[user.work]
    }

    pub fn check_invariants(&self) -> Result<()> {
        for u in &self.users {
            let (home, work) = (self.pois.get(u.home), self.pois.get(u.work));
            match (home, work) {
                (Some(h), Some(w)) => {
                    if h.category != PoiCategory::Residence || w.category != PoiCategory::Office {
                        return Err(invalid(format!("user {} has miscategorized anchors", u.user_id)));
                    }
                }
                _ => return Err(invalid(format!("user {} references a missing POI", u.user_id))),
            }
            let pools = [&u.pools.eating_out, &u.pools.leisure, &u.pools.shopping, &u.pools.errands];
            if pools.iter().any(|p| p.is_empty() || p.iter().any(|&i| i >= self.pois.len())) {
                return Err(invalid(format!("user {} has an invalid POI pool", u.user_id)));
            }
        }
        Ok(())
    }
}

/// Builds POIs covering every category and users with anchors, routines and
/// per-intent POI pools. Deterministic for a fixed seed.
pub fn generate_world(num_users: usize, num_pois: usize, seed: u64) -> Result<SyntheticWorld> {
    if num_users < 1 {
        return Err(invalid("need at least one user"));
    }
    if num_pois < 10 {
        return Err(invalid(format!(
            "need at least 10 POIs to cover every category, got {num_pois}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut counts: Vec<usize> = PoiCategory::ALL
        .iter()
        .map(|c| ((num_pois as f64 * c.share()).floor() as usize).max(1))
        .collect();
    let assigned: usize = counts.iter().sum();
    if assigned <= num_pois {
        counts[0] += num_pois - assigned;
    } else {
        counts[0] -= assigned - num_pois;
    }

    let mut pois = Vec::with_capacity(num_pois);
    let mut by_category: BTreeMap<PoiCategory, Vec<usize>> = BTreeMap::new();
    for (category, count) in PoiCategory::ALL.iter().zip(&counts) {
        let kinds = category.kinds();
        for k in 0..*count {
            let index = pois.len();
            pois.push(SynthPoi {
                poi_id: format!("poi{index:04}"),
                poi_name: format!("{} {}", kinds[k % kinds.len()], k / kinds.len() + 1),
                category: *category,
            });
            by_category.entry(*category).or_default().push(index);
        }
    }

    let pool = |category: PoiCategory, size: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let candidates = &by_category[&category];
        let size = size.min(candidates.len());
        sample(rng, candidates.len(), size)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    };

    let mut users = Vec::with_capacity(num_users);
    for u in 0..num_users {
        let home = pool(PoiCategory::Residence, 1, &mut rng)[0];
        let work = pool(PoiCategory::Office, 1, &mut rng)[0];
        let mut evening = [0.0; 5];
        for w in evening.iter_mut() {
            *w = rng.random_range(0.2..1.0);
        }
        let total: f64 = evening.iter().sum();
        evening.iter_mut().for_each(|w| *w /= total);
        // Distinct habitual lags, so a user's evening activities are apart in time.
        let mut slots = [0.4, 1.1, 1.8, 2.5];
        slots.shuffle(&mut rng);
        let routine = RoutineParams {
            commute_hour: rng.random_range(7.5..9.5),
            lunch_hour: rng.random_range(11.5..13.0),
            leave_hour: rng.random_range(17.0..19.0),
            jitter_hours: rng.random_range(0.1..0.3),
            p_breakfast_out: rng.random_range(0.05..0.3),
            p_lunch_out: rng.random_range(0.3..0.8),
            evening,
            evening_delay: slots.map(|lag| lag + rng.random_range(-0.15..0.15)),
            p_weekend_outing: rng.random_range(0.5..0.95),
        };
        let pools = IntentPools {
            eating_out: pool(PoiCategory::Restaurant, 3, &mut rng),
            leisure: pool(PoiCategory::Entertainment, 2, &mut rng),
            shopping: pool(PoiCategory::Shop, 2, &mut rng),
            errands: pool(PoiCategory::Errand, 2, &mut rng),
        };
        users.push(SynthUser {
            user_id: format!("user{u:03}"),
            home,
            work,
            routine,
            pools,
        });
    }
    let world = SyntheticWorld {
        pois,
        users,
        rng_seed: seed,
    };
    world.check_invariants()?;
    Ok(world)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledStay {
    #[serde(flatten)]
    pub stay: StayRecord,
    pub true_intent: Intent,
}

/// One line of the labels file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub user_id: String,
    pub stay_index: usize,
    pub true_intent: Intent,
}

/// The first simulated day; a Monday.
pub fn simulation_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 10, 7).expect("valid date")
}

struct Planned {
    poi: usize,
    intent: Intent,
    arrive: f64,
    depart: f64,
}

struct DayPlanner<'a> {
    user: &'a SynthUser,
    rng: ChaCha8Rng,
    plan: Vec<Planned>,
}

fn pick_from_pool(pool: &[usize], rng: &mut ChaCha8Rng) -> usize {
    let weights: &[f64] = match pool.len() {
        1 => &[1.0],
        2 => &[0.85, 0.15],
        _ => &[0.8, 0.15, 0.05],
    };
    let mut x: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return pool[i];
        }
        x -= w;
    }
    pool[weights.len() - 1]
}

impl<'a> DayPlanner<'a> {
    /// Normal jitter truncated to three standard deviations.
    fn around(&mut self, mean: f64) -> f64 {
        let sd = self.user.routine.jitter_hours;
        let normal = Normal::new(0.0, sd).expect("positive jitter");
        loop {
            let x: f64 = normal.sample(&mut self.rng);
            if x.abs() <= 3.0 * sd {
                return mean + x;
            }
        }
    }

    fn cursor(&self) -> f64 {
        self.plan.last().map_or(0.0, |p| p.depart)
    }

    /// Appends a stay arriving no earlier than `arrive` and no earlier than a
    /// short hop after the previous departure.
    fn visit(&mut self, poi: usize, intent: Intent, arrive: f64, duration: f64) -> f64 {
        let arrive = arrive.max(self.cursor() + 0.15);
        let depart = (arrive + duration).min(23.9);
        self.plan.push(Planned {
            poi,
            intent,
            arrive,
            depart,
        });
        depart
    }

    fn pool_visit(&mut self, intent: Intent, arrive: f64, duration: f64) -> f64 {
        let pools = &self.user.pools;
        let pool = match intent {
            Intent::EatingOut => &pools.eating_out,
            Intent::LeisureAndEntertainment => &pools.leisure,
            Intent::Shopping => &pools.shopping,
            _ => &pools.errands,
        };
        let poi = pick_from_pool(pool, &mut self.rng);
        self.visit(poi, intent, arrive, duration)
    }

    fn weekday(&mut self) {
        let r = self.user.routine.clone();
        let (home, work) = (self.user.home, self.user.work);
        let wake = self.rng.random_range(0.0..0.25);
        let commute = self.around(r.commute_hour);
        let breakfast = self.rng.random::<f64>() < r.p_breakfast_out;
        let first_out = if breakfast { commute - 0.8 } else { commute - 0.3 };
        self.visit(home, Intent::AtHome, wake, (first_out - wake).max(0.5));
        if breakfast {
            let at = self.around(r.commute_hour - 0.75).clamp(6.6, 9.2);
            self.pool_visit(Intent::EatingOut, at, 0.35);
        }
        let lunch_out = self.rng.random::<f64>() < r.p_lunch_out;
        let lunch_at = self.around(r.lunch_hour).clamp(11.05, 13.6);
        let leave = self.around(r.leave_hour);
        let morning_end = if lunch_out { lunch_at - 0.1 } else { leave };
        let start = commute.max(self.cursor() + 0.2);
        self.visit(work, Intent::Working, start, (morning_end - start).max(1.0));
        if lunch_out {
            let at = lunch_at.max(self.cursor() + 0.1).min(13.9);
            let back = self.pool_visit(Intent::EatingOut, at, 0.75);
            self.visit(work, Intent::Working, back + 0.1, (leave - back).max(1.0));
        }
        let left = self.cursor();
        let out_at = |i: usize| left + r.evening_delay[i];
        let mut x: f64 = self.rng.random();
        let mut choice = 0;
        for (i, w) in r.evening.iter().enumerate() {
            if x < *w {
                choice = i;
                break;
            }
            x -= w;
            choice = i;
        }
        match choice {
            1 => {
                self.pool_visit(Intent::EatingOut, out_at(0).clamp(17.05, 20.7), 1.0);
            }
            2 => {
                let d = self.rng.random_range(0.5..1.5);
                self.pool_visit(Intent::Shopping, out_at(1), d);
            }
            3 => {
                let d = self.rng.random_range(0.5..1.5);
                self.pool_visit(Intent::LeisureAndEntertainment, out_at(2), d);
            }
            4 => {
                let d = self.rng.random_range(0.5..1.5);
                self.pool_visit(Intent::RunningErrands, out_at(3), d);
            }
            _ => {}
        }
        let back = self.cursor() + 0.3;
        self.visit(home, Intent::AtHome, back, 23.98 - back);
    }

    fn weekend(&mut self) {
        let r = self.user.routine.clone();
        let home = self.user.home;
        let wake = self.rng.random_range(0.0..0.25);
        let morning = self.rng.random::<f64>() < r.p_weekend_outing;
        let lunch_out = self.rng.random::<f64>() < r.p_lunch_out;
        let afternoon = self.rng.random::<f64>() < r.p_weekend_outing;
        let dinner_out = self.rng.random::<f64>() < (r.evening[1] * 1.5).min(1.0);
        let first_out = if morning { 9.5 } else if lunch_out { 11.0 } else { 14.0 };
        self.visit(home, Intent::AtHome, wake, first_out - wake);
        if morning {
            let intent = self.errand_like();
            let at = self.around(9.5 + 0.5 * self.habit_delay(intent));
            let d = self.rng.random_range(1.0..2.0);
            self.pool_visit(intent, at, d);
        }
        if lunch_out {
            let at = self.around(12.3).clamp(11.05, 13.6);
            if self.cursor() + 0.15 <= 13.9 {
                self.pool_visit(Intent::EatingOut, at, 1.0);
            }
        }
        if !self.plan.last().is_some_and(|p| p.poi == home) {
            let back = self.cursor() + 0.3;
            self.visit(home, Intent::AtHome, back, 1.0);
        }
        if afternoon {
            let intent = if self.rng.random::<f64>() < 0.6 {
                Intent::LeisureAndEntertainment
            } else {
                Intent::Shopping
            };
            let at = self.around(14.5 + self.habit_delay(intent));
            let d = self.rng.random_range(1.0..2.5);
            self.pool_visit(intent, at, d);
        }
        if dinner_out {
            let at = self.around(18.5).clamp(17.05, 20.7);
            if self.cursor() + 0.15 <= 20.9 {
                self.pool_visit(Intent::EatingOut, at, 1.2);
            }
        }
        if !self.plan.last().is_some_and(|p| p.poi == home) {
            let back = self.cursor() + 0.3;
            self.visit(home, Intent::AtHome, back, 23.98 - back);
        } else if let Some(last) = self.plan.last_mut() {
            last.depart = 23.98;
        }
    }

    fn habit_delay(&self, intent: Intent) -> f64 {
        let d = &self.user.routine.evening_delay;
        match intent {
            Intent::EatingOut => d[0],
            Intent::Shopping => d[1],
            Intent::LeisureAndEntertainment => d[2],
            _ => d[3],
        }
    }

    fn errand_like(&mut self) -> Intent {
        let e = &self.user.routine.evening;
        let (shop, leisure, errand) = (e[2], e[3], e[4]);
        let x = self.rng.random::<f64>() * (shop + leisure + errand);
        if x < shop {
            Intent::Shopping
        } else if x < shop + leisure {
            Intent::LeisureAndEntertainment
        } else {
            Intent::RunningErrands
        }
    }
}

fn at_hours(date: NaiveDate, hours: f64) -> NaiveDateTime {
    let minutes = (hours.clamp(0.0, 23.99) * 60.0).round() as i64;
    date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(minutes.min(24 * 60 - 1))
}

fn user_seed(seed: u64, user_index: usize) -> u64 {
    // splitmix64 step keeps per-user streams decorrelated.
    let mut z = seed ^ (user_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub type SimulatedStays = BTreeMap<String, Vec<LabeledStay>>;

/// Simulates `days` consecutive days for every user.
pub fn simulate(world: &SyntheticWorld, days: usize, seed: u64) -> Result<SimulatedStays> {
    if days < 1 {
        return Err(invalid("need at least one simulated day"));
    }
    let start = simulation_start();
    let mut out = BTreeMap::new();
    for (u, user) in world.users.iter().enumerate() {
        let mut planner = DayPlanner {
            user,
            rng: ChaCha8Rng::seed_from_u64(user_seed(seed, u)),
            plan: Vec::new(),
        };
        let mut stays: Vec<LabeledStay> = Vec::new();
        for d in 0..days {
            let date = start + Duration::days(d as i64);
            planner.plan.clear();
            match date.weekday() {
                Weekday::Sat | Weekday::Sun => planner.weekend(),
                _ => planner.weekday(),
            }
            for p in &planner.plan {
                let poi = world.poi(p.poi);
                let mut arrival = at_hours(date, p.arrive);
                if let Some(prev) = stays.last() {
                    if arrival <= prev.stay.arrival_time {
                        arrival = prev.stay.arrival_time + Duration::minutes(1);
                    }
                }
                let departure = at_hours(date, p.depart).max(arrival);
                stays.push(LabeledStay {
                    stay: StayRecord {
                        user_id: user.user_id.clone(),
                        poi_id: poi.poi_id.clone(),
                        poi_name: poi.poi_name.clone(),
                        category: poi.category.as_str().to_string(),
                        arrival_time: arrival,
                        departure_time: Some(departure),
                    },
                    true_intent: p.intent,
                });
            }
        }
        out.insert(user.user_id.clone(), stays);
    }
    Ok(out)
}

pub fn stay_records(sim: &SimulatedStays) -> impl Iterator<Item = &StayRecord> {
    sim.values().flatten().map(|l| &l.stay)
}

pub fn label_rows(sim: &SimulatedStays) -> Vec<LabelRow> {
    sim.iter()
        .flat_map(|(user, stays)| {
            stays.iter().enumerate().map(move |(i, l)| LabelRow {
                user_id: user.clone(),
                stay_index: i,
                true_intent: l.true_intent,
            })
        })
        .collect()
}

/// Per-user true intents in timeline order.
pub fn true_labels(sim: &SimulatedStays) -> BTreeMap<String, Vec<Intent>> {
    sim.iter()
        .map(|(u, stays)| (u.clone(), stays.iter().map(|l| l.true_intent).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{AnchorPlaces, HeuristicAnnotator, PoiRef};
    use crate::data::{build_timelines, StayRecord};
    use chrono::Timelike;

    #[test]
    fn world_is_deterministic() {
        assert_eq!(generate_world(5, 40, 3).unwrap(), generate_world(5, 40, 3).unwrap());
        assert_ne!(generate_world(5, 40, 3).unwrap(), generate_world(5, 40, 4).unwrap());
    }

    #[test]
    fn too_few_pois_rejected() {
        assert!(generate_world(3, 9, 0).is_err());
        assert!(generate_world(0, 50, 0).is_err());
        let w = generate_world(1, 10, 0).unwrap();
        assert_eq!(w.pois.len(), 10);
        for c in PoiCategory::ALL {
            assert!(w.pois.iter().any(|p| p.category == c));
        }
    }

    #[test]
    fn large_world_invariants() {
        let w = generate_world(100, 200, 11).unwrap();
        assert_eq!(w.pois.len(), 200);
        w.check_invariants().unwrap();
        for u in &w.users {
            assert_ne!(u.home, u.work);
            assert_eq!(w.home_of(u).category, PoiCategory::Residence);
            assert_eq!(w.work_of(u).category, PoiCategory::Office);
        }
        let ids: std::collections::HashSet<_> = w.pois.iter().map(|p| &p.poi_id).collect();
        assert_eq!(ids.len(), 200);
    }

    #[test]
    fn first_weekday_stay_is_home() {
        let w = generate_world(1, 20, 5).unwrap();
        let sim = simulate(&w, 1, 5).unwrap();
        let stays = &sim["user000"];
        assert_eq!(stays[0].true_intent, Intent::AtHome);
        assert_eq!(stays[0].stay.poi_id, w.home_of(&w.users[0]).poi_id);
        assert!(stays.iter().any(|s| s.true_intent == Intent::Working));
        assert!(simulate(&w, 0, 5).is_err());
    }

    #[test]
    fn arrivals_strictly_increase_and_eating_is_at_meal_time() {
        let w = generate_world(20, 80, 9).unwrap();
        let sim = simulate(&w, 30, 9).unwrap();
        let annot = HeuristicAnnotator::default();
        for stays in sim.values() {
            for pair in stays.windows(2) {
                assert!(pair[0].stay.arrival_time < pair[1].stay.arrival_time);
            }
            for s in stays {
                let dep = s.stay.departure_time.unwrap();
                assert!(dep >= s.stay.arrival_time);
                if s.true_intent == Intent::EatingOut {
                    assert_eq!(s.stay.category, "restaurant");
                    let t = s.stay.arrival_time.time();
                    assert!(
                        annot.config.meal_windows.iter().any(|m| m.contains(t)),
                        "eating out at {t}"
                    );
                }
                let expected_category = match s.true_intent {
                    Intent::AtHome => "residence",
                    Intent::Working => "office",
                    Intent::EatingOut => "restaurant",
                    Intent::LeisureAndEntertainment => "entertainment",
                    Intent::Shopping => "shop",
                    Intent::RunningErrands => "errand",
                };
                assert_eq!(s.stay.category, expected_category);
            }
        }
    }

    #[test]
    fn daily_propensities_are_reproduced() {
        let w = generate_world(30, 120, 21).unwrap();
        let sim = simulate(&w, 60, 21).unwrap();
        let (mut lunch_gap, mut breakfast_gap, mut home_gap) = (0.0, 0.0, 0.0);
        for user in &w.users {
            let stays = &sim[&user.user_id];
            let mut by_day: BTreeMap<NaiveDate, Vec<&LabeledStay>> = BTreeMap::new();
            for s in stays {
                by_day.entry(s.stay.arrival_date()).or_default().push(s);
            }
            let weekdays: Vec<_> = by_day
                .iter()
                .filter(|(d, _)| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
                .collect();
            let n = weekdays.len() as f64;
            let frac = |pred: &dyn Fn(&&LabeledStay) -> bool| {
                weekdays.iter().filter(|(_, day)| day.iter().any(pred)).count() as f64 / n
            };
            let lunch = frac(&|s| s.true_intent == Intent::EatingOut && (11..14).contains(&s.stay.arrival_time.hour()));
            let breakfast = frac(&|s| s.true_intent == Intent::EatingOut && s.stay.arrival_time.hour() < 10);
            let straight_home = weekdays
                .iter()
                .filter(|(_, day)| {
                    let k = day.len();
                    k >= 2 && day[k - 2].true_intent == Intent::Working
                })
                .count() as f64
                / n;
            lunch_gap += lunch - user.routine.p_lunch_out;
            breakfast_gap += breakfast - user.routine.p_breakfast_out;
            home_gap += straight_home - user.routine.evening[0];
        }
        let users = w.users.len() as f64;
        for (name, gap) in [("lunch", lunch_gap), ("breakfast", breakfast_gap), ("home", home_gap)] {
            let mean_gap = gap / users;
            assert!(mean_gap.abs() <= 0.10, "{name}: mean deviation {mean_gap}");
        }
    }

    #[test]
    fn oracle_anchors_reproduce_true_intents() {
        let w = generate_world(15, 60, 2).unwrap();
        let sim = simulate(&w, 20, 2).unwrap();
        let annot = HeuristicAnnotator::default();
        let (mut agree, mut total) = (0, 0);
        for user in &w.users {
            let oracle = AnchorPlaces {
                home: Some(PoiRef {
                    poi_id: w.home_of(user).poi_id.clone(),
                    poi_name: w.home_of(user).poi_name.clone(),
                }),
                work: Some(PoiRef {
                    poi_id: w.work_of(user).poi_id.clone(),
                    poi_name: w.work_of(user).poi_name.clone(),
                }),
                rationale: String::new(),
            };
            for s in &sim[&user.user_id] {
                total += 1;
                agree += (annot.annotate_stay(&s.stay, &oracle) == s.true_intent) as usize;
            }
        }
        assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn identified_anchors_match_generator() {
        let w = generate_world(100, 300, 17).unwrap();
        let sim = simulate(&w, 21, 17).unwrap();
        let records: Vec<StayRecord> = stay_records(&sim).cloned().collect();
        let timelines = build_timelines(records);
        let annot = HeuristicAnnotator::default();
        let hits = w
            .users
            .iter()
            .filter(|u| {
                let a = annot.identify_anchors(&timelines[&u.user_id]).unwrap();
                a.home_id() == Some(w.home_of(u).poi_id.as_str())
                    && a.work_id() == Some(w.work_of(u).poi_id.as_str())
            })
            .count();
        assert!(hits >= 98, "{hits}/100 users");
    }

    #[test]
    fn simulation_is_byte_deterministic() {
        let w = generate_world(4, 30, 8).unwrap();
        let a = serde_json::to_string(&simulate(&w, 10, 1).unwrap()).unwrap();
        let b = serde_json::to_string(&simulate(&w, 10, 1).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&simulate(&w, 10, 2).unwrap()).unwrap();
        assert_ne!(a, c);
    }
}
