//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use candle_core::DType;
use chrono::NaiveDateTime;
use limp_core::a2i::{
    render_feature_prompt, render_hwi_prompt, render_intent_prompt, render_task1_prompt, render_task2_prompt,
    run_a2i, A2iConfig, Fault, FaultInjector, InsightSet, LabelSource, MockBackend, NoiseProfile, PromptVariant,
};
use limp_core::annotator::{AnchorPlaces, HeuristicAnnotator, PoiRef};
use limp_core::data::{
    build_timelines, compute_intent_stats, compute_poi_stats, sliding_windows, StayRecord, UserTimeline,
};
use limp_core::evaluation::{acc_at_k, intent_metrics, mrr_at_5, run_prompt_ablation, RankOutcome};
use limp_core::finetune::{
    build_finetune_records, export_jsonl, read_jsonl, sample_finetune_users, stated_stay_count, parse_task1_answer,
    parse_task2_answer, validate_record, ExportedRecord, Task, UserAnnotation,
};
use limp_core::intentprob::{distribution_table, intent_probabilities, IntentHistory, KernelParams};
use limp_core::synthgen::{generate_world, simulate, stay_records, true_labels};
use limp_core::{Intent, NUM_INTENTS};
use limp_predictor::diagnostics::{causality_probe, gradient_check, output_bits, overfit_one_batch};
use limp_predictor::{
    build_dataset, checkpoint, run_model_ablation, train, DatasetOptions, IntentMode, IntentModel, PredictorConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn run_criterion(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over the {}s budget", budget.as_secs())),
        Err(e) => (false, e),
    };
    println!(
        "criterion {id} {name}: {} ({detail}; {:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

// Criterion 1: intent kernel against a direct per-minute evaluation.

const DAY: f64 = 86_400.0;

/// The triangular weight of event `i`, written out from the definition.
fn oracle_hat(t: f64, i: usize, times: &[f64], t_max: f64) -> f64 {
    let ti = times[i];
    let tb = if i == 0 { ti - t_max } else { times[i - 1].max(ti - t_max) };
    let te = if i + 1 == times.len() { ti + t_max } else { times[i + 1].min(ti + t_max) };
    if t >= tb && t <= ti && ti > tb {
        (t - tb) / (ti - tb)
    } else if t >= ti && t <= te && te > ti {
        (te - t) / (te - ti)
    } else {
        0.0
    }
}

fn oracle_distribution(t0: f64, events: &[(f64, Intent)], t_max: f64) -> [f64; NUM_INTENTS] {
    let times: Vec<f64> = events.iter().map(|e| e.0).collect();
    let lo = ((times[0] - t_max - t0) / DAY).floor() as i64 - 1;
    let hi = ((times[times.len() - 1] + t_max - t0) / DAY).ceil() as i64 + 1;
    let mut mass = [0.0; NUM_INTENTS];
    for k in lo..=hi {
        let t = t0 + k as f64 * DAY;
        for (i, e) in events.iter().enumerate() {
            mass[e.1.index()] += oracle_hat(t, i, &times, t_max);
        }
    }
    let total: f64 = mass.iter().sum();
    if total == 0.0 {
        return [1.0 / NUM_INTENTS as f64; NUM_INTENTS];
    }
    mass.map(|m| m / total)
}

fn kernel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let base = 19_000.0 * DAY;
    for h in 0..200 {
        let n = rng.random_range(1..=50);
        let hours = rng.random_range(1.0..=8.0);
        let span = rng.random_range(0.2..10.0) * DAY;
        let mut events: Vec<(f64, Intent)> = (0..n)
            .map(|_| {
                (
                    base + rng.random_range(0.0..span),
                    Intent::ALL[rng.random_range(0..NUM_INTENTS)],
                )
            })
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let params = KernelParams::with_hours(hours).map_err(err)?;
        let history = IntentHistory::new(format!("u{h}"), events.clone()).map_err(err)?;
        let table = distribution_table(&history, &params, 60.0).map_err(err)?;
        check(table.rows.len() == 1440, || format!("{} rows", table.rows.len()))?;
        for m in 0..1440 {
            let t0 = 60.0 * m as f64;
            let pairs = [
                (intent_probabilities(t0, &history, &params), oracle_distribution(t0, &events, params.t_max)),
                (table.rows[m], oracle_distribution(t0 + 30.0, &events, params.t_max)),
            ];
            for (got, want) in pairs {
                let sum: f64 = got.iter().sum();
                check((sum - 1.0).abs() < 1e-9 && got.iter().all(|&p| p >= 0.0), || {
                    format!("history {h} minute {m}: {got:?} is not a distribution")
                })?;
                for j in 0..NUM_INTENTS {
                    worst = worst.max((got[j] - want[j]).abs());
                }
            }
        }
    }
    check(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("200 histories x 1440 minutes, max deviation {worst:.1e}"))
}

// Criterion 2: ranking and classification metrics against brute force.

fn brute_rank(scores: &[f32], target: usize) -> Option<usize> {
    if target >= scores.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps index order among equal scores.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    order.iter().position(|&i| i == target).map(|p| p + 1)
}

struct BruteClass {
    accuracy: f64,
    macro_p: f64,
    macro_r: f64,
    macro_f1: f64,
    weighted_p: f64,
    weighted_f1: f64,
    counts: [[u64; NUM_INTENTS]; NUM_INTENTS],
}

fn brute_classification(pred: &[Intent], truth: &[Intent]) -> BruteClass {
    let n = pred.len() as f64;
    let mut counts = [[0u64; NUM_INTENTS]; NUM_INTENTS];
    for (p, t) in pred.iter().zip(truth) {
        counts[t.index()][p.index()] += 1;
    }
    let mut out = BruteClass {
        accuracy: pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / n,
        macro_p: 0.0,
        macro_r: 0.0,
        macro_f1: 0.0,
        weighted_p: 0.0,
        weighted_f1: 0.0,
        counts,
    };
    for c in Intent::ALL {
        let tp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count() as f64;
        let predicted = pred.iter().filter(|p| **p == c).count() as f64;
        let support = truth.iter().filter(|t| **t == c).count() as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        out.macro_p += p / NUM_INTENTS as f64;
        out.macro_r += r / NUM_INTENTS as f64;
        out.macro_f1 += f1 / NUM_INTENTS as f64;
        out.weighted_p += p * support / n;
        out.weighted_f1 += f1 * support / n;
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    for f in 0..1000 {
        let count = rng.random_range(1..=200);
        let mut outcomes = Vec::with_capacity(count);
        let mut ranks = Vec::with_capacity(count);
        for _ in 0..count {
            let v = rng.random_range(1..=30);
            // Coarse scores so ties are common.
            let scores: Vec<f32> = (0..v).map(|_| rng.random_range(0..8) as f32 * 0.5).collect();
            let target = rng.random_range(0..v + 2);
            let o = RankOutcome::from_scores(&scores, target);
            let r = brute_rank(&scores, target);
            check(o.rank() == r, || format!("fixture {f}: rank {:?} vs {r:?}", o.rank()))?;
            outcomes.push(o);
            ranks.push(r);
        }
        let acc = |k: usize| ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / count as f64;
        let mrr = ranks
            .iter()
            .map(|r| match r {
                Some(r) if *r <= 5 => 1.0 / *r as f64,
                _ => 0.0,
            })
            .sum::<f64>()
            / count as f64;
        let extra = rng.random_range(1..=40);
        let mut got = Vec::new();
        for k in [1, 5, 10, extra] {
            let a = acc_at_k(&outcomes, k).map_err(err)?;
            check(close(a, acc(k)), || format!("fixture {f}: Acc@{k} {a} vs {}", acc(k)))?;
            got.push(a);
        }
        let m = mrr_at_5(&outcomes).map_err(err)?;
        check(close(m, mrr), || format!("fixture {f}: MRR@5 {m} vs {mrr}"))?;
        check(got[0] <= got[1] && got[1] <= got[2], || format!("fixture {f}: not monotone {got:?}"))?;
        check(got[0] <= m + 1e-15 && m <= got[1] + 1e-15, || format!("fixture {f}: MRR@5 {m} outside [{}, {}]", got[0], got[1]))?;

        let len = rng.random_range(1..=300);
        let classes = rng.random_range(1..=NUM_INTENTS);
        let truth: Vec<Intent> = (0..len).map(|_| Intent::ALL[rng.random_range(0..classes)]).collect();
        let pred: Vec<Intent> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.6) { t } else { Intent::ALL[rng.random_range(0..NUM_INTENTS)] })
            .collect();
        let m = intent_metrics(&pred, &truth).map_err(err)?;
        let b = brute_classification(&pred, &truth);
        let pairs = [
            ("accuracy", m.accuracy, b.accuracy),
            ("macro precision", m.macro_precision, b.macro_p),
            ("macro recall", m.macro_recall, b.macro_r),
            ("macro F1", m.macro_f1, b.macro_f1),
            ("weighted precision", m.weighted_precision, b.weighted_p),
            ("weighted recall", m.weighted_recall, b.accuracy),
            ("weighted F1", m.weighted_f1, b.weighted_f1),
        ];
        for (name, x, y) in pairs {
            check(close(x, y), || format!("fixture {f}: {name} {x} vs {y}"))?;
        }
        check(m.confusion.counts == b.counts, || format!("fixture {f}: confusion differs"))?;
    }
    Ok("1000 fixtures agree; Acc@1 <= MRR@5 <= Acc@5 <= Acc@10".into())
}

// Criterion 3: predictor numerics.

fn small_world(users: usize, days: usize, seed: u64) -> (BTreeMap<String, UserTimeline>, BTreeMap<String, Vec<Intent>>) {
    let world = generate_world(users, users * 4 + 10, seed).unwrap();
    let sim = simulate(&world, days, seed).unwrap();
    let timelines = build_timelines(stay_records(&sim).cloned());
    let ann = HeuristicAnnotator::default();
    let labels = timelines.iter().map(|(u, t)| (u.clone(), ann.label_timeline(t).1)).collect();
    (timelines, labels)
}

fn predictor_checks() -> Outcome {
    let grad = gradient_check(&PredictorConfig::toy(), 12, 3).map_err(err)?;
    let rel = grad.max_relative_error();
    check(rel < 1e-3, || format!("gradient relative error {rel:e}"))?;

    let mut worst: f64 = 0.0;
    for mode in [IntentMode::Weighted, IntentMode::None] {
        let m = IntentModel::new(&PredictorConfig::compact(), mode, 4, 40, 6, DType::F32).map_err(err)?;
        worst = worst.max(causality_probe(&m, 17).map_err(err)?);
    }
    check(worst == 0.0, || format!("future positions leak: {worst:e}"))?;

    let cfg = PredictorConfig {
        epochs: 200,
        batch_size: 1,
        ..PredictorConfig::compact()
    };
    let over = overfit_one_batch(&cfg, IntentMode::Weighted, 8).map_err(err)?;
    check(over.epochs <= 200 && over.ratio() < 0.05, || format!("overfit {over:?}"))?;

    let (timelines, labels) = small_world(5, 40, 4);
    let ds = build_dataset(&timelines, &labels, &DatasetOptions::default()).map_err(err)?;
    let tiny = PredictorConfig {
        poi_dim: 8,
        user_dim: 8,
        category_dim: 4,
        time_dim: 4,
        intent_dim: 4,
        ff_dim: 32,
        epochs: 2,
        ..PredictorConfig::default()
    };
    let trained = train(&ds, &tiny, IntentMode::Weighted).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let first = dir.path().join("a.json");
    let second = dir.path().join("b.json");
    checkpoint::save(&trained, &first).map_err(err)?;
    let loaded = checkpoint::load(&first).map_err(err)?;
    checkpoint::save(&loaded, &second).map_err(err)?;
    let same_outputs = output_bits(&trained.model, &ds.test).map_err(err)? == output_bits(&loaded.model, &ds.test).map_err(err)?;
    let same_bytes = std::fs::read(&first).map_err(err)? == std::fs::read(&second).map_err(err)?;
    check(same_outputs && same_bytes, || format!("round trip: outputs {same_outputs}, bytes {same_bytes}"))?;
    Ok(format!(
        "gradient rel err {rel:.1e}, causal, overfit ratio {:.4}, checkpoint bitwise stable",
        over.ratio()
    ))
}

// Criterion 4: intent modes on the synthetic world.

const ABLATION_EPOCHS: usize = 10;

fn synthetic_world() -> Outcome {
    let modes = [IntentMode::Weighted, IntentMode::None, IntentMode::MaxProb];
    let mut sums = [0.0; 3];
    let mut per_seed = Vec::new();
    for seed in 1..=3u64 {
        let world = generate_world(50, 200, seed).map_err(err)?;
        let sim = simulate(&world, 60, seed).map_err(err)?;
        let timelines = build_timelines(stay_records(&sim).cloned());
        let ann = HeuristicAnnotator::default();
        let labels = timelines.iter().map(|(u, t)| (u.clone(), ann.label_timeline(t).1)).collect();
        let ds = build_dataset(&timelines, &labels, &DatasetOptions::default()).map_err(err)?;
        let cfg = PredictorConfig {
            epochs: ABLATION_EPOCHS,
            ..PredictorConfig::compact()
        };
        let rows = run_model_ablation(&ds, &modes, &cfg, seed).map_err(err)?;
        let acc: Vec<f64> = rows.iter().map(|r| r.metrics.acc1).collect();
        for (s, a) in sums.iter_mut().zip(&acc) {
            *s += a;
        }
        per_seed.push(format!("seed {seed}: {:.3}/{:.3}/{:.3}", acc[0], acc[1], acc[2]));
    }
    let [weighted, none, max_prob] = sums.map(|s| s / 3.0);
    let detail = format!(
        "mean Acc@1 weighted {weighted:.4}, none {none:.4}, max-prob {max_prob:.4} [{}]",
        per_seed.join(", ")
    );
    check(weighted - none >= 0.03, || format!("{detail}: intent gain {:.4} < 0.03", weighted - none))?;
    check(weighted >= max_prob - 0.01, || format!("{detail}: weighted trails max-prob"))?;
    Ok(detail)
}

// Criterion 5: mock annotation, prompt goldens and fault handling.

fn ts(s: &str) -> NaiveDateTime {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
}

fn stay(poi: &str, name: &str, category: &str, from: &str, to: Option<&str>) -> StayRecord {
    StayRecord {
        user_id: "u1".into(),
        poi_id: poi.into(),
        poi_name: name.into(),
        category: category.into(),
        arrival_time: ts(from),
        departure_time: to.map(ts),
    }
}

fn golden(name: &str) -> String {
    let path = format!("{}/../core/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn golden_prompts() -> Result<usize, String> {
    let day = vec![
        stay("p1", "poi name1", "residence", "2019-10-11 00:30:00", Some("2019-10-11 07:30:00")),
        stay("p2", "poi name2", "office", "2019-10-11 08:15:00", Some("2019-10-11 15:30:00")),
        stay("p3", "poi name3", "restaurant", "2019-10-11 15:45:00", Some("2019-10-11 17:00:00")),
    ];
    let mut stays = day.clone();
    stays.push(stay("p1", "poi name1", "residence", "2019-10-11 19:00:00", Some("2019-10-11 23:59:00")));
    let timeline = UserTimeline::new("u1", stays).map_err(err)?;
    let insights = InsightSet::new(
        vec![
            "High percentage distribution: 43.17%".into(),
            "Average visit: 2.54 times".into(),
            "Peak time distribution: Early morning (0-3 AM) and late evening (8-11 PM)".into(),
        ],
        vec![
            "Moderate percentage distribution: 15.23%".into(),
            "User's weekday anchor".into(),
            "Presence peaks at 9 AM and 10 AM, indicating start of workday".into(),
        ],
        vec!["Presence peaks at 11 AM, indicating common time for running errands".into()],
        "fixture",
    )
    .map_err(err)?;
    let anchors = AnchorPlaces {
        home: Some(PoiRef {
            poi_id: "p1".into(),
            poi_name: "poi name1".into(),
        }),
        work: Some(PoiRef {
            poi_id: "p2".into(),
            poi_name: "poi name2".into(),
        }),
        rationale: String::new(),
    };
    let feature_stays = vec![
        stay("h", "home", "residence", "2019-10-11 00:30:00", None),
        stay("w", "work", "office", "2019-10-11 08:15:00", None),
    ];
    let feature_stats =
        compute_intent_stats(feature_stays.iter().zip([Intent::AtHome, Intent::Working])).map_err(err)?;
    let poi_stats = compute_poi_stats(&timeline).map_err(err)?;
    let day2 = vec![
        stay("p1", "poi name1", "High School", "2019-11-18 01:00:00", None),
        stay("p1", "poi name1", "High School", "2019-11-18 13:15:00", None),
        stay("p2", "poi name2", "Educational Facilities", "2019-11-19 00:00:00", None),
    ];
    let rendered = [
        ("feature.txt", render_feature_prompt(&feature_stats)),
        ("hwi_full.txt", render_hwi_prompt(&poi_stats, Some(&insights))),
        ("hwi_nfe.txt", render_hwi_prompt(&poi_stats, None)),
        ("intent_a2i.txt", render_intent_prompt(&day, &anchors, PromptVariant::A2i).map_err(err)?),
        ("intent_nhwi.txt", render_intent_prompt(&day, &anchors, PromptVariant::Nhwi).map_err(err)?),
        ("intent_zs.txt", render_intent_prompt(&day, &AnchorPlaces::none(), PromptVariant::Zs).map_err(err)?),
        ("task1.txt", render_task1_prompt(&poi_stats, &insights)),
        ("task2.txt", render_task2_prompt(&day2, "poi name2", "poi name1").map_err(err)?),
    ];
    for (name, text) in &rendered {
        check(text.as_bytes() == golden(name).as_bytes(), || format!("{name} differs from its golden"))?;
    }
    Ok(rendered.len())
}

fn annotation_fidelity() -> Outcome {
    let world = generate_world(20, 100, 5).map_err(err)?;
    let sim = simulate(&world, 14, 5).map_err(err)?;
    let data = build_timelines(stay_records(&sim).cloned());
    let ann = HeuristicAnnotator::default();
    let expected: BTreeMap<String, Vec<Intent>> =
        data.iter().map(|(u, t)| (u.clone(), ann.label_timeline(t).1)).collect();
    let seed_users: Vec<(&StayRecord, Intent)> = data
        .iter()
        .take(5)
        .flat_map(|(u, t)| t.stays().iter().zip(expected[u].iter().copied()))
        .collect();
    let stats = compute_intent_stats(seed_users).map_err(err)?;
    let mock = MockBackend::from_timelines(ann.clone(), &data);
    let config = A2iConfig::default();
    let total: usize = data.values().map(|t| t.len()).sum();

    let agreement = |run: &limp_core::a2i::A2iRun, source: LabelSource| -> Result<usize, String> {
        let mut same = 0;
        for (user, want) in &expected {
            let r = run.results.get(user).ok_or_else(|| format!("user {user} missing"))?;
            check(r.labels.len() == want.len(), || format!("user {user}: label count"))?;
            for (l, w) in r.labels.iter().zip(want) {
                if l.intent == Some(*w) && l.source == source {
                    same += 1;
                }
            }
        }
        Ok(same)
    };

    let clean = run_a2i(&data, Some(&stats), &mock, PromptVariant::A2i, &config).map_err(err)?;
    let same = agreement(&clean, LabelSource::Backend)?;
    check(same == total, || format!("mock matches the heuristic on {same}/{total} stays"))?;

    let goldens = golden_prompts()?;

    let mut retried = 0;
    for fault in [Fault::Garbage, Fault::Transport] {
        let faulty = FaultInjector::new(&mock, 2, fault);
        let run = run_a2i(&data, Some(&stats), &faulty, PromptVariant::A2i, &config).map_err(err)?;
        check(run.insights.is_some(), || format!("{fault:?}: insight stage not recovered"))?;
        let same = agreement(&run, LabelSource::Backend)?;
        check(same == total, || format!("{fault:?}: {same}/{total} stays recovered after retries"))?;
        retried += run.total_retries();
        check(run.total_retries() > 0, || format!("{fault:?}: no retries recorded"))?;
    }
    let hopeless = FaultInjector::new(&mock, 100, Fault::Garbage);
    let run = run_a2i(&data, Some(&stats), &hopeless, PromptVariant::A2i, &config).map_err(err)?;
    let same = agreement(&run, LabelSource::Fallback)?;
    check(same == total, || format!("exhausted retries reconciled {same}/{total} stays"))?;

    Ok(format!(
        "{total}/{total} stays match, {goldens} goldens byte-identical, {retried} retries recovered, fallback reconciled"
    ))
}

// Criterion 6: prompt variants under the noisy mock.

fn noisy_ordering() -> Outcome {
    let world = generate_world(40, 160, 13).map_err(err)?;
    let sim = simulate(&world, 14, 13).map_err(err)?;
    let truth = true_labels(&sim);
    let data = build_timelines(stay_records(&sim).cloned());
    let labeled: Vec<_> = sim.values().flatten().take(2000).map(|l| (&l.stay, l.true_intent)).collect();
    let stats = compute_intent_stats(labeled).map_err(err)?;
    let mut lines = Vec::new();
    for noise_seed in 1..=3 {
        let mock = MockBackend::from_timelines(HeuristicAnnotator::default(), &data)
            .with_noise(NoiseProfile::standard(noise_seed));
        let rows = run_prompt_ablation(&data, &truth, Some(&stats), &mock, &PromptVariant::ALL, &A2iConfig::default())
            .map_err(err)?;
        let acc: Vec<f64> = rows.iter().map(|r| r.metrics.accuracy).collect();
        let text = format!("{:.3} >= {:.3} >= {:.3} >= {:.3}", acc[0], acc[1], acc[2], acc[3]);
        check(acc.windows(2).all(|w| w[0] >= w[1]), || format!("noise seed {noise_seed}: {text} does not hold"))?;
        lines.push(text);
    }
    Ok(format!("A2I >= NFE >= NHWI >= ZS: {}", lines.join("; ")))
}

// Criterion 7: instruction-tuning export.

fn finetune_export() -> Outcome {
    let world = generate_world(110, 440, 21).map_err(err)?;
    let sim = simulate(&world, 14, 21).map_err(err)?;
    let data = build_timelines(stay_records(&sim).cloned());
    let ann = HeuristicAnnotator::default();
    let labeled: BTreeMap<String, (AnchorPlaces, Vec<Intent>)> =
        data.iter().map(|(u, t)| (u.clone(), ann.label_timeline(t))).collect();
    let pairs: Vec<(&StayRecord, Intent)> = data
        .iter()
        .take(10)
        .flat_map(|(u, t)| t.stays().iter().zip(labeled[u].1.iter().copied()))
        .collect();
    let stats = compute_intent_stats(pairs).map_err(err)?;
    let mock = MockBackend::from_timelines(ann.clone(), &data);
    let insights = run_a2i(&BTreeMap::new(), Some(&stats), &mock, PromptVariant::A2i, &A2iConfig::default())
        .map_err(err)?
        .insights
        .ok_or("no insights")?;

    let sampled = sample_finetune_users(&data, 100, 0.2, 7).map_err(err)?;
    check(sampled.len() == 100, || format!("{} users sampled", sampled.len()))?;
    let annotations: BTreeMap<String, UserAnnotation<'_>> = sampled
        .keys()
        .map(|u| {
            let (a, l) = &labeled[u];
            (u.clone(), UserAnnotation { anchors: a, labels: l })
        })
        .collect();
    let records = build_finetune_records(&sampled, &annotations, &insights, "acceptance").map_err(err)?;
    let (task1, task2): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| r.task == Task::Task1);
    check(!task1.is_empty() && !task2.is_empty(), || "a task has no records".into())?;

    let dir = tempfile::tempdir().map_err(err)?;
    let mut checked = 0;
    for (name, recs) in [("task1.jsonl", &task1), ("task2.jsonl", &task2)] {
        let path = dir.path().join(name);
        let n = export_jsonl(recs, &path).map_err(err)?;
        check(n == recs.len(), || format!("{name}: wrote {n} of {}", recs.len()))?;
        // Every line must be exactly the three-field schema.
        for line in std::fs::read_to_string(&path).map_err(err)?.lines() {
            let v: serde_json::Value = serde_json::from_str(line).map_err(err)?;
            let keys: Vec<&String> = v.as_object().ok_or("line is not an object")?.keys().collect();
            check(keys.len() == 3 && ["answer", "prompt", "task"].iter().all(|k| v.get(*k).is_some_and(|x| x.is_string())), || {
                format!("{name}: bad schema {keys:?}")
            })?;
        }
        let back = read_jsonl(&path).map_err(err)?;
        let want: Vec<ExportedRecord> = recs.iter().map(ExportedRecord::from).collect();
        check(back == want, || format!("{name}: records do not round-trip"))?;
        for r in &back {
            validate_record(r).map_err(err)?;
            match r.task {
                Task::Task1 => {
                    parse_task1_answer(&r.answer).map_err(err)?;
                }
                Task::Task2 => {
                    let stated = stated_stay_count(&r.prompt).ok_or("task-2 prompt states no stay count")?;
                    let answer = parse_task2_answer(&r.answer).map_err(err)?;
                    check(answer.len() == stated, || format!("answer has {} labels for {stated} stays", answer.len()))?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "100 users, {} task-1 and {} task-2 records valid and round-tripped ({checked} checked)",
        task1.len(),
        task2.len()
    ))
}

// Criterion 8: sliding-window counts and overlaps.

fn window_law() -> Outcome {
    let mut cases = 0;
    for m in 2..=40usize {
        let stays: Vec<StayRecord> = (0..m)
            .map(|i| StayRecord {
                user_id: "w".into(),
                poi_id: format!("p{i}"),
                poi_name: format!("poi {i}"),
                category: "office".into(),
                arrival_time: ts("2024-01-01 00:00:00") + chrono::Duration::hours(i as i64),
                departure_time: None,
            })
            .collect();
        let timeline = UserTimeline::new("w", stays.clone()).map_err(err)?;
        for n in 2..=20usize {
            let windows = sliding_windows(&timeline, n).map_err(err)?;
            // Brute force: every start whose window fits.
            let brute: Vec<&[StayRecord]> = (0..m).filter(|s| s + n <= m).map(|s| &stays[s..s + n]).collect();
            let expected = (m + 1).saturating_sub(n);
            check(windows.len() == brute.len() && brute.len() == expected, || {
                format!("m={m} n={n}: {} windows, brute {}, law {expected}", windows.len(), brute.len())
            })?;
            for (w, b) in windows.iter().zip(&brute) {
                check(w.stays == *b, || format!("m={m} n={n}: window {} differs", w.window_index))?;
            }
            for pair in windows.windows(2) {
                let overlap = (0..n)
                    .filter(|&i| pair[1].stays.iter().any(|s| s.poi_id == pair[0].stays[i].poi_id))
                    .count();
                check(overlap == n - 1 && pair[0].stays[1..] == pair[1].stays[..n - 1], || {
                    format!("m={m} n={n}: overlap {overlap}")
                })?;
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} (m, n) pairs: count m-n+1, overlap n-1"))
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        run_criterion(1, "kernel oracle", s(60), kernel_oracle),
        run_criterion(2, "metric oracles", s(10), metric_oracles),
        run_criterion(3, "predictor numerics", s(300), predictor_checks),
        run_criterion(4, "synthetic world", s(1800), synthetic_world),
        run_criterion(5, "annotation fidelity", s(60), annotation_fidelity),
        run_criterion(6, "noisy prompt ordering", s(120), noisy_ordering),
        run_criterion(7, "fine-tune export", s(30), finetune_export),
        run_criterion(8, "window law", s(5), window_law),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
