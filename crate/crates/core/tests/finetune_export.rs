use std::collections::BTreeMap;

use limp_core::a2i::{run_a2i, A2iConfig, InsightSet, MockBackend, PromptVariant};
use limp_core::annotator::{AnchorPlaces, HeuristicAnnotator, PoiRef};
use limp_core::data::{build_timelines, compute_intent_stats, UserTimeline};
use limp_core::finetune::{
    build_finetune_records, build_task2_record, export_jsonl, parse_task2_answer, read_jsonl,
    sample_finetune_users, stated_stay_count, validate_record, ExportedRecord, Task, UserAnnotation,
    DEFAULT_FRACTION, DEFAULT_USER_COUNT,
};
use limp_core::synthgen::{generate_world, simulate, stay_records};
use limp_core::Intent;

fn dataset(users: usize) -> BTreeMap<String, UserTimeline> {
    let world = generate_world(users, users * 3 + 20, 31).unwrap();
    let sim = simulate(&world, 10, 31).unwrap();
    build_timelines(stay_records(&sim).cloned())
}

#[test]
fn sampling_contract() {
    assert_eq!((DEFAULT_USER_COUNT, DEFAULT_FRACTION), (100, 0.2));
    let data = dataset(12);
    let a = sample_finetune_users(&data, 5, 0.2, 7).unwrap();
    let b = sample_finetune_users(&data, 5, 0.2, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    for (user, t) in &a {
        let full = &data[user];
        let expected = (0.2 * full.len() as f64).ceil() as usize;
        assert_eq!(t.len(), expected);
        assert_eq!(t.stays(), &full.stays()[..expected]);
    }
    let whole = sample_finetune_users(&data, 12, 1.0, 0).unwrap();
    assert_eq!(whole, data);
    assert!(sample_finetune_users(&data, 13, 0.2, 0).is_err());
    assert!(sample_finetune_users(&data, 2, 0.0, 0).is_err());
}

#[test]
fn task2_record_contract() {
    let data = dataset(1);
    let t = data.values().next().unwrap();
    let (_, day) = t.day_segments()[0];
    let anchors = HeuristicAnnotator::default().identify_anchors(t).unwrap();
    let labels = HeuristicAnnotator::default().annotate_stays(day, &anchors);
    let rec = build_task2_record(day, &anchors, &labels, "run").unwrap();
    assert_eq!(rec.task, Task::Task2);
    assert_eq!(stated_stay_count(&rec.prompt), Some(day.len()));
    assert_eq!(parse_task2_answer(&rec.answer).unwrap(), labels);
    assert!(build_task2_record(&[], &anchors, &[], "run").is_err());
    assert!(build_task2_record(day, &anchors, &labels[1..], "run").is_err());
    let partial = AnchorPlaces {
        home: anchors.home.clone(),
        work: None,
        rationale: String::new(),
    };
    assert!(build_task2_record(day, &partial, &labels, "run").is_err());
}

#[test]
fn export_round_trip_and_validity() {
    let data = dataset(20);
    let annot = HeuristicAnnotator::default();
    let labeled: Vec<_> = data
        .values()
        .flat_map(|t| {
            let (_, l) = annot.label_timeline(t);
            t.stays().iter().cloned().zip(l).collect::<Vec<_>>()
        })
        .collect();
    let stats = compute_intent_stats(labeled.iter().map(|(s, l)| (s, *l))).unwrap();
    let mock = MockBackend::from_timelines(annot.clone(), &data);
    let run = run_a2i(&data, Some(&stats), &mock, PromptVariant::A2i, &A2iConfig::default()).unwrap();
    let insights: InsightSet = run.insights.clone().unwrap();
    let labels: BTreeMap<String, Vec<Intent>> = run
        .results
        .iter()
        .map(|(u, r)| (u.clone(), r.intents().into_iter().map(Option::unwrap).collect()))
        .collect();
    let mut annotations: BTreeMap<String, UserAnnotation> = run
        .results
        .iter()
        .map(|(u, r)| (u.clone(), UserAnnotation { anchors: &r.anchors, labels: &labels[u] }))
        .collect();
    // One user without a workplace must be skipped.
    let broken = AnchorPlaces {
        home: Some(PoiRef { poi_id: "x".into(), poi_name: "x".into() }),
        work: None,
        rationale: String::new(),
    };
    let first = data.keys().next().unwrap().clone();
    annotations.get_mut(&first).unwrap().anchors = &broken;

    let sampled = sample_finetune_users(&data, 20, 0.2, 3).unwrap();
    let records = build_finetune_records(&sampled, &annotations, &insights, "run-1").unwrap();
    let task1 = records.iter().filter(|r| r.task == Task::Task1).count();
    assert_eq!(task1, 19);
    assert!(records.iter().all(|r| r.user_id != first));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ft.jsonl");
    assert_eq!(export_jsonl(&records, &path).unwrap(), records.len());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), records.len());
    let back = read_jsonl(&path).unwrap();
    let expected: Vec<ExportedRecord> = records.iter().map(ExportedRecord::from).collect();
    assert_eq!(back, expected);
    for r in &back {
        validate_record(r).unwrap();
    }
    let again = build_finetune_records(&sampled, &annotations, &insights, "run-1").unwrap();
    assert_eq!(again, records);
}
