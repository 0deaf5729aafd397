use chrono::NaiveDateTime;
use limp_core::a2i::{
    render_feature_prompt, render_hwi_prompt, render_intent_prompt, render_task1_prompt,
    render_task2_prompt, InsightSet, PromptVariant,
};
use limp_core::annotator::{AnchorPlaces, PoiRef};
use limp_core::data::{compute_intent_stats, compute_poi_stats, StayRecord, UserTimeline};
use limp_core::Intent;

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

fn day() -> Vec<StayRecord> {
    vec![
        stay("p1", "poi name1", "residence", "2019-10-11 00:30:00", Some("2019-10-11 07:30:00")),
        stay("p2", "poi name2", "office", "2019-10-11 08:15:00", Some("2019-10-11 15:30:00")),
        stay("p3", "poi name3", "restaurant", "2019-10-11 15:45:00", Some("2019-10-11 17:00:00")),
    ]
}

fn timeline() -> UserTimeline {
    let mut stays = day();
    stays.push(stay("p1", "poi name1", "residence", "2019-10-11 19:00:00", Some("2019-10-11 23:59:00")));
    UserTimeline::new("u1", stays).unwrap()
}

fn insights() -> InsightSet {
    InsightSet::new(
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
    .unwrap()
}

fn anchors() -> AnchorPlaces {
    AnchorPlaces {
        home: Some(PoiRef { poi_id: "p1".into(), poi_name: "poi name1".into() }),
        work: Some(PoiRef { poi_id: "p2".into(), poi_name: "poi name2".into() }),
        rationale: String::new(),
    }
}

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn assert_same(actual: &str, name: &str) {
    let expected = golden(name);
    if actual != expected {
        let pos = actual
            .bytes()
            .zip(expected.bytes())
            .position(|(a, b)| a != b)
            .unwrap_or(actual.len().min(expected.len()));
        panic!(
            "{name} differs at byte {pos}:\n  actual:   {:?}\n  expected: {:?}",
            &actual[pos.saturating_sub(40)..(pos + 40).min(actual.len())],
            &expected[pos.saturating_sub(40)..(pos + 40).min(expected.len())]
        );
    }
}

#[test]
fn feature_prompt_matches_golden() {
    let stays = vec![
        stay("h", "home", "residence", "2019-10-11 00:30:00", None),
        stay("w", "work", "office", "2019-10-11 08:15:00", None),
    ];
    let stats = compute_intent_stats(stays.iter().zip([Intent::AtHome, Intent::Working])).unwrap();
    let prompt = render_feature_prompt(&stats);
    assert_same(&prompt, "feature.txt");
    assert!(prompt.contains("Each intent should have about 6-8 features"));
}

#[test]
fn hwi_prompts_match_golden() {
    let stats = compute_poi_stats(&timeline()).unwrap();
    let full = render_hwi_prompt(&stats, Some(&insights()));
    let ablated = render_hwi_prompt(&stats, None);
    assert_same(&full, "hwi_full.txt");
    assert_same(&ablated, "hwi_nfe.txt");
    for p in [&full, &ablated] {
        assert!(p.contains("\"home\": \"home place\""));
        assert!(p.contains("\"work\": \"work place\""));
    }
    assert!(!ablated.contains("features of intent"));
}

#[test]
fn intent_prompts_match_golden() {
    let day = day();
    let a2i = render_intent_prompt(&day, &anchors(), PromptVariant::A2i).unwrap();
    assert_same(&a2i, "intent_a2i.txt");
    assert!(a2i.contains("There are {3} stays"));
    let nfe = render_intent_prompt(&day, &anchors(), PromptVariant::Nfe).unwrap();
    assert_eq!(nfe, a2i);
    let nhwi = render_intent_prompt(&day, &anchors(), PromptVariant::Nhwi).unwrap();
    assert_same(&nhwi, "intent_nhwi.txt");
    assert!(!nhwi.contains("poi name1}"));
    let zs = render_intent_prompt(&day, &AnchorPlaces::none(), PromptVariant::Zs).unwrap();
    assert_same(&zs, "intent_zs.txt");
    assert!(!zs.contains("think step by step"));
    assert!(zs.contains("Your task is to give intent prediction"));
}

#[test]
fn intent_prompt_preconditions() {
    assert!(render_intent_prompt(&[], &anchors(), PromptVariant::A2i).is_err());
    assert!(render_intent_prompt(&day(), &AnchorPlaces::none(), PromptVariant::A2i).is_err());
    assert!(render_intent_prompt(&day(), &AnchorPlaces::none(), PromptVariant::Nhwi).is_ok());
}

#[test]
fn finetune_prompts_match_golden() {
    let stats = compute_poi_stats(&timeline()).unwrap();
    assert_same(&render_task1_prompt(&stats, &insights()), "task1.txt");
    let day2 = vec![
        stay("p1", "poi name1", "High School", "2019-11-18 01:00:00", None),
        stay("p1", "poi name1", "High School", "2019-11-18 13:15:00", None),
        stay("p2", "poi name2", "Educational Facilities", "2019-11-19 00:00:00", None),
    ];
    assert_same(&render_task2_prompt(&day2, "poi name2", "poi name1").unwrap(), "task2.txt");
}

fn context_blocks(prompt: &str) -> usize {
    [
        "Here are the general and unique features",
        "Here's what each intent means:",
        "Let's think step by step.",
        "Please think step by step.",
        "The trajectory data under analysis",
    ]
    .iter()
    .filter(|m| prompt.contains(*m))
    .count()
}

#[test]
fn richer_variants_render_more_context() {
    let stats = compute_poi_stats(&timeline()).unwrap();
    let day = day();
    let a2i = context_blocks(&render_hwi_prompt(&stats, Some(&insights())))
        + context_blocks(&render_intent_prompt(&day, &anchors(), PromptVariant::A2i).unwrap());
    let nfe = context_blocks(&render_hwi_prompt(&stats, None))
        + context_blocks(&render_intent_prompt(&day, &anchors(), PromptVariant::Nfe).unwrap());
    let nhwi = context_blocks(&render_intent_prompt(&day, &AnchorPlaces::none(), PromptVariant::Nhwi).unwrap());
    let zs = context_blocks(&render_intent_prompt(&day, &AnchorPlaces::none(), PromptVariant::Zs).unwrap());
    assert!(a2i > nfe && nfe > nhwi && nhwi > zs, "{a2i} {nfe} {nhwi} {zs}");
}
