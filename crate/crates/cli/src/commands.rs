use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use limp_core::a2i::{
    read_annotations, run_a2i, write_annotations, A2iConfig, AnnotationResult, BackendIdentity, ChatBackend,
    HttpBackend, HttpBackendConfig, InsightSet, LabelSource, MockBackend, NoiseProfile, PromptVariant, Provenance,
    StayLabel,
};
use limp_core::annotator::{AnchorPlaces, HeuristicAnnotator};
use limp_core::data::{
    build_timelines, chronological_split, compute_intent_stats, compute_poi_stats, parse_stay_records,
    write_stay_records, IntentStats, RecordFormat, UserTimeline,
};
use limp_core::evaluation::{
    bar_chart_svg, confusion_heatmap_svg, intent_metrics, macro_table_rows, prompt_table_rows, ranking_row,
    render_text_table, run_prompt_ablation, write_csv, PromptAblationRow, RankingMetrics, MACRO_TABLE_HEADERS,
    PROMPT_TABLE_HEADERS, RANKING_TABLE_HEADERS,
};
use limp_core::finetune::{build_finetune_records, export_jsonl, sample_finetune_users, Task, UserAnnotation};
use limp_core::intentprob::{DistributionCache, IntentHistory};
use limp_core::synthgen::{generate_world, label_rows, simulate, stay_records, LabelRow};
use limp_core::Intent;
use limp_predictor::ablation::model_table_rows;
use limp_predictor::{
    build_dataset, checkpoint, run_model_ablation, DatasetOptions, IntentMode, ModelAblationRow, PredictorConfig,
    PredictorDataset,
};
use serde::{Deserialize, Serialize};

use crate::config::{BackendKind, RunConfig};
use crate::manifest::Manifest;

type Labels = BTreeMap<String, Vec<Intent>>;

const MIN_FINETUNE_STAYS: usize = 5;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_timelines(cfg: &RunConfig) -> Result<BTreeMap<String, UserTimeline>> {
    let path = cfg.stays_path();
    let file = File::open(&path).with_context(|| format!("opening {} (run `limp synth` first?)", path.display()))?;
    let parsed = parse_stay_records(std::io::BufReader::new(file), RecordFormat::from_path(&path))
        .with_context(|| format!("reading {}", path.display()))?;
    for e in parsed.row_errors.iter().take(10) {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    if parsed.row_errors.len() > 10 {
        log::warn!("{} more malformed rows skipped", parsed.row_errors.len() - 10);
    }
    ensure!(!parsed.records.is_empty(), "{} holds no valid stay records", path.display());
    Ok(build_timelines(parsed.records))
}

/// Ground-truth labels aligned with the timelines, when a labels file exists.
pub fn load_truth(cfg: &RunConfig, timelines: &BTreeMap<String, UserTimeline>) -> Result<Option<Labels>> {
    let Some(path) = cfg.labels_path() else {
        return Ok(None);
    };
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows: BTreeMap<String, Vec<(usize, Intent)>> = BTreeMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        rows.entry(row.user_id).or_default().push((row.stay_index, row.true_intent));
    }
    let mut labels = Labels::new();
    for (user, timeline) in timelines {
        let mut r = rows.remove(user).unwrap_or_default();
        r.sort_by_key(|x| x.0);
        let aligned = r.len() == timeline.len() && r.iter().enumerate().all(|(i, x)| x.0 == i);
        ensure!(
            aligned,
            "{}: labels of user {user} do not cover stays 0..{}",
            path.display(),
            timeline.len()
        );
        labels.insert(user.clone(), r.into_iter().map(|x| x.1).collect());
    }
    if !rows.is_empty() {
        log::warn!("{} labeled users have no stays", rows.len());
    }
    Ok(Some(labels))
}

fn heuristic_labels(timelines: &BTreeMap<String, UserTimeline>) -> BTreeMap<String, (AnchorPlaces, Vec<Intent>)> {
    let ann = HeuristicAnnotator::default();
    timelines.iter().map(|(u, t)| (u.clone(), ann.label_timeline(t))).collect()
}

/// Statistics of the first `seed_users` users, from ground truth when
/// available and from the heuristic protocol otherwise.
fn seed_stats(
    cfg: &RunConfig,
    timelines: &BTreeMap<String, UserTimeline>,
    truth: Option<&Labels>,
) -> Result<IntentStats> {
    let ann = HeuristicAnnotator::default();
    let mut pairs = Vec::new();
    for (user, t) in timelines.iter().take(cfg.annotation.seed_users.max(1)) {
        let labels = match truth {
            Some(truth) => truth[user].clone(),
            None => ann.label_timeline(t).1,
        };
        pairs.extend(t.stays().iter().zip(labels));
    }
    Ok(compute_intent_stats(pairs.iter().map(|(s, i)| (*s, *i)))?)
}

fn a2i_config(cfg: &RunConfig) -> A2iConfig {
    let a = &cfg.annotation;
    A2iConfig {
        retries: a.retries,
        temperature: a.temperature,
        max_tokens: a.max_tokens,
        parallelism: a.parallelism,
        fallback: a.fallback,
        annotator: HeuristicAnnotator::default(),
    }
}

fn make_backend(
    cfg: &RunConfig,
    kind: BackendKind,
    timelines: &BTreeMap<String, UserTimeline>,
) -> Result<Box<dyn ChatBackend>> {
    Ok(match kind {
        BackendKind::Mock => {
            let mut mock = MockBackend::from_timelines(HeuristicAnnotator::default(), timelines);
            if cfg.annotation.noisy_mock {
                mock = mock.with_noise(NoiseProfile::standard(cfg.derive_seed("noise")));
            }
            Box::new(mock)
        }
        BackendKind::Http => Box::new(HttpBackend::new(HttpBackendConfig {
            base_url: cfg.annotation.base_url.clone(),
            model: cfg.annotation.model.clone(),
            api_key_env: cfg.annotation.api_key_env.clone(),
            timeout_secs: cfg.annotation.timeout_secs,
        })?),
        BackendKind::Heuristic => bail!("the heuristic backend does not take prompts"),
    })
}

fn annotations_path(cfg: &RunConfig) -> PathBuf {
    cfg.dir("annotations").join("annotations.jsonl")
}

fn insights_path(cfg: &RunConfig) -> PathBuf {
    cfg.dir("annotations").join("insights.json")
}

struct Annotated {
    anchors: BTreeMap<String, AnchorPlaces>,
    labels: Labels,
    provenance: String,
}

/// Labels from `annotate` when present, with heuristic labels for any
/// stay or user the run left unlabeled; heuristic labels otherwise.
fn annotated_labels(cfg: &RunConfig, timelines: &BTreeMap<String, UserTimeline>) -> Result<Annotated> {
    let heuristic = heuristic_labels(timelines);
    let path = annotations_path(cfg);
    if !path.exists() {
        log::info!("no annotations at {}; using heuristic labels", path.display());
        let (anchors, labels) = heuristic.into_iter().map(|(u, (a, l))| ((u.clone(), a), (u, l))).unzip();
        return Ok(Annotated {
            anchors,
            labels,
            provenance: "heuristic".into(),
        });
    }
    let results = read_annotations(&path)?;
    let mut out = Annotated {
        anchors: BTreeMap::new(),
        labels: Labels::new(),
        provenance: String::new(),
    };
    let mut filled = 0;
    for (user, (h_anchors, h_labels)) in heuristic {
        match results.get(&user) {
            Some(r) => {
                if out.provenance.is_empty() {
                    out.provenance = format!("{}:{}", r.provenance.backend, r.provenance.variant);
                }
                let mut labels = h_labels.clone();
                let mut seen = vec![false; labels.len()];
                for l in &r.labels {
                    ensure!(
                        l.stay_index < labels.len(),
                        "{}: user {user} has no stay {}",
                        path.display(),
                        l.stay_index
                    );
                    if let Some(i) = l.intent {
                        labels[l.stay_index] = i;
                        seen[l.stay_index] = true;
                    }
                }
                filled += seen.iter().filter(|s| !**s).count();
                out.anchors.insert(user.clone(), r.anchors.clone());
                out.labels.insert(user, labels);
            }
            None => {
                filled += h_labels.len();
                out.anchors.insert(user.clone(), h_anchors);
                out.labels.insert(user, h_labels);
            }
        }
    }
    if filled > 0 {
        log::warn!("{filled} stays had no annotation; used heuristic labels");
    }
    if out.provenance.is_empty() {
        out.provenance = "heuristic".into();
    }
    Ok(out)
}

fn dataset_options(cfg: &RunConfig) -> Result<DatasetOptions> {
    Ok(DatasetOptions {
        ratios: cfg.split,
        window: cfg.predictor.window,
        kernel: cfg.kernel.params()?,
        resolution: cfg.kernel.resolution_secs,
    })
}

fn predictor_dataset(cfg: &RunConfig) -> Result<(PredictorDataset, String)> {
    let timelines = load_timelines(cfg)?;
    let annotated = annotated_labels(cfg, &timelines)?;
    let ds = build_dataset(&timelines, &annotated.labels, &dataset_options(cfg)?)?;
    log::info!(
        "{} train, {} val, {} test windows over {} POIs",
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.vocab.num_pois()
    );
    Ok((ds, annotated.provenance))
}

fn predictor_config(cfg: &RunConfig) -> PredictorConfig {
    PredictorConfig {
        seed: cfg.derive_seed("predictor"),
        ..cfg.predictor.clone()
    }
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.dir("data");
    create_dir(&dir)?;
    let d = &cfg.data;
    let world = generate_world(d.users, d.pois, cfg.derive_seed("world"))?;
    let sim = simulate(&world, d.days, cfg.derive_seed("simulate"))?;
    let mut manifest = Manifest::new("synth", cfg);

    let stays = cfg.stays_path();
    if let Some(parent) = stays.parent() {
        create_dir(parent)?;
    }
    let file = File::create(&stays).with_context(|| format!("creating {}", stays.display()))?;
    write_stay_records(stay_records(&sim), BufWriter::new(file), RecordFormat::from_path(&stays))?;
    manifest.output(&stays);

    let labels = cfg.data.labels.clone().unwrap_or_else(|| dir.join("labels.csv"));
    let rows = label_rows(&sim);
    let mut w = csv::Writer::from_path(&labels).with_context(|| format!("creating {}", labels.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    manifest.output(&labels);

    let world_path = dir.join("world.json");
    write_json(&world_path, &world)?;
    manifest.output(&world_path);

    manifest.detail("users", d.users);
    manifest.detail("pois", d.pois);
    manifest.detail("days", d.days);
    manifest.detail("stays", rows.len());
    manifest.write(&dir, "synth")?;
    println!("{} stays for {} users written to {}", rows.len(), d.users, stays.display());
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let timelines = load_timelines(cfg)?;
    let (labels, source) = match load_truth(cfg, &timelines)? {
        Some(t) => (t, "ground_truth"),
        None => (heuristic_labels(&timelines).into_iter().map(|(u, x)| (u, x.1)).collect(), "heuristic"),
    };
    let stats = compute_intent_stats(
        timelines
            .iter()
            .flat_map(|(u, t)| t.stays().iter().zip(labels[u].iter().copied())),
    )?;
    let dir = cfg.dir("reports");
    create_dir(&dir)?;
    let mut manifest = Manifest::new("stats", cfg);

    let mut payload = stats.payload();
    payload["label_source"] = source.into();
    payload["fingerprint"] = stats.fingerprint().into();
    let intent_path = dir.join("intent_stats.json");
    write_json(&intent_path, &payload)?;
    manifest.output(&intent_path);

    let poi: Vec<_> = timelines.values().map(compute_poi_stats).collect::<limp_core::Result<_>>()?;
    let poi_path = dir.join("poi_stats.json");
    write_json(&poi_path, &poi)?;
    manifest.output(&poi_path);

    manifest.detail("label_source", source);
    manifest.detail("users", timelines.len());
    manifest.write(&dir, "stats")?;
    let rows: Vec<Vec<String>> = Intent::ALL
        .iter()
        .map(|&i| vec![i.name().to_string(), format!("{:.2}", stats.percentage(i))])
        .collect();
    print!("{}", render_text_table(&["Intent", "Percent"], &rows));
    Ok(())
}

fn heuristic_results(
    timelines: &BTreeMap<String, UserTimeline>,
    variant: PromptVariant,
) -> BTreeMap<String, AnnotationResult> {
    heuristic_labels(timelines)
        .into_iter()
        .map(|(user, (anchors, labels))| {
            let result = AnnotationResult {
                user_id: user.clone(),
                anchors,
                labels: labels
                    .into_iter()
                    .enumerate()
                    .map(|(stay_index, i)| StayLabel {
                        stay_index,
                        intent: Some(i),
                        source: LabelSource::Backend,
                    })
                    .collect(),
                provenance: Provenance {
                    backend: BackendIdentity {
                        backend: "heuristic".into(),
                        model: "rules".into(),
                    },
                    variant,
                    calls: 0,
                    retries: 0,
                    failed_calls: 0,
                },
                errors: Vec::new(),
            };
            (user, result)
        })
        .collect()
}

pub fn annotate(cfg: &RunConfig) -> Result<()> {
    let timelines = load_timelines(cfg)?;
    let dir = cfg.dir("annotations");
    create_dir(&dir)?;
    let variant = cfg.annotation.variant;
    let kind = cfg.annotation.backend;
    let mut manifest = Manifest::new("annotate", cfg);

    let (results, insights, failures) = if kind == BackendKind::Heuristic {
        (heuristic_results(&timelines, variant), None, Vec::new())
    } else {
        let backend = make_backend(cfg, kind, &timelines)?;
        let truth = load_truth(cfg, &timelines)?;
        let stats = if variant.uses_insights() {
            Some(seed_stats(cfg, &timelines, truth.as_ref())?)
        } else {
            None
        };
        manifest.detail("backend_identity", backend.identity().to_string());
        let run = run_a2i(&timelines, stats.as_ref(), &*backend, variant, &a2i_config(cfg))?;
        if let Some(e) = &run.insight_error {
            log::warn!("insight stage failed, ran without insights: {e}");
            manifest.detail("insight_error", e);
        }
        (run.results, run.insights, run.failures)
    };

    let path = annotations_path(cfg);
    let written = write_annotations(&path, &results)?;
    manifest.output(&path);
    if let Some(set) = &insights {
        let p = insights_path(cfg);
        write_json(&p, set)?;
        manifest.output(&p);
    } else if insights_path(cfg).exists() {
        // A stale insight file would not match these annotations.
        std::fs::remove_file(insights_path(cfg))?;
    }
    let failures_path = dir.join("failures.json");
    write_json(&failures_path, &failures)?;
    manifest.output(&failures_path);

    let count = |s: LabelSource| results.values().map(|r| r.count(s)).sum::<usize>();
    let (backend_n, fallback_n, failed_n) = (
        count(LabelSource::Backend),
        count(LabelSource::Fallback),
        count(LabelSource::Failed),
    );
    manifest.detail("backend", kind);
    manifest.detail("variant", variant);
    manifest.detail("users", written);
    manifest.detail("labels_backend", backend_n);
    manifest.detail("labels_fallback", fallback_n);
    manifest.detail("labels_failed", failed_n);
    manifest.detail("retries", results.values().map(|r| r.provenance.retries).sum::<usize>());
    manifest.detail("user_failures", failures.len());
    manifest.write(&dir, "annotate")?;
    println!(
        "annotated {written} users with {variant}: {backend_n} from backend, {fallback_n} fallback, {failed_n} failed"
    );
    Ok(())
}

pub fn export_finetune(cfg: &RunConfig) -> Result<()> {
    let timelines = load_timelines(cfg)?;
    let annotated = annotated_labels(cfg, &timelines)?;
    let insights: InsightSet = if insights_path(cfg).exists() {
        read_json(&insights_path(cfg))?
    } else {
        // Run only the insight stage: no users, deterministic mock.
        log::info!("no insight file; extracting insights with the mock backend");
        let truth = load_truth(cfg, &timelines)?;
        let stats = seed_stats(cfg, &timelines, truth.as_ref())?;
        let mock = MockBackend::from_timelines(HeuristicAnnotator::default(), &BTreeMap::new());
        let run = run_a2i(&BTreeMap::new(), Some(&stats), &mock, PromptVariant::A2i, &a2i_config(cfg))?;
        run.insights.context("insight extraction failed")?
    };

    let eligible = timelines.values().filter(|t| t.len() >= MIN_FINETUNE_STAYS).count();
    let mut count = cfg.finetune.users;
    if eligible < count {
        log::warn!("only {eligible} users have enough stays; exporting {eligible} instead of {count}");
        count = eligible;
    }
    ensure!(count > 0, "no user has at least {MIN_FINETUNE_STAYS} stays");
    let sampled = sample_finetune_users(&timelines, count, cfg.finetune.fraction, cfg.derive_seed("finetune"))?;
    let annotations: BTreeMap<String, UserAnnotation<'_>> = sampled
        .keys()
        .map(|u| {
            (
                u.clone(),
                UserAnnotation {
                    anchors: &annotated.anchors[u],
                    labels: &annotated.labels[u],
                },
            )
        })
        .collect();
    let records = build_finetune_records(&sampled, &annotations, &insights, &annotated.provenance)?;
    let (task1, task2): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.task == Task::Task1);

    let dir = cfg.dir("finetune");
    create_dir(&dir)?;
    let mut manifest = Manifest::new("export-finetune", cfg);
    let p1 = dir.join("task1.jsonl");
    let p2 = dir.join("task2.jsonl");
    let n1 = export_jsonl(&task1, &p1)?;
    let n2 = export_jsonl(&task2, &p2)?;
    manifest.output(&p1);
    manifest.output(&p2);
    manifest.detail("users", sampled.len());
    manifest.detail("task1_records", n1);
    manifest.detail("task2_records", n2);
    manifest.detail("label_provenance", &annotated.provenance);
    manifest.write(&dir, "export-finetune")?;
    println!("{n1} task-1 and {n2} task-2 records for {} users in {}", sampled.len(), dir.display());
    Ok(())
}

pub fn intent_probs(cfg: &RunConfig) -> Result<()> {
    let timelines = load_timelines(cfg)?;
    let annotated = annotated_labels(cfg, &timelines)?;
    let mut histories = Vec::new();
    for (user, t) in &timelines {
        let train = chronological_split(t, cfg.split)?.train;
        let labels = &annotated.labels[user][..train.len()];
        histories.push(IntentHistory::from_labeled_stays(user.clone(), train.stays(), labels)?);
    }
    let cache = DistributionCache::build(&histories, cfg.kernel.params()?, cfg.kernel.resolution_secs)?;
    let dir = cfg.dir("data");
    create_dir(&dir)?;
    let path = dir.join("intent_tables.json");
    cache.save(&path)?;
    let mut manifest = Manifest::new("intent-probs", cfg);
    manifest.output(&path);
    manifest.detail("users", histories.len());
    manifest.detail("label_provenance", &annotated.provenance);
    manifest.write(&dir, "intent-probs")?;
    println!("intent tables for {} users written to {}", histories.len(), path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, mode: IntentMode) -> Result<()> {
    let (ds, provenance) = predictor_dataset(cfg)?;
    let pcfg = predictor_config(cfg);
    let trained = limp_predictor::train(&ds, &pcfg, mode)?;
    let metrics = limp_core::evaluation::ranking_metrics(&limp_predictor::evaluate(&trained.model, &ds.test)?)?;

    let ckpt_dir = cfg.dir("checkpoints");
    let reports = cfg.dir("reports");
    create_dir(&ckpt_dir)?;
    create_dir(&reports)?;
    let mut manifest = Manifest::new("train", cfg);
    let ckpt = ckpt_dir.join(format!("{}.json", mode.as_str()));
    checkpoint::save(&trained, &ckpt)?;
    manifest.output(&ckpt);
    let history = reports.join(format!("history_{}.csv", mode.as_str()));
    limp_predictor::train::write_history_csv(&history, &trained.history)?;
    manifest.output(&history);
    let metrics_path = reports.join(format!("metrics_{}.json", mode.as_str()));
    write_json(&metrics_path, &metrics)?;
    manifest.output(&metrics_path);

    manifest.detail("intent_mode", mode);
    manifest.detail("best_epoch", trained.best_epoch);
    manifest.detail("test_metrics", metrics);
    manifest.detail("parameters", trained.model.parameter_count());
    manifest.detail("windows", [ds.train.len(), ds.val.len(), ds.test.len()]);
    manifest.detail("label_provenance", provenance);
    manifest.write(&ckpt_dir, &format!("train-{}", mode.as_str()))?;
    print!(
        "{}",
        render_text_table(&RANKING_TABLE_HEADERS, &[ranking_row(mode.table_name(), &metrics)])
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointScore {
    checkpoint: PathBuf,
    mode: IntentMode,
    metrics: RankingMetrics,
}

fn score_annotations(cfg: &RunConfig, manifest: &mut Manifest) -> Result<Option<PromptAblationRow>> {
    let path = annotations_path(cfg);
    if !path.exists() {
        return Ok(None);
    }
    let timelines = load_timelines(cfg)?;
    let Some(truth) = load_truth(cfg, &timelines)? else {
        log::warn!("no ground-truth labels; skipping annotation scoring");
        return Ok(None);
    };
    let results = read_annotations(&path)?;
    let (mut pred, mut gold, mut unlabeled, mut retries) = (Vec::new(), Vec::new(), 0, 0);
    let mut variant = None;
    for (user, r) in &results {
        let t = truth.get(user).with_context(|| format!("no ground truth for user {user}"))?;
        variant.get_or_insert(r.provenance.variant);
        retries += r.provenance.retries;
        for l in &r.labels {
            let gold_label = *t
                .get(l.stay_index)
                .with_context(|| format!("user {user} has no stay {}", l.stay_index))?;
            match l.intent {
                Some(p) => {
                    pred.push(p);
                    gold.push(gold_label);
                }
                None => unlabeled += 1,
            }
        }
    }
    let Some(variant) = variant else {
        return Ok(None);
    };
    let row = PromptAblationRow {
        variant,
        metrics: intent_metrics(&pred, &gold)?,
        unlabeled,
        retries,
    };
    let out = cfg.dir("reports").join("annotation_eval.json");
    write_json(&out, &row)?;
    manifest.output(&out);
    Ok(Some(row))
}

fn checkpoint_paths(cfg: &RunConfig, given: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if !given.is_empty() {
        return Ok(given.to_vec());
    }
    let dir = cfg.dir("checkpoints");
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("manifest-"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn evaluate(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<()> {
    let reports = cfg.dir("reports");
    create_dir(&reports)?;
    let mut manifest = Manifest::new("evaluate", cfg);
    let mut did_something = false;

    if let Some(row) = score_annotations(cfg, &mut manifest)? {
        did_something = true;
        print!("{}", render_text_table(&PROMPT_TABLE_HEADERS, &prompt_table_rows(&[row.clone()])));
        manifest.detail("annotation_accuracy", row.metrics.accuracy);
    }

    let paths = checkpoint_paths(cfg, checkpoints)?;
    if !paths.is_empty() {
        did_something = true;
        let timelines = load_timelines(cfg)?;
        let annotated = annotated_labels(cfg, &timelines)?;
        // Datasets by window length; each checkpoint is scored with its own.
        let mut datasets: BTreeMap<usize, PredictorDataset> = BTreeMap::new();
        let mut scores = Vec::new();
        for path in paths {
            let trained = checkpoint::load(&path)?;
            let window = trained.config().window;
            if !datasets.contains_key(&window) {
                let options = DatasetOptions {
                    window,
                    ..dataset_options(cfg)?
                };
                datasets.insert(window, build_dataset(&timelines, &annotated.labels, &options)?);
            }
            let ds = &datasets[&window];
            ensure!(
                trained.vocab == ds.vocab,
                "{} was trained on different data (vocabulary mismatch)",
                path.display()
            );
            let outcomes = limp_predictor::evaluate(&trained.model, &ds.test)?;
            scores.push(CheckpointScore {
                checkpoint: path,
                mode: trained.mode(),
                metrics: limp_core::evaluation::ranking_metrics(&outcomes)?,
            });
        }
        let rows: Vec<Vec<String>> = scores.iter().map(|s| ranking_row(s.mode.table_name(), &s.metrics)).collect();
        let json = reports.join("evaluation.json");
        write_json(&json, &scores)?;
        let csv_path = reports.join("evaluation.csv");
        write_csv(&csv_path, &RANKING_TABLE_HEADERS, &rows)?;
        manifest.output(&json);
        manifest.output(&csv_path);
        manifest.detail("checkpoints", scores.len());
        print!("{}", render_text_table(&RANKING_TABLE_HEADERS, &rows));
    }

    ensure!(did_something, "nothing to evaluate: no annotations with ground truth and no checkpoints");
    manifest.write(&reports, "evaluate")?;
    Ok(())
}

pub fn ablate_model(cfg: &RunConfig, modes: &[IntentMode]) -> Result<()> {
    let modes = if modes.is_empty() { IntentMode::ALL.to_vec() } else { modes.to_vec() };
    let (ds, provenance) = predictor_dataset(cfg)?;
    let pcfg = predictor_config(cfg);
    let rows = run_model_ablation(&ds, &modes, &pcfg, pcfg.seed)?;
    let table = model_table_rows(&rows);

    let reports = cfg.dir("reports");
    create_dir(&reports)?;
    let mut manifest = Manifest::new("ablate", cfg);
    let json = reports.join("model_ablation.json");
    write_json(&json, &rows)?;
    let csv_path = reports.join("model_ablation.csv");
    write_csv(&csv_path, &RANKING_TABLE_HEADERS, &table)?;
    let txt = reports.join("model_ablation.txt");
    let text = render_text_table(&RANKING_TABLE_HEADERS, &table);
    write_text(&txt, &text)?;
    for p in [&json, &csv_path, &txt] {
        manifest.output(p);
    }
    manifest.detail("grid", "model");
    manifest.detail("modes", &modes);
    manifest.detail("label_provenance", provenance);
    manifest.write(&reports, "ablate-model")?;
    print!("{text}");
    Ok(())
}

pub fn ablate_prompt(cfg: &RunConfig, variants: &[PromptVariant]) -> Result<()> {
    let variants = if variants.is_empty() { PromptVariant::ALL.to_vec() } else { variants.to_vec() };
    let timelines = load_timelines(cfg)?;
    let truth = load_truth(cfg, &timelines)?.context("the prompt grid needs ground-truth labels (--labels)")?;
    let backend = make_backend(cfg, cfg.annotation.backend, &timelines)?;
    let stats = seed_stats(cfg, &timelines, Some(&truth))?;
    let rows = run_prompt_ablation(&timelines, &truth, Some(&stats), &*backend, &variants, &a2i_config(cfg))?;

    let reports = cfg.dir("reports");
    create_dir(&reports)?;
    let mut manifest = Manifest::new("ablate", cfg);
    let table = prompt_table_rows(&rows);
    let json = reports.join("prompt_ablation.json");
    write_json(&json, &rows)?;
    let csv_path = reports.join("prompt_ablation.csv");
    write_csv(&csv_path, &PROMPT_TABLE_HEADERS, &table)?;
    let txt = reports.join("prompt_ablation.txt");
    let text = format!(
        "{}\n{}",
        render_text_table(&PROMPT_TABLE_HEADERS, &table),
        render_text_table(&MACRO_TABLE_HEADERS, &macro_table_rows(&rows))
    );
    write_text(&txt, &text)?;
    for p in [&json, &csv_path, &txt] {
        manifest.output(p);
    }
    manifest.detail("grid", "prompt");
    manifest.detail("variants", &variants);
    manifest.detail("backend_identity", backend.identity().to_string());
    manifest.write(&reports, "ablate-prompt")?;
    print!("{text}");
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let reports = cfg.dir("reports");
    let figures = reports.join("figures");
    create_dir(&figures)?;
    let mut manifest = Manifest::new("report", cfg);
    let mut summary = String::new();
    let emit = |path: PathBuf, body: &str, manifest: &mut Manifest| -> Result<()> {
        write_text(&path, body)?;
        manifest.output(&path);
        Ok(())
    };

    let prompt_path = reports.join("prompt_ablation.json");
    if prompt_path.exists() {
        let rows: Vec<PromptAblationRow> = read_json(&prompt_path)?;
        summary += "Intent annotation by prompt variant\n";
        summary += &render_text_table(&PROMPT_TABLE_HEADERS, &prompt_table_rows(&rows));
        summary += "\n";
        summary += &render_text_table(&MACRO_TABLE_HEADERS, &macro_table_rows(&rows));
        summary += "\n";
        let groups: Vec<(String, Vec<f64>)> = rows
            .iter()
            .map(|r| {
                let m = &r.metrics;
                (
                    r.variant.to_string(),
                    vec![m.accuracy, m.weighted_precision, m.weighted_recall, m.weighted_f1],
                )
            })
            .collect();
        let svg = bar_chart_svg("Prompt variants", &PROMPT_TABLE_HEADERS[1..], &groups);
        emit(figures.join("prompt_ablation.svg"), &svg, &mut manifest)?;
        for r in &rows {
            let svg = confusion_heatmap_svg(&r.metrics.confusion, &format!("Confusion: {}", r.variant));
            emit(figures.join(format!("confusion_{}.svg", r.variant.as_str())), &svg, &mut manifest)?;
        }
    }

    let ann_path = reports.join("annotation_eval.json");
    if ann_path.exists() {
        let row: PromptAblationRow = read_json(&ann_path)?;
        summary += "Annotation run against ground truth\n";
        summary += &render_text_table(&PROMPT_TABLE_HEADERS, &prompt_table_rows(&[row.clone()]));
        summary += "\n";
        let svg = confusion_heatmap_svg(&row.metrics.confusion, &format!("Annotation run: {}", row.variant));
        emit(figures.join("confusion_annotation.svg"), &svg, &mut manifest)?;
    }

    let model_path = reports.join("model_ablation.json");
    if model_path.exists() {
        let rows: Vec<ModelAblationRow> = read_json(&model_path)?;
        summary += "Next-POI prediction by intent mode\n";
        summary += &render_text_table(&RANKING_TABLE_HEADERS, &model_table_rows(&rows));
        summary += "\n";
        let groups: Vec<(String, Vec<f64>)> = rows
            .iter()
            .map(|r| {
                let m = &r.metrics;
                (r.mode.table_name().to_string(), vec![m.acc1, m.acc5, m.acc10, m.mrr5])
            })
            .collect();
        let svg = bar_chart_svg("Intent modes", &RANKING_TABLE_HEADERS[1..], &groups);
        emit(figures.join("model_ablation.svg"), &svg, &mut manifest)?;
    }

    let eval_path = reports.join("evaluation.json");
    if eval_path.exists() {
        let scores: Vec<CheckpointScore> = read_json(&eval_path)?;
        let rows: Vec<Vec<String>> = scores.iter().map(|s| ranking_row(s.mode.table_name(), &s.metrics)).collect();
        summary += "Checkpoints on the test split\n";
        summary += &render_text_table(&RANKING_TABLE_HEADERS, &rows);
        summary += "\n";
    }

    ensure!(
        !summary.is_empty(),
        "no results under {}; run `evaluate` or `ablate` first",
        reports.display()
    );
    emit(reports.join("summary.txt"), &summary, &mut manifest)?;
    manifest.write(&reports, "report")?;
    print!("{summary}");
    Ok(())
}
