//! Ranking and annotation metrics, the prompt-variant ablation, and plain
//! text / CSV / SVG renderings of the results.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::a2i::{run_a2i, A2iConfig, ChatBackend, PromptVariant};
use crate::data::{IntentStats, UserTimeline};
use crate::error::{invalid, Result};
use crate::intent::{Intent, NUM_INTENTS};

/// 1-based rank of the true next POI; `None` when it is not in the list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOutcome(Option<usize>);

impl RankOutcome {
    pub fn at(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(invalid("ranks are 1-based"));
        }
        Ok(RankOutcome(Some(rank)))
    }

    pub fn missing() -> Self {
        RankOutcome(None)
    }

    pub fn rank(&self) -> Option<usize> {
        self.0
    }

    /// Rank of `target` under `scores`, best first; ties keep index order.
    pub fn from_scores(scores: &[f32], target: usize) -> Self {
        let Some(&s) = scores.get(target) else {
            return RankOutcome(None);
        };
        let ahead = scores
            .iter()
            .enumerate()
            .filter(|(j, &x)| x > s || (x == s && *j < target))
            .count();
        RankOutcome(Some(ahead + 1))
    }

    /// Rank of `target` in a ranked candidate list.
    pub fn from_top_list(list: &[usize], target: usize) -> Self {
        RankOutcome(list.iter().position(|&c| c == target).map(|p| p + 1))
    }
}

fn non_empty(outcomes: &[RankOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(invalid("metrics need at least one outcome"));
    }
    Ok(outcomes.len() as f64)
}

pub fn acc_at_k(outcomes: &[RankOutcome], k: usize) -> Result<f64> {
    let n = non_empty(outcomes)?;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let hits = outcomes.iter().filter(|o| o.0.is_some_and(|r| r <= k)).count();
    Ok(hits as f64 / n)
}

pub fn mrr_at_5(outcomes: &[RankOutcome]) -> Result<f64> {
    let n = non_empty(outcomes)?;
    let sum: f64 = outcomes
        .iter()
        .map(|o| match o.0 {
            Some(r) if r <= 5 => 1.0 / r as f64,
            _ => 0.0,
        })
        .sum();
    Ok(sum / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub acc1: f64,
    pub acc5: f64,
    pub acc10: f64,
    pub mrr5: f64,
    pub count: usize,
}

pub fn ranking_metrics(outcomes: &[RankOutcome]) -> Result<RankingMetrics> {
    Ok(RankingMetrics {
        acc1: acc_at_k(outcomes, 1)?,
        acc5: acc_at_k(outcomes, 5)?,
        acc10: acc_at_k(outcomes, 10)?,
        mrr5: mrr_at_5(outcomes)?,
        count: outcomes.len(),
    })
}

/// Rows are true intents, columns predicted, both in ordinal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_INTENTS]; NUM_INTENTS],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, truth: Intent) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn col_sum(&self, pred: Intent) -> u64 {
        self.counts.iter().map(|r| r[pred.index()]).sum()
    }

    /// Percent per row; empty rows stay zero.
    pub fn row_normalized(&self) -> [[f64; NUM_INTENTS]; NUM_INTENTS] {
        let mut out = [[0.0; NUM_INTENTS]; NUM_INTENTS];
        for (i, row) in self.counts.iter().enumerate() {
            let sum: u64 = row.iter().sum();
            if sum > 0 {
                for j in 0..NUM_INTENTS {
                    out[i][j] = 100.0 * row[j] as f64 / sum as f64;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted averages; weighted recall equals accuracy.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class_precision: [f64; NUM_INTENTS],
    pub per_class_recall: [f64; NUM_INTENTS],
    pub per_class_f1: [f64; NUM_INTENTS],
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro and weighted precision/recall/F1 over all six
/// classes. Undefined per-class values count as 0.
pub fn intent_metrics(pred: &[Intent], truth: &[Intent]) -> Result<IntentMetrics> {
    if pred.len() != truth.len() {
        return Err(invalid(format!(
            "{} predictions for {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(invalid("intent metrics need at least one stay"));
    }
    let mut counts = [[0u64; NUM_INTENTS]; NUM_INTENTS];
    for (p, t) in pred.iter().zip(truth) {
        counts[t.index()][p.index()] += 1;
    }
    let confusion = ConfusionMatrix { counts };
    let n = pred.len() as u64;
    let correct: u64 = (0..NUM_INTENTS).map(|i| counts[i][i]).sum();
    let mut precision = [0.0; NUM_INTENTS];
    let mut recall = [0.0; NUM_INTENTS];
    let mut f1 = [0.0; NUM_INTENTS];
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for intent in Intent::ALL {
        let c = intent.index();
        let support = confusion.row_sum(intent);
        if support == 0 {
            log::debug!("{intent} has no support; its recall counts as 0");
        }
        precision[c] = ratio(counts[c][c], confusion.col_sum(intent));
        recall[c] = ratio(counts[c][c], support);
        f1[c] = if precision[c] + recall[c] > 0.0 {
            2.0 * precision[c] * recall[c] / (precision[c] + recall[c])
        } else {
            0.0
        };
        let w = support as f64 / n as f64;
        wp += w * precision[c];
        wr += w * recall[c];
        wf += w * f1[c];
    }
    let mean = |v: &[f64; NUM_INTENTS]| v.iter().sum::<f64>() / NUM_INTENTS as f64;
    Ok(IntentMetrics {
        accuracy: ratio(correct, n),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f1: wf,
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAblationRow {
    pub variant: PromptVariant,
    pub metrics: IntentMetrics,
    /// Stays that ended without any label.
    pub unlabeled: usize,
    pub retries: usize,
}

/// Annotates the same users once per variant and scores each run against
/// `truth` (per-user labels in timeline order). Unlabeled stays are left
/// out of the metrics and counted separately.
pub fn run_prompt_ablation(
    users: &BTreeMap<String, UserTimeline>,
    truth: &BTreeMap<String, Vec<Intent>>,
    seed_stats: Option<&IntentStats>,
    backend: &dyn ChatBackend,
    variants: &[PromptVariant],
    config: &A2iConfig,
) -> Result<Vec<PromptAblationRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let run = run_a2i(users, seed_stats, backend, variant, config)?;
        let (mut pred, mut gold, mut unlabeled) = (Vec::new(), Vec::new(), 0);
        for (user, result) in &run.results {
            let labels = truth
                .get(user)
                .ok_or_else(|| invalid(format!("no true labels for user {user}")))?;
            for l in &result.labels {
                let t = *labels.get(l.stay_index).ok_or_else(|| {
                    invalid(format!("user {user} has no true label for stay {}", l.stay_index))
                })?;
                match l.intent {
                    Some(p) => {
                        pred.push(p);
                        gold.push(t);
                    }
                    None => unlabeled += 1,
                }
            }
        }
        rows.push(PromptAblationRow {
            variant,
            metrics: intent_metrics(&pred, &gold)?,
            unlabeled,
            retries: run.total_retries(),
        });
    }
    Ok(rows)
}

/// Left-aligned first column, right-aligned others, separated by two spaces.
pub fn render_text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                let _ = write!(s, "{cell:<w$}", w = widths[i]);
            } else {
                let _ = write!(s, "{cell:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols.saturating_sub(1))));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &std::path::Path, headers: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))?;
    Ok(())
}

pub const PROMPT_TABLE_HEADERS: [&str; 5] = ["Variant", "Accuracy", "Precision", "Recall", "F1 Score"];

/// Percentages with one decimal, weighted averages (so recall = accuracy).
pub fn prompt_table_rows(rows: &[PromptAblationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.variant.to_string(),
                format!("{:.1}", 100.0 * m.accuracy),
                format!("{:.1}", 100.0 * m.weighted_precision),
                format!("{:.1}", 100.0 * m.weighted_recall),
                format!("{:.1}", 100.0 * m.weighted_f1),
            ]
        })
        .collect()
}

pub const MACRO_TABLE_HEADERS: [&str; 4] = ["Variant", "Macro P", "Macro R", "Macro F1"];

pub fn macro_table_rows(rows: &[PromptAblationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.variant.to_string(),
                format!("{:.1}", 100.0 * m.macro_precision),
                format!("{:.1}", 100.0 * m.macro_recall),
                format!("{:.1}", 100.0 * m.macro_f1),
            ]
        })
        .collect()
}

pub const RANKING_TABLE_HEADERS: [&str; 5] = ["Model", "Acc@1", "Acc@5", "Acc@10", "MRR@5"];

pub fn ranking_row(name: &str, m: &RankingMetrics) -> Vec<String> {
    vec![
        name.to_string(),
        format!("{:.4}", m.acc1),
        format!("{:.4}", m.acc5),
        format!("{:.4}", m.acc10),
        format!("{:.4}", m.mrr5),
    ]
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Row-normalized confusion heatmap with percentages in each cell.
pub fn confusion_heatmap_svg(matrix: &ConfusionMatrix, title: &str) -> String {
    let cell = 56.0;
    let (left, top) = (60.0, 50.0);
    let size = cell * NUM_INTENTS as f64;
    let pct = matrix.row_normalized();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        left + size + 20.0,
        top + size + 50.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, left + size / 2.0, xml_escape(title));
    for (i, row) in pct.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let shade = (255.0 - 2.2 * v).clamp(30.0, 255.0) as u8;
            let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/>"#
            );
            let color = if v > 55.0 { "white" } else { "black" };
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{color}">{v:.1}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (k, intent) in Intent::ALL.iter().enumerate() {
        let c = k as f64 * cell + cell / 2.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, top + c + 4.0, intent.abbreviation());
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + c, top + size + 18.0, intent.abbreviation());
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#, left + size / 2.0, top + size + 38.0);
    svg.push_str("</svg>\n");
    svg
}

/// Grouped vertical bars: one group per label, one bar per series value in
/// [0, 1].
pub fn bar_chart_svg(title: &str, series_names: &[&str], groups: &[(String, Vec<f64>)]) -> String {
    let palette = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
    let (left, top, height) = (50.0, 40.0, 220.0);
    let bar = 18.0;
    let group_w = bar * series_names.len().max(1) as f64 + 24.0;
    let width = left + group_w * groups.len() as f64 + 20.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" font-family="sans-serif" font-size="11">"#,
        top + height + 60.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, xml_escape(title));
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + height, width - 10.0, top + height);
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + height * (1.0 - v);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y + 4.0);
    }
    for (g, (label, values)) in groups.iter().enumerate() {
        let x0 = left + 12.0 + g as f64 * group_w;
        for (s, &v) in values.iter().enumerate() {
            let h = height * v.clamp(0.0, 1.0);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{bar}" height="{h}" fill="{}"/>"#,
                x0 + s as f64 * bar,
                top + height - h,
                palette[s % palette.len()]
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + bar * values.len() as f64 / 2.0,
            top + height + 16.0,
            xml_escape(label)
        );
    }
    for (s, name) in series_names.iter().enumerate() {
        let x = left + s as f64 * 90.0;
        let y = top + height + 36.0;
        let _ = writeln!(svg, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, palette[s % palette.len()]);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, xml_escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(r: &[usize]) -> Vec<RankOutcome> {
        r.iter().map(|&r| RankOutcome::at(r).unwrap()).collect()
    }

    #[test]
    fn ranking_examples() {
        let o = ranks(&[1, 3, 7]);
        assert!((acc_at_k(&o, 5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(acc_at_k(&o, 10).unwrap(), 1.0);
        assert!((mrr_at_5(&o).unwrap() - (1.0 + 1.0 / 3.0) / 3.0).abs() < 1e-12);
        assert_eq!(mrr_at_5(&ranks(&[1, 1])).unwrap(), 1.0);
        assert!(acc_at_k(&[], 1).is_err());
        assert!(mrr_at_5(&[]).is_err());
        assert!(acc_at_k(&o, 0).is_err());
        assert!(RankOutcome::at(0).is_err());
        assert_eq!(acc_at_k(&[RankOutcome::missing()], 10).unwrap(), 0.0);
    }

    #[test]
    fn ranks_from_scores() {
        let scores = [0.1, 0.5, 0.5, 0.9];
        assert_eq!(RankOutcome::from_scores(&scores, 3).rank(), Some(1));
        assert_eq!(RankOutcome::from_scores(&scores, 1).rank(), Some(2));
        assert_eq!(RankOutcome::from_scores(&scores, 2).rank(), Some(3));
        assert_eq!(RankOutcome::from_scores(&scores, 9).rank(), None);
        assert_eq!(RankOutcome::from_top_list(&[4, 2, 7], 7).rank(), Some(3));
        assert_eq!(RankOutcome::from_top_list(&[4, 2, 7], 1).rank(), None);
    }

    #[test]
    fn intent_examples() {
        let truth = Intent::ALL.to_vec();
        let m = intent_metrics(&truth, &truth).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        for i in 0..NUM_INTENTS {
            for j in 0..NUM_INTENTS {
                assert_eq!(m.confusion.counts[i][j], (i == j) as u64);
            }
        }
        let pred = vec![Intent::Working; 6];
        let m = intent_metrics(&pred, &truth).unwrap();
        assert!((m.accuracy - 1.0 / 6.0).abs() < 1e-12);
        assert!((m.macro_recall - 1.0 / 6.0).abs() < 1e-12);
        assert!((m.macro_precision - 1.0 / 36.0).abs() < 1e-12);
        assert!((m.weighted_recall - m.accuracy).abs() < 1e-12);
        assert!(intent_metrics(&pred[..2], &truth).is_err());
    }

    #[test]
    fn table_rendering() {
        let t = render_text_table(&["Model", "Acc@1"], &[vec!["full".into(), "0.5000".into()]]);
        assert_eq!(t, "Model   Acc@1\n-------------\nfull   0.5000\n");
        let svg = confusion_heatmap_svg(&intent_metrics(&[Intent::AtHome], &[Intent::AtHome]).unwrap().confusion, "x");
        assert!(svg.starts_with("<svg") && svg.contains("100.0"));
        let bars = bar_chart_svg("t", &["Acc@1"], &[("weighted".into(), vec![0.4])]);
        assert!(bars.contains("weighted"));
    }
}
