use limp_core::evaluation::{ranking_metrics, ranking_row, RankingMetrics};
use serde::{Deserialize, Serialize};

use crate::config::{IntentMode, PredictorConfig};
use crate::dataset::PredictorDataset;
use crate::error::{invalid, Result};
use crate::train::{evaluate, train};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAblationRow {
    pub mode: IntentMode,
    pub metrics: RankingMetrics,
    pub best_epoch: usize,
}

/// One model per mode, same data, same seed; test-split ranking metrics.
/// Modes run sequentially in the given order.
pub fn run_model_ablation(
    dataset: &PredictorDataset,
    modes: &[IntentMode],
    config: &PredictorConfig,
    seed: u64,
) -> Result<Vec<ModelAblationRow>> {
    if modes.is_empty() {
        return Err(invalid("no intent modes requested"));
    }
    if dataset.test.is_empty() {
        return Err(invalid("the test split has no windows"));
    }
    let config = PredictorConfig {
        seed,
        ..config.clone()
    };
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let trained = train(dataset, &config, mode)?;
        let metrics = ranking_metrics(&evaluate(&trained.model, &dataset.test)?)?;
        log::info!("{}: Acc@1 {:.4}", mode.table_name(), metrics.acc1);
        rows.push(ModelAblationRow {
            mode,
            metrics,
            best_epoch: trained.best_epoch,
        });
    }
    Ok(rows)
}

/// Rows for [`limp_core::evaluation::RANKING_TABLE_HEADERS`].
pub fn model_table_rows(rows: &[ModelAblationRow]) -> Vec<Vec<String>> {
    rows.iter().map(|r| ranking_row(r.mode.table_name(), &r.metrics)).collect()
}
