use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_cohort, stage_seed, Cohort, RunConfig};
use crate::error::{invalid, Error, Result};
use crate::metrics::SixMetrics;
use crate::model::ABLATIONS;
use crate::train::{evaluate_records, make_folds, train_fold, EpochLog, RecordSource, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Best checkpoint on the fold's validation records.
    pub validation: SixMetrics,
    /// Best checkpoint on the shared testing records.
    pub testing: SixMetrics,
    pub training_arousal_auprc: Option<f64>,
    /// False when the auxiliary heads were not trained.
    pub auxiliary_valid: bool,
    /// Validation AUPRC per epoch for arousal, apnea and sleep.
    pub progress: Vec<[Option<f64>; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub experiment: usize,
    pub description: String,
    /// A failed experiment keeps its error and does not stop the suite.
    pub outcome: std::result::Result<AblationOutcome, String>,
}

/// Trains each listed experiment on fold 1 and scores its best checkpoint.
/// Every experiment shares the fold split and the training seed, so rows
/// differ only by their configuration change. Per-experiment logs and
/// checkpoints go to `out_dir/exp{N}` when given.
pub fn run_ablation_suite(
    cfg: &RunConfig,
    experiments: &[usize],
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&str),
) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    if experiments.is_empty() {
        return Err(invalid("no ablation experiments selected"));
    }
    if let Some(&bad) = experiments.iter().find(|&&e| !(1..=ABLATIONS.len()).contains(&e)) {
        return Err(invalid(format!("ablation experiment {bad} outside 1..={}", ABLATIONS.len())));
    }
    let folds = make_folds(cfg.data.records, stage_seed(cfg.seed, "folds"))?;
    let fold = &folds[0];
    let train = TrainConfig {
        max_epochs: cfg.ablation_epochs.unwrap_or(cfg.train.max_epochs),
        ..cfg.train.clone()
    };
    let mut normalized: Option<Cohort> = None;
    let mut unnormalized: Option<Cohort> = None;
    let mut rows = Vec::new();
    for &e in experiments {
        let description = ABLATIONS[e - 1].to_string();
        progress(&format!("experiment {e}: {description}"));
        let outcome = (|| -> Result<AblationOutcome> {
            let model = cfg.model.apply_ablation(e)?;
            let slot = if model.moving_normalization { &mut normalized } else { &mut unnormalized };
            if slot.is_none() {
                *slot = Some(build_cohort(cfg, &cfg.prep_options(&model), &mut progress)?);
            }
            let cohort = slot.as_ref().expect("cohort built above");
            let source = RecordSource::Memory(&cohort.prepared);
            let dir = out_dir.map(|d| d.join(format!("exp{e}")));
            if let Some(d) = &dir {
                fs::create_dir_all(d).map_err(|err| Error::io(d, err))?;
            }
            let mut log = String::new();
            let mut jsonl = String::new();
            let out = train_fold(
                &model,
                &train,
                &source,
                fold,
                stage_seed(cfg.seed, "train/fold1"),
                dir.as_deref(),
                |epoch: &EpochLog| {
                    let line = epoch.line();
                    progress(&format!("  exp {e} {line}"));
                    log.push_str(&line);
                    log.push('\n');
                    jsonl.push_str(&serde_json::to_string(epoch).expect("epoch log serializes"));
                    jsonl.push('\n');
                },
            )?;
            if let Some(d) = &dir {
                let write = |name: &str, text: &str| {
                    let p = d.join(name);
                    fs::write(&p, text).map_err(|err| Error::io(&p, err))
                };
                write("train_log.txt", &log)?;
                write("train_log.jsonl", &jsonl)?;
            }
            Ok(AblationOutcome {
                best_epoch: out.best_epoch,
                epochs_run: out.history.len(),
                validation: evaluate_records(&out.best, &source, &fold.validation)?,
                testing: evaluate_records(&out.best, &source, &fold.testing)?,
                training_arousal_auprc: evaluate_records(&out.best, &source, &fold.training)?.arousal.auprc,
                auxiliary_valid: model.multi_task,
                progress: out
                    .history
                    .iter()
                    .map(|h| [h.validation.arousal.auprc, h.validation.apnea.auprc, h.validation.sleep.auprc])
                    .collect(),
            })
        })();
        if let Err(err) = &outcome {
            progress(&format!("experiment {e} failed: {err}"));
        }
        rows.push(AblationRow {
            experiment: e,
            description,
            outcome: outcome.map_err(|err| err.to_string()),
        });
    }
    Ok(rows)
}
