use std::fs;
use std::path::Path;

use serde::Serialize;

use super::report;
use super::{build_cohort, clinical_entry, score_prediction, stage_seed, RunConfig, RESOLVED_CONFIG};
use crate::clinical::{cohort_stats, CohortStats};
use crate::error::{Error, Result};
use crate::metrics::{fmt_metric, ScoredTrack, SixMetrics, TaskScores};
use crate::model::Model;
use crate::record::RAW_SAMPLE_RATE;
use crate::train::{make_folds, mean_tracks, score_tracks, task_tracks, train_fold, EpochLog, RecordSource};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndToEndSummary {
    /// Testing metrics of each trained fold model.
    pub folds: Vec<(usize, SixMetrics)>,
    pub ensemble: SixMetrics,
    /// Ensemble arousal scored at the raw sample rate.
    pub challenge_arousal: TaskScores,
    pub clinical: CohortStats,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Synthesizes and prepares the cohort, trains the configured folds, and
/// scores the ensemble on the shared testing records. Writes into `out`:
/// the resolved config, `folds.jsonl`, `fold{K}/` logs and checkpoints,
/// `predictions/` ensemble tracks, and `metrics` and `clinical` reports as
/// text and JSON lines.
pub fn end_to_end(cfg: &RunConfig, out: &Path, mut progress: impl FnMut(&str)) -> Result<EndToEndSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.write(&out.join(RESOLVED_CONFIG))?;

    let cohort = build_cohort(cfg, &cfg.prep_options(&cfg.model), &mut progress)?;
    let source = RecordSource::Memory(&cohort.prepared);
    let folds = make_folds(cfg.data.records, stage_seed(cfg.seed, "folds"))?;
    write(out, "folds.jsonl", &folds.iter().map(report::json_line).collect::<String>())?;

    let testing = &folds[0].testing;
    let mut members: Vec<(usize, Model)> = Vec::new();
    for &k in &cfg.folds {
        let fold = &folds[k - 1];
        let dir = out.join(format!("fold{k}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        progress(&format!(
            "fold {k}: {} training, {} validation records",
            fold.training.len(),
            fold.validation.len()
        ));
        let mut log = String::new();
        let mut jsonl = String::new();
        let outcome = train_fold(
            &cfg.model,
            &cfg.train,
            &source,
            fold,
            stage_seed(cfg.seed, &format!("train/fold{k}")),
            Some(&dir),
            |epoch: &EpochLog| {
                let line = epoch.line();
                progress(&format!("  fold {k} {line}"));
                log.push_str(&line);
                log.push('\n');
                jsonl.push_str(&report::json_line(epoch));
            },
        )?;
        write(&dir, "train_log.txt", &log)?;
        write(&dir, "train_log.jsonl", &jsonl)?;
        members.push((k, outcome.best));
    }

    let pred_dir = out.join("predictions");
    fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
    let mut per_fold: Vec<[ScoredTrack; 3]> = vec![Default::default(); members.len()];
    let mut pooled: [ScoredTrack; 3] = Default::default();
    let mut challenge = ScoredTrack::default();
    let mut entries = Vec::new();
    for &i in testing {
        let rec = &cohort.prepared[i];
        let tracks = members
            .iter()
            .map(|(_, m)| m.predict_record(rec))
            .collect::<Result<Vec<_>>>()?;
        for (acc, t) in per_fold.iter_mut().zip(&tracks) {
            for (a, s) in acc.iter_mut().zip(task_tracks(t, &rec.bins)?) {
                a.extend(&s);
            }
        }
        let ensemble = mean_tracks(&tracks)?;
        ensemble.write(&pred_dir.join(format!("{}.txt", rec.source_id)))?;
        let scoring = score_prediction(&ensemble, &cohort.labels[i], &cohort.arousal_raw[i], cfg.mask_nontarget)?;
        for (a, s) in pooled.iter_mut().zip(&scoring.per_second) {
            a.extend(s);
        }
        challenge.extend(&scoring.raw_arousal);
        entries.push(clinical_entry(&ensemble, &cohort.labels[i], &cfg.thresholds)?);
    }

    let mut rows: Vec<(String, SixMetrics)> = members
        .iter()
        .zip(&per_fold)
        .map(|((k, _), t)| (format!("fold{k}"), score_tracks(t)))
        .collect();
    let ensemble = score_tracks(&pooled);
    rows.push(("ensemble".to_string(), ensemble));
    let challenge_arousal = TaskScores::of(&challenge);
    let mut metrics = report::metrics_table("testing records, per-second scoring", &rows);
    metrics.push_str(&format!(
        "\n# ensemble arousal at {} Hz ({})\nauroc {} auprc {}\n",
        RAW_SAMPLE_RATE,
        if cfg.mask_nontarget { "non-target seconds masked" } else { "whole track" },
        fmt_metric(challenge_arousal.auroc),
        fmt_metric(challenge_arousal.auprc),
    ));
    let mut metrics_jsonl = report::metrics_jsonl("testing", &rows);
    metrics_jsonl.push_str(&report::json_line(&serde_json::json!({
        "kind": "challenge_arousal",
        "masked": cfg.mask_nontarget,
        "scores": challenge_arousal,
    })));
    write(out, "metrics.txt", &metrics)?;
    write(out, "metrics.jsonl", &metrics_jsonl)?;

    let predicted: Vec<_> = entries.iter().map(|e| e.predicted).collect();
    let reference_sleep: Vec<_> = entries.iter().map(|e| e.predicted_reference_sleep).collect();
    let truth: Vec<_> = entries.iter().map(|e| e.reference).collect();
    let clinical = cohort_stats(&predicted, &truth)?;
    let clinical_rs = cohort_stats(&reference_sleep, &truth)?;
    write(out, "clinical.txt", &report::clinical_report(&entries, &clinical, &clinical_rs))?;
    write(out, "clinical.jsonl", &report::clinical_jsonl(&entries, &clinical, &clinical_rs))?;
    progress(&format!("reports written to {}", out.display()));

    Ok(EndToEndSummary {
        folds: rows[..members.len()]
            .iter()
            .zip(&members)
            .map(|((_, m), (k, _))| (*k, *m))
            .collect(),
        ensemble,
        challenge_arousal,
        clinical,
    })
}
