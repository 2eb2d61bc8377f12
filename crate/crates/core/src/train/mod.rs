//! Record-sampling training with validation-driven checkpoints, and
//! ensembling of fold models.

mod adam;
mod folds;
mod source;

use std::collections::BTreeMap;
use std::path::Path;

use autodiff::ops::BatchNormMode;
use autodiff::{Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{ScoredTrack, SixMetrics, TaskScores};
use crate::model::{Bound, Model, ModelConfig};
use crate::prediction::PredictionTrack;
use crate::prep::PreparedRecord;
use crate::remap::{multitask_loss, LossWeights, OutputBin};

pub use adam::{Adam, AdamConfig};
pub use folds::{make_folds, FoldPlan, MIN_RECORDS};
pub use source::RecordSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation score.
    pub patience: usize,
    pub records_per_epoch: usize,
    pub optimizer: AdamConfig,
    /// Keep the model with the best validation arousal average precision.
    pub checkpoint_on_auprc: bool,
    /// Additionally keep the model with the best validation arousal AUROC.
    pub snapshot_on_auroc: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            patience: 50,
            records_per_epoch: 100,
            optimizer: AdamConfig::default(),
            checkpoint_on_auprc: true,
            snapshot_on_auroc: true,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            max_epochs: 60,
            records_per_epoch: 8,
            ..Self::default()
        }
    }
}

pub fn loss_weights(config: &ModelConfig) -> LossWeights {
    if config.multi_task {
        LossWeights::MULTI_TASK
    } else {
        LossWeights::AROUSAL_ONLY
    }
}

/// One optimization step on a full record; returns the loss.
pub fn train_step(model: &mut Model, adam: &mut Adam, record: &PreparedRecord) -> Result<f64> {
    let vars = model.bind(true);
    let input = Var::constant(record.input_tensor());
    let probs = Bound {
        config: &model.config,
        vars: &vars,
        stats: &mut model.stats,
        mode: BatchNormMode::Train,
    }
    .forward(&input)?;
    let (loss, grad) = multitask_loss(probs.value(), &record.bins, loss_weights(&model.config))?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss is {loss} on record {}", record.source_id)));
    }
    probs.backward_with(grad)?;
    drop(probs);
    let mut grads = BTreeMap::new();
    for (name, v) in vars {
        let g = v.take_grad().unwrap_or_else(|| Tensor::zeros(v.shape()));
        if !g.is_finite() {
            return Err(Error::Numerical(format!("gradient of {name} is not finite")));
        }
        grads.insert(name, g);
    }
    adam.update(&mut model.params, &grads)?;
    Ok(loss)
}

/// Per-second task tracks of a prediction against output bins, over
/// non-ignored seconds only.
pub fn task_tracks(pred: &PredictionTrack, bins: &[OutputBin]) -> Result<[ScoredTrack; 3]> {
    if pred.len() != bins.len() {
        return Err(invalid("prediction and labels differ in length"));
    }
    let mut tracks: [ScoredTrack; 3] = Default::default();
    for (p, bin) in pred.probs.iter().zip(bins) {
        let Some(targets) = bin.targets() else { continue };
        let m = crate::remap::marginals_unchecked(*p);
        for (k, score) in [m.arousal, m.apnea, m.sleep].into_iter().enumerate() {
            tracks[k].scores.push(score);
            tracks[k].labels.push(targets[k]);
            tracks[k].mask.push(true);
        }
    }
    Ok(tracks)
}

pub fn score_tracks(tracks: &[ScoredTrack; 3]) -> SixMetrics {
    SixMetrics {
        arousal: TaskScores::of(&tracks[0]),
        apnea: TaskScores::of(&tracks[1]),
        sleep: TaskScores::of(&tracks[2]),
    }
}

/// The six metrics of `model` over the pooled seconds of `records`.
pub fn evaluate_records(model: &Model, source: &RecordSource, indices: &[usize]) -> Result<SixMetrics> {
    let mut pooled: [ScoredTrack; 3] = Default::default();
    source.for_each(indices, |rec| {
        let pred = model.predict_record(rec)?;
        for (acc, t) in pooled.iter_mut().zip(task_tracks(&pred, &rec.bins)?) {
            acc.extend(&t);
        }
        Ok(())
    })?;
    Ok(score_tracks(&pooled))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation: SixMetrics,
    /// New best arousal average precision (checkpoint written).
    pub checkpoint: bool,
    /// New best arousal AUROC (snapshot written).
    pub auroc_snapshot: bool,
}

impl EpochLog {
    pub fn line(&self) -> String {
        use crate::metrics::fmt_metric as f;
        let v = &self.validation;
        format!(
            "epoch {:>3} loss {:.6} | arousal auroc {} auprc {} | apnea auroc {} auprc {} | sleep auroc {} auprc {}{}{}",
            self.epoch,
            self.mean_loss,
            f(v.arousal.auroc),
            f(v.arousal.auprc),
            f(v.apnea.auroc),
            f(v.apnea.auprc),
            f(v.sleep.auroc),
            f(v.sleep.auprc),
            if self.checkpoint { " *" } else { "" },
            if self.auroc_snapshot { " +" } else { "" },
        )
    }
}

pub struct TrainOutcome {
    /// Model with the best validation arousal average precision.
    pub best: Model,
    pub best_epoch: usize,
    pub best_auprc: f64,
    pub best_auroc_model: Option<Model>,
    pub history: Vec<EpochLog>,
}

/// Trains one fold. Each epoch draws `records_per_epoch` training records
/// uniformly with replacement, takes one step per record, then scores the
/// validation split. When `out_dir` is given the best models are written to
/// `best/` and `best_auroc/` under it.
pub fn train_fold(
    config: &ModelConfig,
    train: &TrainConfig,
    source: &RecordSource,
    fold: &FoldPlan,
    seed: u64,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if fold.training.is_empty() || fold.validation.is_empty() {
        return Err(invalid("fold needs training and validation records"));
    }
    if train.records_per_epoch == 0 || train.max_epochs == 0 {
        return Err(invalid("epochs and records per epoch must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::init(config, rng.random())?;
    let mut adam = Adam::new(train.optimizer, &model.params);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_auprc = 0.0;
    let mut best_auroc = 0.0;
    let mut best_auroc_model = None;
    let mut history = Vec::new();
    let mut since_best = 0;

    for epoch in 1..=train.max_epochs {
        let picks: Vec<usize> = (0..train.records_per_epoch)
            .map(|_| fold.training[rng.random_range(0..fold.training.len())])
            .collect();
        let mut total = 0.0;
        source.for_each(&picks, |rec| {
            total += train_step(&mut model, &mut adam, rec)?;
            Ok(())
        })?;
        let validation = evaluate_records(&model, source, &fold.validation)?;
        let auprc = validation.arousal.auprc.unwrap_or(0.0);
        let auroc = validation.arousal.auroc.unwrap_or(0.0);
        let checkpoint = train.checkpoint_on_auprc && auprc > best_auprc;
        let auroc_snapshot = train.snapshot_on_auroc && auroc > best_auroc;
        if checkpoint {
            best_auprc = auprc;
            best_epoch = epoch;
            best = model.clone();
            since_best = 0;
            if let Some(dir) = out_dir {
                best.save_with_meta(&dir.join("best"), &checkpoint_meta(fold, epoch, &validation))?;
            }
        } else {
            since_best += 1;
        }
        if auroc_snapshot {
            best_auroc = auroc;
            if let Some(dir) = out_dir {
                model.save_with_meta(&dir.join("best_auroc"), &checkpoint_meta(fold, epoch, &validation))?;
            }
            best_auroc_model = Some(model.clone());
        }
        let log = EpochLog {
            epoch,
            mean_loss: total / picks.len() as f64,
            validation,
            checkpoint,
            auroc_snapshot,
        };
        on_epoch(&log);
        history.push(log);
        if since_best >= train.patience {
            break;
        }
    }
    if !train.checkpoint_on_auprc {
        best = model;
        best_epoch = history.len();
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_auprc,
        best_auroc_model,
        history,
    })
}

fn checkpoint_meta(fold: &FoldPlan, epoch: usize, v: &SixMetrics) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("fold".to_string(), fold.fold.to_string());
    meta.insert("epoch".to_string(), epoch.to_string());
    if let Some(x) = v.arousal.auprc {
        meta.insert("validation_arousal_auprc".to_string(), x.to_string());
    }
    if let Some(x) = v.arousal.auroc {
        meta.insert("validation_arousal_auroc".to_string(), x.to_string());
    }
    meta
}

/// Pairwise sum, so identical members average back to themselves exactly
/// when their count is a power of two.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

const RENORMALIZE_TOL: f64 = 1e-6;

/// Elementwise mean of member tracks; columns are renormalized only if they
/// drift from unit sum by more than 1e-6.
pub fn mean_tracks(tracks: &[PredictionTrack]) -> Result<PredictionTrack> {
    let first = tracks.first().ok_or_else(|| invalid("ensemble needs at least one member"))?;
    if tracks.iter().any(|t| t.len() != first.len()) {
        return Err(invalid("ensemble members produce different lengths"));
    }
    let k = tracks.len() as f64;
    let mut column = vec![0.0; tracks.len()];
    let probs = (0..first.len())
        .map(|t| {
            let mut p = [0.0; 4];
            for (c, slot) in p.iter_mut().enumerate() {
                for (m, track) in tracks.iter().enumerate() {
                    column[m] = track.probs[t][c];
                }
                *slot = pairwise_sum(&column) / k;
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > RENORMALIZE_TOL {
                for v in &mut p {
                    *v /= s;
                }
            }
            p
        })
        .collect();
    Ok(PredictionTrack {
        record_id: first.record_id.clone(),
        probs,
        valid_length_s: first.valid_length_s,
    })
}

pub fn ensemble_predict(models: &[Model], record: &PreparedRecord) -> Result<PredictionTrack> {
    let tracks = models
        .iter()
        .map(|m| m.predict_record(record))
        .collect::<Result<Vec<_>>>()?;
    mean_tracks(&tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(p: [f64; 4]) -> PredictionTrack {
        PredictionTrack {
            record_id: "r".into(),
            probs: vec![p; 3],
            valid_length_s: 3,
        }
    }

    #[test]
    fn identical_members_average_to_themselves() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let t = track(p);
        assert_eq!(mean_tracks(&[t.clone(), t.clone(), t.clone(), t.clone()]).unwrap(), t);
    }

    #[test]
    fn mismatched_lengths_fail() {
        let mut b = track([0.25; 4]);
        b.probs.pop();
        assert!(mean_tracks(&[track([0.25; 4]), b]).is_err());
    }
}
