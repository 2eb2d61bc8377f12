//! Whole-pipeline orchestration on synthetic cohorts: configuration, seed
//! derivation, the ablation suite and the end-to-end run.

mod ablation;
mod end_to_end;
pub mod report;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clinical::{predicted_summary, reference_summary, Thresholds};
use crate::error::{format_err, invalid, Error, Result};
use crate::metrics::{challenge_arousal_track, ScoredTrack};
use crate::model::ModelConfig;
use crate::prediction::PredictionTrack;
use crate::prep::{prepare_record, record_label_triples, PrepOptions, PreparedRecord, MOVING_WINDOW_SAMPLES};
use crate::record::{generate_synthetic, random_plan, PlanOptions, RawRecord, RAW_SAMPLE_RATE};
use crate::remap::{output_bin, OutputBin, TaskLabelTriple};
use crate::train::{task_tracks, TrainConfig};

pub use ablation::{run_ablation_suite, AblationOutcome, AblationRow};
pub use end_to_end::{end_to_end, EndToEndSummary};

/// Name of the resolved configuration written next to every output.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub records: usize,
    pub duration_s: usize,
    /// Length every prepared record is zero-padded to.
    pub pad_seconds: usize,
    /// Moving-normalization window in prepared samples.
    pub window: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            records: 20,
            duration_s: 1200,
            pad_seconds: 1200,
            window: MOVING_WINDOW_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random draw in the run.
    pub seed: u64,
    pub data: DataConfig,
    /// Folds to train, numbered 1..=4.
    pub folds: Vec<usize>,
    /// Fold-1 epochs per ablation experiment; the training epoch cap when
    /// unset.
    pub ablation_epochs: Option<usize>,
    pub mask_nontarget: bool,
    pub thresholds: Thresholds,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2018,
            data: DataConfig::default(),
            folds: vec![1, 2, 3, 4],
            ablation_epochs: None,
            mask_nontarget: true,
            thresholds: Thresholds::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed must fit in 63 bits"));
        }
        if self.data.records == 0 || self.data.duration_s == 0 {
            return Err(invalid("the cohort needs records of positive duration"));
        }
        if self.data.duration_s > self.data.pad_seconds {
            return Err(invalid("record duration exceeds the padded input length"));
        }
        if !(self.data.pad_seconds * crate::prep::PREPARED_RATE).is_multiple_of(self.model.total_pool()) {
            return Err(invalid("padded input length is not a multiple of the total pooling"));
        }
        if self.folds.is_empty() || self.folds.iter().any(|f| !(1..=4).contains(f)) {
            return Err(invalid("folds must be a non-empty subset of 1..=4"));
        }
        if self.data.window == 0 {
            return Err(invalid("normalization window must be positive"));
        }
        self.model.validate()
    }

    pub fn prep_options(&self, model: &ModelConfig) -> PrepOptions {
        PrepOptions {
            pad_seconds: self.data.pad_seconds,
            moving_normalization: model.moving_normalization,
            window: self.data.window,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| format_err(format!("run configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// Seed for one named stage of a run. Stage names are hashed with FNV-1a,
/// mixed with the root and finalized with splitmix64, so stages draw
/// independent streams and adding a stage never shifts another.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = root ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifier of cohort record `index`.
pub fn record_name(index: usize) -> String {
    format!("rec{index:03}")
}

/// Synthetic cohort record `index` of the run.
pub fn synth_record(cfg: &RunConfig, index: usize) -> Result<RawRecord> {
    let name = record_name(index);
    let plan = random_plan(
        stage_seed(cfg.seed, &format!("plan/{name}")),
        cfg.data.duration_s,
        &PlanOptions::default(),
    );
    let mut raw = generate_synthetic(stage_seed(cfg.seed, &format!("signal/{name}")), cfg.data.duration_s, &plan)?;
    raw.record_id = name;
    Ok(raw)
}

/// Prepared records plus the reference labels scoring needs, without the
/// bulky raw signals.
pub struct Cohort {
    pub prepared: Vec<PreparedRecord>,
    /// Per-second label triples over each record's valid length.
    pub labels: Vec<Vec<TaskLabelTriple>>,
    /// Arousal labels at the raw sample rate.
    pub arousal_raw: Vec<Vec<i8>>,
}

pub fn build_cohort(cfg: &RunConfig, prep: &PrepOptions, mut progress: impl FnMut(&str)) -> Result<Cohort> {
    let mut cohort = Cohort {
        prepared: Vec::with_capacity(cfg.data.records),
        labels: Vec::with_capacity(cfg.data.records),
        arousal_raw: Vec::with_capacity(cfg.data.records),
    };
    for i in 0..cfg.data.records {
        let raw = synth_record(cfg, i)?;
        cohort.prepared.push(prepare_record(&raw, prep)?);
        cohort.labels.push(record_label_triples(&raw));
        cohort.arousal_raw.push(raw.arousal);
    }
    progress(&format!(
        "prepared {} synthetic records of {} s (normalization {})",
        cfg.data.records,
        cfg.data.duration_s,
        if prep.moving_normalization { "on" } else { "off" }
    ));
    Ok(cohort)
}

/// Scoring inputs of one prediction against its reference labels.
pub struct RecordScoring {
    /// Arousal, apnea and sleep over non-ignored seconds.
    pub per_second: [ScoredTrack; 3],
    /// Arousal held to the raw sample rate over the valid seconds.
    pub raw_arousal: ScoredTrack,
}

/// `labels` are per-second triples and `arousal_raw` the raw-rate arousal
/// labels of the record the prediction was made for.
pub fn score_prediction(
    pred: &PredictionTrack,
    labels: &[TaskLabelTriple],
    arousal_raw: &[i8],
    mask_nontarget: bool,
) -> Result<RecordScoring> {
    if labels.len() > pred.len() || labels.len() != pred.valid_length_s {
        return Err(invalid(format!(
            "prediction for {} covers {} valid seconds, labels cover {}",
            pred.record_id,
            pred.valid_length_s,
            labels.len()
        )));
    }
    let mut bins = labels.iter().map(|&t| output_bin(t)).collect::<Result<Vec<_>>>()?;
    bins.resize(pred.len(), OutputBin::Ignore);
    Ok(RecordScoring {
        per_second: task_tracks(pred, &bins)?,
        raw_arousal: challenge_arousal_track(
            &pred.arousal()[..pred.valid_length_s],
            arousal_raw,
            RAW_SAMPLE_RATE as usize,
            mask_nontarget,
        )?,
    })
}

pub fn clinical_entry(
    pred: &PredictionTrack,
    labels: &[TaskLabelTriple],
    thresholds: &Thresholds,
) -> Result<report::ClinicalEntry> {
    Ok(report::ClinicalEntry {
        record_id: pred.record_id.clone(),
        reference: reference_summary(labels)?,
        predicted: predicted_summary(pred, thresholds, None)?,
        predicted_reference_sleep: predicted_summary(pred, thresholds, Some(labels))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[data]\nrecords = 12\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.data.records, 12);
        assert_eq!(cfg.data.duration_s, 1200);
        assert!(RunConfig::from_toml("sede = 7\n").is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let a = stage_seed(1, "plan/rec000");
        assert_eq!(a, stage_seed(1, "plan/rec000"));
        assert_ne!(a, stage_seed(1, "plan/rec001"));
        assert_ne!(a, stage_seed(2, "plan/rec000"));
    }

    #[test]
    fn invalid_folds_rejected() {
        let cfg = RunConfig {
            folds: vec![5],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
