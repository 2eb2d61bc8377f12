//! Sleep efficiency, arousal and apnea-hypopnea indices, severity grades
//! and cohort-level agreement statistics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::{confusion_matrix, one_vs_all_sens_spec, ClassRates};
use crate::prediction::PredictionTrack;
use crate::remap::TaskLabelTriple;

pub const APNEA_THRESHOLD: f64 = 0.2;
pub const AROUSAL_THRESHOLD: f64 = 0.5;
pub const SLEEP_THRESHOLD: f64 = 0.5;
/// Events must last longer than this many seconds to count.
pub const MIN_EVENT_SECONDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub apnea: f64,
    pub arousal: f64,
    pub sleep: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            apnea: APNEA_THRESHOLD,
            arousal: AROUSAL_THRESHOLD,
            sleep: SLEEP_THRESHOLD,
        }
    }
}

pub fn binarize(probs: &[f64], threshold: f64) -> Vec<bool> {
    probs.iter().map(|&p| p >= threshold).collect()
}

/// Maximal runs of `true` lasting strictly longer than `min_duration_s`.
pub fn count_events(track: &[bool], min_duration_s: usize) -> usize {
    let mut count = 0;
    let mut run = 0;
    for &v in track.iter().chain(std::iter::once(&false)) {
        if v {
            run += 1;
        } else {
            if run > min_duration_s {
                count += 1;
            }
            run = 0;
        }
    }
    count
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    Normal,
    Mild,
    Moderate,
    Severe,
}

impl Grade {
    pub const ALL: [Grade; 4] = [Grade::Normal, Grade::Mild, Grade::Moderate, Grade::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Grade::Normal => "normal",
            Grade::Mild => "mild",
            Grade::Moderate => "moderate",
            Grade::Severe => "severe",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `[0,5)` normal, `[5,15)` mild, `[15,30)` moderate, `[30,∞)` severe.
pub fn grade_ahi(ahi: f64) -> Grade {
    if ahi < 5.0 {
        Grade::Normal
    } else if ahi < 15.0 {
        Grade::Mild
    } else if ahi < 30.0 {
        Grade::Moderate
    } else {
        Grade::Severe
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSummary {
    pub tst_min: f64,
    pub trt_min: f64,
    pub se: f64,
    pub arousal_events: usize,
    pub apnea_events: usize,
    /// Undefined without sleep.
    pub ai: Option<f64>,
    pub ahi: Option<f64>,
    pub grade: Option<Grade>,
}

/// Summary from 1 Hz binary tracks over `trt_s` seconds of recording.
pub fn compute_summary(sleep: &[bool], arousal: &[bool], apnea: &[bool], trt_s: f64) -> Result<ClinicalSummary> {
    if sleep.len() != arousal.len() || sleep.len() != apnea.len() {
        return Err(invalid("clinical tracks differ in length"));
    }
    if trt_s.is_nan() || trt_s <= 0.0 {
        return Err(invalid("recording time must be positive"));
    }
    let tst_s = sleep.iter().filter(|&&s| s).count() as f64;
    if tst_s > trt_s {
        return Err(invalid("sleep time exceeds recording time"));
    }
    let tst_min = tst_s / 60.0;
    let trt_min = trt_s / 60.0;
    let arousal_events = count_events(arousal, MIN_EVENT_SECONDS);
    let apnea_events = count_events(apnea, MIN_EVENT_SECONDS);
    let per_hour = |count: usize| (tst_min > 0.0).then(|| count as f64 * 60.0 / tst_min);
    let ahi = per_hour(apnea_events);
    Ok(ClinicalSummary {
        tst_min,
        trt_min,
        se: tst_min / trt_min,
        arousal_events,
        apnea_events,
        ai: per_hour(arousal_events),
        ahi,
        grade: ahi.map(grade_ahi),
    })
}

/// Summary of annotated per-second labels over their full length.
pub fn reference_summary(labels: &[TaskLabelTriple]) -> Result<ClinicalSummary> {
    let sleep: Vec<bool> = labels.iter().map(|t| t.sleep == 1).collect();
    let arousal: Vec<bool> = labels.iter().map(|t| t.arousal == 1).collect();
    let apnea: Vec<bool> = labels.iter().map(|t| t.apnea == 1).collect();
    compute_summary(&sleep, &arousal, &apnea, labels.len() as f64)
}

/// Summary of a prediction over its valid seconds. With `reference_sleep`
/// the annotated sleep track replaces the predicted one for TST.
pub fn predicted_summary(
    track: &PredictionTrack,
    thresholds: &Thresholds,
    reference_sleep: Option<&[TaskLabelTriple]>,
) -> Result<ClinicalSummary> {
    let n = track.valid_length_s;
    if n == 0 {
        return Err(invalid("prediction has no valid seconds"));
    }
    let sleep = match reference_sleep {
        Some(labels) if labels.len() < n => return Err(invalid("reference labels are shorter than the prediction")),
        Some(labels) => labels[..n].iter().map(|t| t.sleep == 1).collect(),
        None => binarize(&track.sleep()[..n], thresholds.sleep),
    };
    let arousal = binarize(&track.arousal()[..n], thresholds.arousal);
    let apnea = binarize(&track.apnea()[..n], thresholds.apnea);
    compute_summary(&sleep, &arousal, &apnea, n as f64)
}

/// Agreement rates derived from a 4 × 4 grade confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeAgreement {
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: Option<f64>,
    /// True-normal subjects graded higher.
    pub normal_osr: Option<f64>,
    /// True mild, moderate and severe subjects graded lower.
    pub usr: [Option<f64>; 3],
    pub rates: Vec<ClassRates>,
}

pub fn grade_agreement(cm: &[Vec<u64>]) -> Result<GradeAgreement> {
    if cm.len() != 4 || cm.iter().any(|r| r.len() != 4) {
        return Err(invalid("grade confusion matrix must be 4 × 4"));
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let total: u64 = cm.iter().flatten().sum();
    let trace: u64 = (0..4).map(|i| cm[i][i]).sum();
    let row = |g: usize| cm[g].iter().sum::<u64>();
    let usr = [1, 2, 3].map(|g| ratio(cm[g][..g].iter().sum(), row(g)));
    Ok(GradeAgreement {
        confusion: cm.to_vec(),
        accuracy: ratio(trace, total),
        normal_osr: ratio(cm[0][1..].iter().sum(), row(0)),
        usr,
        rates: one_vs_all_sens_spec(cm),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub subjects: usize,
    pub mae_se: f64,
    /// Over subjects where both indices are defined.
    pub mae_ai: Option<f64>,
    pub mae_ahi: Option<f64>,
    pub mean_true_ahi: Option<f64>,
    pub mean_pred_ahi: Option<f64>,
    pub grades: GradeAgreement,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn cohort_stats(pred: &[ClinicalSummary], truth: &[ClinicalSummary]) -> Result<CohortStats> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(invalid("cohort needs equally many predicted and true summaries"));
    }
    let pairs = || pred.iter().zip(truth);
    let abs_diff = |f: fn(&ClinicalSummary) -> Option<f64>| {
        mean(pairs().filter_map(|(p, t)| Some((f(p)? - f(t)?).abs())))
    };
    // subjects without sleep have no grade; they count as normal
    let grade_of = |s: &ClinicalSummary| s.grade.unwrap_or(Grade::Normal).index();
    let cm = confusion_matrix(
        &pred.iter().map(grade_of).collect::<Vec<_>>(),
        &truth.iter().map(grade_of).collect::<Vec<_>>(),
        4,
    )?;
    Ok(CohortStats {
        subjects: pred.len(),
        mae_se: mean(pairs().map(|(p, t)| (p.se - t.se).abs())).expect("non-empty"),
        mae_ai: abs_diff(|s| s.ai),
        mae_ahi: abs_diff(|s| s.ahi),
        mean_true_ahi: mean(truth.iter().filter_map(|s| s.ahi)),
        mean_pred_ahi: mean(pred.iter().filter_map(|s| s.ahi)),
        grades: grade_agreement(&cm)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_is_inclusive() {
        assert_eq!(binarize(&[0.1, 0.2, 0.3], 0.2), vec![false, true, true]);
        assert_eq!(binarize(&[0.0, 0.0], 0.0), vec![true, true]);
    }

    #[test]
    fn event_strictness() {
        assert_eq!(count_events(&[true; 11], 10), 1);
        assert_eq!(count_events(&[true; 10], 10), 0);
        let mut two = vec![true; 15];
        two.push(false);
        two.extend([true; 15]);
        assert_eq!(count_events(&two, 10), 2);
        let alt: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        assert_eq!(count_events(&alt, 10), 0);
    }

    #[test]
    fn grade_boundaries() {
        assert_eq!(grade_ahi(0.0), Grade::Normal);
        assert_eq!(grade_ahi(4.99), Grade::Normal);
        assert_eq!(grade_ahi(5.0), Grade::Mild);
        assert_eq!(grade_ahi(15.0), Grade::Moderate);
        assert_eq!(grade_ahi(30.0), Grade::Severe);
    }

    #[test]
    fn summary_formulas() {
        let n = 360 * 60;
        let sleep = vec![true; n];
        let mut arousal = vec![false; n];
        for k in 0..3 {
            arousal[1000 * (k + 1)..1000 * (k + 1) + 12].fill(true);
        }
        let s = compute_summary(&sleep, &arousal, &vec![false; n], n as f64).unwrap();
        assert_eq!(s.se, 1.0);
        assert_eq!(s.ai, Some(0.5));
        assert_eq!(s.ahi, Some(0.0));
    }

    #[test]
    fn no_sleep_leaves_indices_undefined() {
        let s = compute_summary(&[false; 60], &[false; 60], &[false; 60], 60.0).unwrap();
        assert_eq!(s.ai, None);
        assert_eq!(s.grade, None);
    }
}
