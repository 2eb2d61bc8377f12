//! Ranking metrics over long score tracks and confusion-matrix statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

type TieGroups = (Vec<(u64, u64)>, u64, u64);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredTrack {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// `true` where the sample takes part in scoring.
    pub mask: Vec<bool>,
}

impl ScoredTrack {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Self {
        let mask = vec![true; scores.len()];
        Self { scores, labels, mask }
    }

    pub fn with_mask(scores: Vec<f64>, labels: Vec<bool>, mask: Vec<bool>) -> Self {
        Self { scores, labels, mask }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn extend(&mut self, other: &ScoredTrack) {
        self.scores.extend_from_slice(&other.scores);
        self.labels.extend_from_slice(&other.labels);
        self.mask.extend_from_slice(&other.mask);
    }

    /// Masked count of samples excluded from scoring.
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    fn check(&self) -> Result<()> {
        if self.labels.len() != self.scores.len() || self.mask.len() != self.scores.len() {
            return Err(invalid("scores, labels and mask differ in length"));
        }
        if self.scores.iter().zip(&self.mask).any(|(s, &m)| m && !s.is_finite()) {
            return Err(invalid("scores contain non-finite values"));
        }
        Ok(())
    }

    /// Per distinct score, from high to low: counts of `(positives, negatives)`,
    /// then the positive and negative totals.
    fn tie_groups(&self) -> Result<TieGroups> {
        self.check()?;
        let mut valid: Vec<(f64, bool)> = self
            .scores
            .iter()
            .zip(&self.labels)
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|((&s, &l), _)| (s, l))
            .collect();
        valid.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut last = f64::NAN;
        for (s, l) in valid {
            if groups.is_empty() || s != last {
                groups.push((0, 0));
                last = s;
            }
            let g = groups.last_mut().expect("just pushed");
            if l {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        let pos = groups.iter().map(|g| g.0).sum();
        let neg = groups.iter().map(|g| g.1).sum();
        Ok((groups, pos, neg))
    }
}

/// Average precision: precision at every threshold weighted by the recall
/// gained there; tied scores enter together.
pub fn auprc(track: &ScoredTrack) -> Result<f64> {
    let (groups, pos, _) = track.tie_groups()?;
    if pos == 0 {
        return Err(invalid("average precision needs at least one valid positive"));
    }
    let (mut tp, mut fp, mut ap) = (0u64, 0u64, 0.0);
    for (p, n) in groups {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// Trapezoidal ROC area, equal to the Mann–Whitney statistic with ties
/// counted as one half.
pub fn auroc(track: &ScoredTrack) -> Result<f64> {
    let (groups, pos, neg) = track.tie_groups()?;
    if pos == 0 || neg == 0 {
        return Err(invalid("ROC area needs valid positives and negatives"));
    }
    let (mut tp, mut area) = (0u64, 0.0);
    for (p, n) in groups {
        area += n as f64 * (tp as f64 + 0.5 * p as f64);
        tp += p;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// Holds each per-second arousal probability for `rate` samples, truncates
/// to the label length and scores against target arousal. With
/// `mask_nontarget`, samples labelled −1 are excluded.
pub fn challenge_arousal_track(per_second: &[f64], labels: &[i8], rate: usize, mask_nontarget: bool) -> Result<ScoredTrack> {
    if per_second.len() * rate < labels.len() {
        return Err(invalid(format!(
            "{} s of predictions cannot cover {} samples",
            per_second.len(),
            labels.len()
        )));
    }
    let scores: Vec<f64> = per_second
        .iter()
        .flat_map(|&p| std::iter::repeat_n(p, rate))
        .take(labels.len())
        .collect();
    Ok(ScoredTrack {
        scores,
        labels: labels.iter().map(|&l| l == 1).collect(),
        mask: labels.iter().map(|&l| !(mask_nontarget && l == -1)).collect(),
    })
}

/// `k × k` counts with rows indexed by the true class and columns by the
/// predicted class.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if predicted.len() != truth.len() {
        return Err(invalid("prediction and truth lengths differ"));
    }
    let mut cm = vec![vec![0u64; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(invalid(format!("class index outside 0..{k}")));
        }
        cm[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    /// `None` when the class never occurs.
    pub sensitivity: Option<f64>,
    /// `None` when every sample belongs to the class.
    pub specificity: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn one_vs_all_sens_spec(cm: &[Vec<u64>]) -> Vec<ClassRates> {
    let k = cm.len();
    let total: u64 = cm.iter().flatten().sum();
    (0..k)
        .map(|c| {
            let tp = cm[c][c];
            let actual: u64 = cm[c].iter().sum();
            let predicted: u64 = cm.iter().map(|row| row[c]).sum();
            let negatives = total - actual;
            let tn = total + tp - actual - predicted;
            ClassRates {
                sensitivity: ratio(tp, actual),
                specificity: ratio(tn, negatives),
            }
        })
        .collect()
}

/// AUROC and AUPRC of one task; `None` when undefined for the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

impl TaskScores {
    pub fn of(track: &ScoredTrack) -> Self {
        Self {
            auroc: auroc(track).ok(),
            auprc: auprc(track).ok(),
        }
    }
}

/// The six headline numbers: AUROC and AUPRC for arousal, apnea and sleep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SixMetrics {
    pub arousal: TaskScores,
    pub apnea: TaskScores,
    pub sleep: TaskScores,
}

pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    }
}
