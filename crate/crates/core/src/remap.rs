//! Joint encoding of the three task labels, the remap onto the four output
//! classes, task marginals and the masked multi-task loss.
//!
//! A label triple `(arousal, apnea, sleep)` indexes one of 18 combinations
//! `f = (arousal + 1)·6 + apnea·3 + (sleep + 1)`. Twelve combinations occur
//! in scored data; they are numbered 0..11 in ascending order of `f`. Those
//! with undefined sleep are ignored, apnea while awake joins apnea, non-target
//! arousal during sleep joins wake, and wake, apnea, normal sleep and target
//! arousal map to themselves.

use std::fmt;

use autodiff::Tensor;

use crate::error::{invalid, Result};

/// Combination indices that can occur, in bin order.
pub const NON_EMPTY: [usize; 12] = [0, 1, 2, 3, 4, 5, 6, 8, 9, 12, 14, 15];
/// Bins with undefined sleep state.
pub const IGNORED_BINS: [u8; 6] = [0, 3, 6, 8, 9, 11];

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TaskLabelTriple {
    pub arousal: i8,
    pub apnea: i8,
    pub sleep: i8,
}

impl TaskLabelTriple {
    pub fn new(arousal: i8, apnea: i8, sleep: i8) -> Self {
        Self { arousal, apnea, sleep }
    }

    /// All 18 syntactically valid triples.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::with_capacity(18);
        for arousal in -1..=1 {
            for apnea in 0..=1 {
                for sleep in -1..=1 {
                    out.push(Self::new(arousal, apnea, sleep));
                }
            }
        }
        out
    }
}

impl fmt::Display for TaskLabelTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(arousal {}, apnea {}, sleep {})", self.arousal, self.apnea, self.sleep)
    }
}

pub fn full_index(t: TaskLabelTriple) -> Result<usize> {
    if !(-1..=1).contains(&t.arousal) || !(0..=1).contains(&t.apnea) || !(-1..=1).contains(&t.sleep) {
        return Err(invalid(format!("label triple {t} outside the label domains")));
    }
    Ok(((t.arousal + 1) * 6 + t.apnea * 3 + (t.sleep + 1)) as usize)
}

/// Bin number 0..11 of a triple; the six impossible combinations are errors.
pub fn encode_bin(t: TaskLabelTriple) -> Result<u8> {
    let f = full_index(t)?;
    NON_EMPTY
        .iter()
        .position(|&x| x == f)
        .map(|b| b as u8)
        .ok_or_else(|| invalid(format!("label triple {t} is an impossible combination")))
}

/// Training target classes after the remap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputBin {
    Ignore,
    Wake,
    ApneaHypopnea,
    NormalSleep,
    TargetArousal,
}

impl OutputBin {
    pub const CLASSES: [OutputBin; 4] = [
        OutputBin::Wake,
        OutputBin::ApneaHypopnea,
        OutputBin::NormalSleep,
        OutputBin::TargetArousal,
    ];

    /// Bin number of the class.
    pub fn code(self) -> u8 {
        match self {
            OutputBin::Ignore => 0,
            OutputBin::Wake => 1,
            OutputBin::ApneaHypopnea => 5,
            OutputBin::NormalSleep => 7,
            OutputBin::TargetArousal => 10,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => OutputBin::Ignore,
            1 => OutputBin::Wake,
            5 => OutputBin::ApneaHypopnea,
            7 => OutputBin::NormalSleep,
            10 => OutputBin::TargetArousal,
            _ => return None,
        })
    }

    /// Row of the model output holding this class.
    pub fn channel(self) -> Option<usize> {
        match self {
            OutputBin::Ignore => None,
            OutputBin::Wake => Some(0),
            OutputBin::ApneaHypopnea => Some(1),
            OutputBin::NormalSleep => Some(2),
            OutputBin::TargetArousal => Some(3),
        }
    }

    pub fn is_ignored(self) -> bool {
        self == OutputBin::Ignore
    }

    /// Binary targets `(arousal, apnea, sleep)`, `None` when ignored.
    pub fn targets(self) -> Option<[bool; 3]> {
        match self {
            OutputBin::Ignore => None,
            OutputBin::Wake => Some([false, false, false]),
            OutputBin::ApneaHypopnea => Some([false, true, true]),
            OutputBin::NormalSleep => Some([false, false, true]),
            OutputBin::TargetArousal => Some([true, false, true]),
        }
    }
}

pub fn remap(bin12: u8) -> Result<OutputBin> {
    Ok(match bin12 {
        0 | 3 | 6 | 8 | 9 | 11 => OutputBin::Ignore,
        1 | 2 => OutputBin::Wake,
        4 | 5 => OutputBin::ApneaHypopnea,
        7 => OutputBin::NormalSleep,
        10 => OutputBin::TargetArousal,
        other => return Err(invalid(format!("bin {other} outside 0..11"))),
    })
}

pub fn output_bin(t: TaskLabelTriple) -> Result<OutputBin> {
    remap(encode_bin(t)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marginals {
    pub arousal: f64,
    pub apnea: f64,
    pub sleep: f64,
}

const DISTRIBUTION_TOL: f64 = 1e-6;

/// Task probabilities from a distribution over `[wake, apnea, normal, arousal]`.
pub fn marginals(p: [f64; 4]) -> Result<Marginals> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("{p:?} is not a probability vector")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(invalid(format!("{p:?} sums to {total}")));
    }
    Ok(marginals_unchecked(p))
}

pub(crate) fn marginals_unchecked(p: [f64; 4]) -> Marginals {
    Marginals {
        arousal: p[3],
        apnea: p[1],
        sleep: p[1] + p[2] + p[3],
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub arousal: f64,
    pub apnea: f64,
    pub sleep: f64,
}

impl LossWeights {
    pub const MULTI_TASK: LossWeights = LossWeights {
        arousal: 2.0,
        apnea: 1.0,
        sleep: 1.0,
    };
    pub const AROUSAL_ONLY: LossWeights = LossWeights {
        arousal: 1.0,
        apnea: 0.0,
        sleep: 0.0,
    };
}

/// Binary cross-entropy with the probability clamped to `[1e-12, 1 − 1e-12]`;
/// returns the loss and its derivative in `m` (zero where clamped).
pub fn bce(m: f64, target: bool) -> (f64, f64) {
    let q = if target { m } else { 1.0 - m };
    let sign = if target { -1.0 } else { 1.0 };
    if q < PROB_CLAMP {
        (-PROB_CLAMP.ln(), 0.0)
    } else {
        (-q.ln(), sign / q)
    }
}

/// Weighted sum of the three task BCE losses averaged over non-ignored
/// samples, with its gradient in the `4 × N` probabilities. All-ignored
/// input yields loss 0 and a zero gradient.
pub fn multitask_loss(probs: &Tensor, bins: &[OutputBin], w: LossWeights) -> Result<(f64, Tensor)> {
    if probs.shape() != [4, bins.len()] {
        return Err(invalid(format!(
            "probabilities {:?} do not match {} labels",
            probs.shape(),
            bins.len()
        )));
    }
    let n = bins.len();
    let mut grad = Tensor::zeros(&[4, n]);
    let valid = bins.iter().filter(|b| !b.is_ignored()).count();
    if valid == 0 {
        log::warn!("every sample is ignored; loss is defined as 0");
        return Ok((0.0, grad));
    }
    let scale = 1.0 / valid as f64;
    let mut total = 0.0;
    for (t, bin) in bins.iter().enumerate() {
        let Some([ya, yp, ys]) = bin.targets() else { continue };
        let p = [probs.get2(0, t), probs.get2(1, t), probs.get2(2, t), probs.get2(3, t)];
        let m = marginals_unchecked(p);
        let (la, da) = bce(m.arousal, ya);
        let (lp, dp) = bce(m.apnea, yp);
        let (ls, ds) = bce(m.sleep, ys);
        total += w.arousal * la + w.apnea * lp + w.sleep * ls;
        let (da, dp, ds) = (w.arousal * da * scale, w.apnea * dp * scale, w.sleep * ds * scale);
        let g = grad.data_mut();
        // p_sleep = p1 + p2 + p3, p_apnea = p1, p_arousal = p3
        g[n + t] += dp + ds;
        g[2 * n + t] += ds;
        g[3 * n + t] += da + ds;
    }
    Ok((total * scale, grad))
}
