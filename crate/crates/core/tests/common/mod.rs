//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;

use autodiff::gradcheck::{grad_check, random_tensor, GradCheckReport};
use autodiff::ops::{BatchNormMode, RunningStats};
use autodiff::{Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sleepnet::model::layout::{unit_params, Stage, UnitShape};
use sleepnet::model::{Bound, ModelConfig};
use sleepnet::pipeline::{DataConfig, RunConfig};
use sleepnet::remap::OutputBin;
use sleepnet::train::TrainConfig;

/// Average precision by sweeping every distinct score as a threshold.
pub fn brute_auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Probability that a random positive outranks a random negative, ties ½.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let mut i = i;
    let last = n as isize - 1;
    loop {
        if i < 0 {
            i = -i;
        } else if i > last {
            i = 2 * last - i;
        } else {
            return i as usize;
        }
    }
}

/// Moving-window standardization by explicit summation over every window.
pub fn direct_moving_normalize(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let left = (window / 2) as isize;
    let window_mean = |v: &[f64], t: usize, f: &dyn Fn(f64) -> f64| {
        let mut s = 0.0;
        for k in 0..window as isize {
            s += f(v[mirror(t as isize - left + k, n)]);
        }
        s / window as f64
    };
    let mean: Vec<f64> = (0..n).map(|t| window_mean(x, t, &|v| v)).collect();
    let centred: Vec<f64> = x.iter().zip(&mean).map(|(a, m)| a - m).collect();
    (0..n)
        .map(|t| {
            let rms = window_mean(&centred, t, &|v| v * v).sqrt();
            centred[t] / rms.max(1e-6)
        })
        .collect()
}

/// Same as [`direct_moving_normalize`] but with O(N) running sums, for
/// checking long signals against wide windows.
pub fn running_sum_moving_normalize(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let left = (window / 2) as isize;
    let moving_mean = |v: &[f64], f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut s: f64 = (0..window as isize).map(|k| f(v[mirror(k - left, n)])).sum();
        let mut out = Vec::with_capacity(n);
        for t in 0..n as isize {
            out.push(s / window as f64);
            s += f(v[mirror(t + 1 - left + window as isize - 1, n)]) - f(v[mirror(t - left, n)]);
        }
        out
    };
    let mean = moving_mean(x, &|v| v);
    let centred: Vec<f64> = x.iter().zip(&mean).map(|(a, m)| a - m).collect();
    let power = moving_mean(&centred, &|v| v * v);
    centred
        .iter()
        .zip(&power)
        .map(|(c, p)| c / p.max(0.0).sqrt().max(1e-6))
        .collect()
}

/// Direct-form magnitude response of an FIR kernel at `hz`.
pub fn fir_response(taps: &[f64], sample_rate: f64, hz: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * hz / sample_rate;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (k, &h)| (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin()));
    re.hypot(im)
}

/// Gradient check of one second-stage unit (weight, position-wise and batch
/// normalization, dilated depthwise-separable sub-layers) over a random
/// small geometry, differentiating the input and every parameter.
///
/// Normalized widths start at three: position-wise normalization over one or
/// two channels yields a constant (0 or ±1), so the true gradient is zero and
/// finite differences would only measure roundoff.
pub fn dcu2_gradcheck(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    dcu2_gradcheck_step(rng, seed, 1e-5).0
}

pub fn dcu2_gradcheck_step(rng: &mut ChaCha8Rng, seed: u64, h: f64) -> (GradCheckReport, UnitShape, Vec<String>) {
    let unit = UnitShape {
        prefix: "u".to_string(),
        stage: Stage::Second,
        input: rng.random_range(2..=4),
        growth: rng.random_range(3..=4),
        output: rng.random_range(3..=5),
        sublayers: rng.random_range(2..=3),
        dilation: rng.random_range(1..=3),
        weight_norm: true,
        positionwise: true,
    };
    let t = rng.random_range(6..=12);
    let kernel = 3;
    let mut specs = Vec::new();
    unit_params(&unit, kernel, &mut specs);
    let mut inputs = vec![random_tensor(rng, &[unit.input, t], 0.0, 1.5)];
    let mut names = Vec::new();
    for s in &specs {
        let positive = s.name.ends_with(".g") || s.name.ends_with(".gamma");
        inputs.push(if positive {
            random_tensor(rng, &s.shape, 0.5, 1.5).map(f64::abs)
        } else {
            random_tensor(rng, &s.shape, 0.1, 1.0)
        });
        names.push(s.name.clone());
    }
    let stats: BTreeMap<String, RunningStats> = (0..unit.sublayers)
        .map(|i| (format!("u.sub{i}.bn"), RunningStats::new(unit.sublayer(i).1)))
        .collect();
    let config = ModelConfig::default();
    let report = grad_check(
        |v| {
            let vars: BTreeMap<String, Var> = names.iter().cloned().zip(v[1..].iter().cloned()).collect();
            let mut st = stats.clone();
            let mut net = Bound {
                config: &config,
                vars: &vars,
                stats: &mut st,
                mode: BatchNormMode::Train,
            };
            Ok(net.unit(&v[0], &unit).expect("unit forward"))
        },
        &inputs,
        h,
        seed,
    )
    .expect("gradient check runs");
    (report, unit, names)
}

/// Smallest model used where the whole network must be differentiated.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        dcu1_widths: vec![4, 6, 6],
        dcu1_growth: 3,
        dcu2_width: 6,
        dcu2_growth: 3,
        sublayers: 2,
        dilation_schedule: vec![1, 2, 1],
        lstm_hidden: 3,
        head_width: 4,
        ..ModelConfig::default()
    }
}

/// A cohort and schedule small enough for tests that train.
pub fn small_run() -> RunConfig {
    RunConfig {
        seed: 11,
        data: DataConfig {
            records: 10,
            duration_s: 600,
            pad_seconds: 600,
            window: 1500,
        },
        folds: vec![1, 2],
        model: tiny_model(),
        train: TrainConfig {
            max_epochs: 3,
            records_per_epoch: 2,
            ..TrainConfig::desk()
        },
        ..RunConfig::default()
    }
}

pub fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.channels()).map(|c| t.row(c).to_vec()).collect()
}

// Written out by hand from the label semantics rather than derived from the
// encoder: impossible combinations are None.
pub const REMAP_TRUTH: [((i8, i8, i8), Option<OutputBin>); 18] = {
    use OutputBin::*;
    [
        ((-1, 0, -1), Some(Ignore)),
        ((-1, 0, 0), Some(Wake)),
        ((-1, 0, 1), Some(Wake)),
        ((-1, 1, -1), Some(Ignore)),
        ((-1, 1, 0), Some(ApneaHypopnea)),
        ((-1, 1, 1), Some(ApneaHypopnea)),
        ((0, 0, -1), Some(Ignore)),
        ((0, 0, 0), None),
        ((0, 0, 1), Some(NormalSleep)),
        ((0, 1, -1), Some(Ignore)),
        ((0, 1, 0), None),
        ((0, 1, 1), None),
        ((1, 0, -1), Some(Ignore)),
        ((1, 0, 0), None),
        ((1, 0, 1), Some(TargetArousal)),
        ((1, 1, -1), Some(Ignore)),
        ((1, 1, 0), None),
        ((1, 1, 1), None),
    ]
};

