//! Deterministic synthetic recordings with event-locked signatures.
//!
//! Every channel is noise plus a few oscillators whose amplitude depends on
//! the per-sample state:
//!
//! * EEG: 1.5 Hz delta while asleep, 10 Hz alpha while awake, a strong 20 Hz
//!   beta burst during a target arousal.
//! * EOG: slow 0.4 Hz eye movements while awake.
//! * Chin EMG: broadband noise whose level rises when awake and peaks during
//!   arousals.
//! * Effort belts (ABD, CHEST) breathe at 0.25 Hz throughout, a little harder
//!   during apnea; airflow drops to a tenth of its amplitude during apnea.
//! * SaO2 sits at 96 % and dips by a few percent with a 10 s lag after apnea
//!   onset, smoothed by a first-order lag.
//! * ECG is a narrow pulse train.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AnnotationInterval, RawRecord, Task, RAW_SAMPLE_RATE, STANDARD_CHANNELS};
use crate::error::{invalid, Result};

/// Longest stretch an apnea that began in sleep may continue into wake.
pub const MAX_APNEA_OVERRUN_S: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct SignatureParams {
    pub eeg_noise: f64,
    pub delta_hz: f64,
    pub delta_amp: f64,
    pub alpha_hz: f64,
    pub alpha_amp: f64,
    pub beta_hz: f64,
    pub beta_amp: f64,
    pub emg_sleep: f64,
    pub emg_wake: f64,
    pub emg_arousal: f64,
    pub breath_hz: f64,
    pub airflow_apnea_factor: f64,
    pub effort_apnea_factor: f64,
    pub sao2_baseline: f64,
    pub sao2_dip: f64,
    pub sao2_lag_s: f64,
    pub sao2_tau_s: f64,
    pub heart_hz: f64,
}

impl Default for SignatureParams {
    fn default() -> Self {
        Self {
            eeg_noise: 0.4,
            delta_hz: 1.5,
            delta_amp: 1.0,
            alpha_hz: 10.0,
            alpha_amp: 1.0,
            beta_hz: 20.0,
            beta_amp: 2.0,
            emg_sleep: 0.3,
            emg_wake: 1.0,
            emg_arousal: 3.0,
            breath_hz: 0.25,
            airflow_apnea_factor: 0.1,
            effort_apnea_factor: 1.3,
            sao2_baseline: 96.0,
            sao2_dip: 4.5,
            sao2_lag_s: 10.0,
            sao2_tau_s: 8.0,
            heart_hz: 1.1,
        }
    }
}

/// Ranges used by [`random_plan`], all in seconds (epochs are 30 s).
#[derive(Clone, Debug, PartialEq)]
pub struct PlanOptions {
    pub prefix_s: (usize, usize),
    pub sleep_bout_epochs: (usize, usize),
    pub wake_bout_epochs: (usize, usize),
    pub arousal_s: (usize, usize),
    pub apnea_s: (usize, usize),
    pub recovery_s: (usize, usize),
    pub gap_s: (usize, usize),
    pub arousal_fraction: f64,
    /// Probability that the last event of a sleep bout is an apnea running
    /// on into the following wake bout.
    pub overrun_probability: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            prefix_s: (30, 90),
            sleep_bout_epochs: (4, 16),
            wake_bout_epochs: (1, 3),
            arousal_s: (5, 20),
            apnea_s: (12, 35),
            recovery_s: (3, 8),
            gap_s: (10, 40),
            arousal_fraction: 0.55,
            overrun_probability: 0.3,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    rng.random_range(range.0..=range.1.max(range.0))
}

/// Random but consistent event plan: an undefined prefix, then alternating
/// wake and sleep bouts with target arousals and apneas (each apnea followed
/// by a short non-target arousal) placed inside sleep.
pub fn random_plan(seed: u64, duration_s: usize, opts: &PlanOptions) -> Vec<AnnotationInterval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706c_616e);
    let fs = RAW_SAMPLE_RATE as usize;
    let mut sleep = Vec::new();
    let mut apnea = Vec::new();
    let mut arousal = Vec::new();
    let iv = |task, a: usize, b: usize, v| AnnotationInterval::new(task, a * fs, b * fs, v);

    let mut t = draw(&mut rng, opts.prefix_s).min(duration_s / 4);
    let mut awake = true;
    while t < duration_s {
        let epochs = if awake {
            draw(&mut rng, opts.wake_bout_epochs)
        } else {
            draw(&mut rng, opts.sleep_bout_epochs)
        };
        let end = (t + 30 * epochs).min(duration_s);
        sleep.push(iv(Task::Sleep, t, end, if awake { 0 } else { 1 }));
        if !awake {
            let overrun = end < duration_s && rng.random_bool(opts.overrun_probability);
            let limit = if overrun { end.saturating_sub(15) } else { end };
            let mut cursor = t + draw(&mut rng, opts.gap_s);
            while cursor < limit {
                if rng.random_bool(opts.arousal_fraction) {
                    let d = draw(&mut rng, opts.arousal_s);
                    if cursor + d > limit {
                        break;
                    }
                    arousal.push(iv(Task::Arousal, cursor, cursor + d, 1));
                    cursor += d;
                } else {
                    let d = draw(&mut rng, opts.apnea_s);
                    let tail = draw(&mut rng, opts.recovery_s);
                    if cursor + d + tail > limit {
                        break;
                    }
                    apnea.push(iv(Task::Apnea, cursor, cursor + d, 1));
                    arousal.push(iv(Task::Arousal, cursor + d, cursor + d + tail, -1));
                    cursor += d + tail;
                }
                cursor += draw(&mut rng, opts.gap_s);
            }
            if overrun {
                let start = end - rng.random_range(8..=14);
                let last_end = apnea.last().map_or(0, |a: &AnnotationInterval| a.end_sample / fs);
                let last_arousal = arousal.last().map_or(0, |a: &AnnotationInterval| a.end_sample / fs);
                let stop = (end + rng.random_range(3..=10)).min(duration_s);
                if start > last_end.max(last_arousal) + 5 && stop - start >= opts.apnea_s.0 {
                    apnea.push(iv(Task::Apnea, start, stop, 1));
                }
            }
        }
        t = end;
        awake = !awake;
    }
    let mut plan = sleep;
    plan.extend(apnea);
    plan.extend(arousal);
    plan
}

/// Expands a plan into per-sample labels, enforcing the label semantics.
fn plan_labels(n: usize, plan: &[AnnotationInterval]) -> Result<(Vec<i8>, Vec<i8>, Vec<i8>)> {
    let mut labels: BTreeMap<Task, Vec<i8>> = Task::ALL.iter().map(|&t| (t, vec![t.default_value(); n])).collect();
    let mut last_end: BTreeMap<Task, usize> = BTreeMap::new();
    for iv in plan {
        if iv.start_sample >= iv.end_sample || iv.end_sample > n {
            return Err(invalid(format!(
                "{} interval [{}, {}) outside the record of {n} samples",
                iv.task, iv.start_sample, iv.end_sample
            )));
        }
        if !iv.task.allowed_values().contains(&iv.value) {
            return Err(invalid(format!("{} value {} is not allowed", iv.task, iv.value)));
        }
        let prev = last_end.entry(iv.task).or_insert(0);
        if iv.start_sample < *prev {
            return Err(invalid(format!("{} intervals overlap or are unsorted", iv.task)));
        }
        *prev = iv.end_sample;
        labels.get_mut(&iv.task).expect("all tasks")[iv.start_sample..iv.end_sample].fill(iv.value);
    }
    let sleep = labels.remove(&Task::Sleep).expect("sleep");
    let apnea = labels.remove(&Task::Apnea).expect("apnea");
    let mut arousal = labels.remove(&Task::Arousal).expect("arousal");

    let overrun_limit = MAX_APNEA_OVERRUN_S * RAW_SAMPLE_RATE as usize;
    for iv in plan.iter().filter(|i| i.task == Task::Apnea && i.value == 1) {
        let span = &sleep[iv.start_sample..iv.end_sample];
        if span[0] != 1 {
            return Err(invalid(format!(
                "apnea at sample {} starts while not asleep: a sleep disorder cannot begin during wake",
                iv.start_sample
            )));
        }
        if span.contains(&-1) {
            return Err(invalid(format!("apnea at sample {} reaches unscored time", iv.start_sample)));
        }
        if span.iter().filter(|&&s| s == 0).count() > overrun_limit {
            return Err(invalid(format!(
                "apnea at sample {} continues more than {MAX_APNEA_OVERRUN_S} s into wake",
                iv.start_sample
            )));
        }
    }
    for iv in plan.iter().filter(|i| i.task == Task::Arousal && i.value == 1) {
        let r = iv.start_sample..iv.end_sample;
        if sleep[r.clone()].iter().any(|&s| s != 1) {
            return Err(invalid(format!("target arousal at sample {} is not inside sleep", iv.start_sample)));
        }
        if apnea[r].contains(&1) {
            return Err(invalid(format!("target arousal at sample {} overlaps an apnea", iv.start_sample)));
        }
    }
    // wake and apnea samples are non-target arousal by definition
    for i in 0..n {
        if sleep[i] == 0 || apnea[i] == 1 {
            arousal[i] = -1;
        }
    }
    Ok((arousal, apnea, sleep))
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Undefined,
    Wake,
    Sleep,
    Arousal,
}

fn noise(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// White noise smoothed by a one-pole low-pass filter.
fn coloured_noise(rng: &mut ChaCha8Rng, n: usize, pole: f64) -> Vec<f64> {
    let gain = (1.0 - pole * pole).sqrt();
    let mut y = 0.0;
    (0..n)
        .map(|_| {
            y = pole * y + gain * noise(rng);
            y
        })
        .collect()
}

pub fn generate_synthetic(record_seed: u64, duration_s: usize, event_plan: &[AnnotationInterval]) -> Result<RawRecord> {
    generate_synthetic_with(record_seed, duration_s, event_plan, &SignatureParams::default())
}

pub fn generate_synthetic_with(
    record_seed: u64,
    duration_s: usize,
    event_plan: &[AnnotationInterval],
    p: &SignatureParams,
) -> Result<RawRecord> {
    if duration_s == 0 {
        return Err(invalid("synthetic duration must be positive"));
    }
    let fs = RAW_SAMPLE_RATE as f64;
    let n = duration_s * RAW_SAMPLE_RATE as usize;
    let (arousal, apnea, sleep) = plan_labels(n, event_plan)?;
    let state: Vec<State> = (0..n)
        .map(|i| match (sleep[i], arousal[i]) {
            (-1, _) => State::Undefined,
            (0, _) => State::Wake,
            (_, 1) => State::Arousal,
            _ => State::Sleep,
        })
        .collect();

    let mut channels = BTreeMap::new();
    for (ci, &name) in STANDARD_CHANNELS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(record_seed);
        rng.set_stream(ci as u64 + 1);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let osc = |hz: f64, i: usize| (2.0 * PI * hz * i as f64 / fs + phase).sin();
        let data: Vec<f64> = match ci {
            0..=5 => {
                let bg = coloured_noise(&mut rng, n, 0.6);
                (0..n)
                    .map(|i| {
                        let s = match state[i] {
                            State::Sleep => p.delta_amp * osc(p.delta_hz, i),
                            State::Wake | State::Undefined => p.alpha_amp * osc(p.alpha_hz, i),
                            State::Arousal => {
                                0.5 * p.delta_amp * osc(p.delta_hz, i) + p.beta_amp * osc(p.beta_hz, i)
                            }
                        };
                        s + p.eeg_noise * bg[i]
                    })
                    .collect()
            }
            6 => {
                let bg = coloured_noise(&mut rng, n, 0.8);
                (0..n)
                    .map(|i| {
                        let eye = if matches!(state[i], State::Wake | State::Undefined) { 1.0 } else { 0.1 };
                        eye * osc(0.4, i) + 0.3 * bg[i]
                    })
                    .collect()
            }
            7 => (0..n)
                .map(|i| {
                    let level = match state[i] {
                        State::Sleep => p.emg_sleep,
                        State::Wake | State::Undefined => p.emg_wake,
                        State::Arousal => p.emg_arousal,
                    };
                    level * noise(&mut rng)
                })
                .collect(),
            8..=10 => {
                let bg = coloured_noise(&mut rng, n, 0.9);
                let factor = if ci == 10 { p.airflow_apnea_factor } else { p.effort_apnea_factor };
                (0..n)
                    .map(|i| {
                        let amp = if apnea[i] == 1 { factor } else { 1.0 };
                        amp * osc(p.breath_hz, i) + 0.1 * bg[i]
                    })
                    .collect()
            }
            11 => {
                let lag = (p.sao2_lag_s * fs) as usize;
                let k = 1.0 / (p.sao2_tau_s * fs);
                let mut level = p.sao2_baseline;
                (0..n)
                    .map(|i| {
                        let target = if i >= lag && apnea[i - lag] == 1 {
                            p.sao2_baseline - p.sao2_dip
                        } else {
                            p.sao2_baseline
                        };
                        level += k * (target - level);
                        level + 0.05 * noise(&mut rng)
                    })
                    .collect()
            }
            _ => {
                let period = fs / p.heart_hz;
                (0..n)
                    .map(|i| {
                        let x = (i as f64 % period) / fs;
                        (-(x * 50.0).powi(2)).exp() + 0.05 * noise(&mut rng)
                    })
                    .collect()
            }
        };
        channels.insert(name.to_string(), data.into_iter().map(|v| v as f32).collect());
    }

    Ok(RawRecord {
        record_id: format!("synth{record_seed:06}"),
        sample_rate: RAW_SAMPLE_RATE,
        channels,
        arousal,
        apnea,
        sleep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: usize = RAW_SAMPLE_RATE as usize;

    fn iv(task: Task, a: usize, b: usize, v: i8) -> AnnotationInterval {
        AnnotationInterval::new(task, a * FS, b * FS, v)
    }

    #[test]
    fn same_seed_same_record() {
        let plan = random_plan(5, 300, &PlanOptions::default());
        let a = generate_synthetic(5, 300, &plan).unwrap();
        let b = generate_synthetic(5, 300, &plan).unwrap();
        assert_eq!(a, b);
        a.validate_standard().unwrap();
    }

    #[test]
    fn apnea_during_wake_is_rejected() {
        let plan = vec![iv(Task::Sleep, 0, 60, 0), iv(Task::Apnea, 10, 30, 1)];
        assert!(generate_synthetic(1, 60, &plan).is_err());
    }

    #[test]
    fn arousal_overlapping_apnea_is_rejected() {
        let plan = vec![
            iv(Task::Sleep, 0, 60, 1),
            iv(Task::Apnea, 10, 30, 1),
            iv(Task::Arousal, 25, 35, 1),
        ];
        assert!(generate_synthetic(1, 60, &plan).is_err());
    }

    #[test]
    fn long_overrun_is_rejected() {
        let plan = vec![
            iv(Task::Sleep, 0, 30, 1),
            iv(Task::Sleep, 30, 120, 0),
            iv(Task::Apnea, 20, 70, 1),
        ];
        assert!(generate_synthetic(1, 120, &plan).is_err());
    }

    #[test]
    fn derived_nontarget_arousal() {
        let plan = vec![
            iv(Task::Sleep, 10, 40, 0),
            iv(Task::Sleep, 40, 100, 1),
            iv(Task::Apnea, 50, 70, 1),
        ];
        let r = generate_synthetic(2, 100, &plan).unwrap();
        assert_eq!(r.arousal[5 * FS], 0);
        assert_eq!(r.sleep[5 * FS], -1);
        assert_eq!(r.arousal[20 * FS], -1);
        assert_eq!(r.arousal[60 * FS], -1);
        assert_eq!(r.arousal[80 * FS], 0);
    }

    #[test]
    fn airflow_is_suppressed_during_apnea() {
        let plan = vec![iv(Task::Sleep, 0, 120, 1), iv(Task::Apnea, 40, 80, 1)];
        let r = generate_synthetic(3, 120, &plan).unwrap();
        let air = r.channel("AIRFLOW").unwrap();
        let rms = |a: usize, b: usize| {
            (air[a * FS..b * FS].iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / ((b - a) * FS) as f64).sqrt()
        };
        assert!(rms(45, 75) < 0.3 * rms(0, 35));
    }

    #[test]
    fn random_plans_are_accepted() {
        for seed in 0..30 {
            let plan = random_plan(seed, 1200, &PlanOptions::default());
            generate_synthetic(seed, 1200, &plan).unwrap();
        }
    }
}
