//! Windowed-sinc anti-aliasing filter and decimation.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

pub const DEFAULT_TAPS: usize = 241;
/// Measured −3 dB point of the anti-aliasing filter at 200 Hz.
pub const CUTOFF_3DB_HZ: f64 = 28.29;
pub const DECIMATION: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterKernel {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
    /// Cutoff at which the response is −3 dB.
    pub nominal_cutoff: f64,
}

impl FilterKernel {
    /// `|H(f)|` of the kernel at frequency `hz`.
    pub fn magnitude(&self, hz: f64) -> f64 {
        magnitude(&self.taps, hz / self.sample_rate)
    }

    pub fn magnitude_db(&self, hz: f64) -> f64 {
        20.0 * self.magnitude(hz).log10()
    }
}

fn magnitude(taps: &[f64], cycles_per_sample: f64) -> f64 {
    let w = 2.0 * PI * cycles_per_sample;
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &h)| {
        let a = w * n as f64;
        (re + h * a.cos(), im - h * a.sin())
    });
    re.hypot(im)
}

fn hamming_sinc(num_taps: usize, cutoff_norm: f64) -> Vec<f64> {
    let m = (num_taps - 1) as f64;
    let mut taps: Vec<f64> = (0..num_taps)
        // mirrored index so the kernel is exactly symmetric
        .map(|n| n.min(num_taps - 1 - n))
        .map(|n| {
            let x = n as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * cutoff_norm
            } else {
                (2.0 * PI * cutoff_norm * x).sin() / (PI * x)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / m).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Hamming-windowed sinc low-pass whose measured response at `cutoff` is
/// −3 dB (half power). The design cutoff of the sinc is found by bisection;
/// taps are normalized to unit DC gain.
pub fn design_antialias_fir(sample_rate: f64, cutoff: f64, num_taps: usize) -> Result<FilterKernel> {
    if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(invalid(format!("cutoff {cutoff} Hz must lie in (0, {})", sample_rate / 2.0)));
    }
    if num_taps.is_multiple_of(2) || num_taps < 31 {
        return Err(invalid(format!("tap count {num_taps} must be odd and at least 31")));
    }
    let target = std::f64::consts::FRAC_1_SQRT_2;
    let f = cutoff / sample_rate;
    // response at f grows with the design cutoff
    let (mut lo, mut hi) = (f * 0.5, (f * 1.5).min(0.4999));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if magnitude(&hamming_sinc(num_taps, mid), f) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FilterKernel {
        taps: hamming_sinc(num_taps, 0.5 * (lo + hi)),
        sample_rate,
        nominal_cutoff: cutoff,
    })
}

/// The default 241-tap, 28.29 Hz kernel for 200 Hz input.
pub fn default_kernel() -> FilterKernel {
    design_antialias_fir(200.0, CUTOFF_3DB_HZ, DEFAULT_TAPS).expect("valid default design")
}

/// Mirror index into `[0, n)` without repeating the edge sample.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Zero-phase filtering (edges mirrored), keeping every `factor`-th sample
/// (output length `ceil(N / factor)`), then subtracting the output mean.
pub fn filter_decimate(signal: &[f64], kernel: &FilterKernel, factor: usize) -> Result<Vec<f64>> {
    let mut out = filter_decimate_raw(signal, kernel, factor)?;
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    for v in &mut out {
        *v -= mean;
    }
    Ok(out)
}

/// [`filter_decimate`] without the mean removal.
pub fn filter_decimate_raw(signal: &[f64], kernel: &FilterKernel, factor: usize) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(invalid("cannot filter an empty signal"));
    }
    if factor == 0 {
        return Err(invalid("decimation factor must be positive"));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(invalid("signal contains non-finite samples"));
    }
    let n = signal.len();
    let taps = &kernel.taps;
    let half = taps.len() / 2;
    let out_len = n.div_ceil(factor);
    let mut out = Vec::with_capacity(out_len);
    let mut scratch = vec![0.0; taps.len()];
    for m in 0..out_len {
        let centre = m * factor;
        let acc = if centre >= half && centre + half < n {
            dot(taps, &signal[centre - half..=centre + half])
        } else {
            for (k, s) in scratch.iter_mut().enumerate() {
                *s = signal[reflect(centre as isize + k as isize - half as isize, n)];
            }
            dot(taps, &scratch)
        };
        out.push(acc);
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let n = 4;
        let got: Vec<usize> = (-5..9).map(|i| reflect(i, n)).collect();
        assert_eq!(got, vec![1, 2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn design_hits_half_power() {
        let k = default_kernel();
        assert_eq!(k.taps.len(), 241);
        assert!((k.magnitude_db(28.29) + 3.0103).abs() < 0.01);
        assert!((k.taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k.magnitude_db(40.0) < -20.0);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(design_antialias_fir(200.0, 100.0, 241).is_err());
        assert!(design_antialias_fir(200.0, 28.0, 240).is_err());
        assert!(design_antialias_fir(200.0, 28.0, 29).is_err());
    }

    #[test]
    fn decimated_length_is_ceiling() {
        let k = default_kernel();
        assert_eq!(filter_decimate(&vec![1.0; 4000], &k, 4).unwrap().len(), 1000);
        assert_eq!(filter_decimate(&vec![1.0; 4001], &k, 4).unwrap().len(), 1001);
        assert!(filter_decimate(&[], &k, 4).is_err());
    }

    #[test]
    fn constant_becomes_zero() {
        let out = filter_decimate(&vec![3.7; 1000], &default_kernel(), 4).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }
}
