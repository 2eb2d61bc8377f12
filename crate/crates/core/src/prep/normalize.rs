//! Moving-window standardization via FFT boxcar convolution, and SaO2 scaling.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::fir::reflect;
use crate::error::{invalid, Result};

/// 18 minutes at 50 Hz.
pub const MOVING_WINDOW_SAMPLES: usize = 54_000;
pub const RMS_FLOOR: f64 = 1e-6;

/// Centered window `[t − W/2, t + W − 1 − W/2]` of each sample, edges mirrored.
pub fn window_bounds(window: usize) -> (usize, usize) {
    let left = window / 2;
    (left, window - 1 - left)
}

/// Moving sums of a signal over centered windows, evaluated by one circular
/// convolution of the mirrored extension with a boxcar.
struct BoxcarConvolver {
    window: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel: Vec<Complex<f64>>,
}

impl BoxcarConvolver {
    fn new(n: usize, window: usize) -> Self {
        // wrap-around only touches outputs before W − 1, which are unused
        let size = (n + window - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut kernel = vec![Complex::new(0.0, 0.0); size];
        for k in kernel.iter_mut().take(window) {
            k.re = 1.0;
        }
        forward.process(&mut kernel);
        Self {
            window,
            size,
            forward,
            inverse,
            kernel,
        }
    }

    /// Mean of `f(x)` over the window centered at every sample.
    fn moving_mean(&self, x: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = x.len();
        let (left, _) = window_bounds(self.window);
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (j, b) in buf.iter_mut().take(n + self.window - 1).enumerate() {
            b.re = f(x[reflect(j as isize - left as isize, n)]);
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / (self.size as f64 * self.window as f64);
        buf[self.window - 1..self.window - 1 + n].iter().map(|c| c.re * scale).collect()
    }
}

/// `(x − μ) / max(ρ, 1e-6)` with μ the moving mean of `x` and ρ the moving
/// RMS of `x − μ`, both over centered windows of `window` samples.
pub fn moving_normalize(signal: &[f64], window: usize) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(invalid("cannot normalize an empty signal"));
    }
    if window == 0 {
        return Err(invalid("window must be positive"));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(invalid("signal contains non-finite samples"));
    }
    let conv = BoxcarConvolver::new(signal.len(), window);
    let mean = conv.moving_mean(signal, |v| v);
    let centred: Vec<f64> = signal.iter().zip(&mean).map(|(x, m)| x - m).collect();
    let power = conv.moving_mean(&centred, |v| v * v);
    Ok(centred
        .iter()
        .zip(&power)
        .map(|(d, p)| d / p.max(0.0).sqrt().max(RMS_FLOOR))
        .collect())
}

/// Affine map of the channel's range onto `[−0.5, 0.5]`; constant input
/// maps to zeros.
pub fn scale_sao2(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(invalid("cannot scale an empty signal"));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(invalid("SaO2 contains non-finite samples"));
    }
    let lo = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Ok(vec![0.0; signal.len()]);
    }
    let span = hi - lo;
    Ok(signal
        .iter()
        .map(|&v| ((v - lo) / span - 0.5).clamp(-0.5, 0.5))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_normalizes_to_zero() {
        let out = moving_normalize(&vec![4.2; 500], 100).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn single_sample() {
        assert_eq!(moving_normalize(&[3.0], 54_000).unwrap(), vec![0.0]);
    }

    #[test]
    fn sao2_endpoints_and_ramp() {
        let ramp: Vec<f64> = (0..11).map(|i| 90.0 + i as f64).collect();
        let s = scale_sao2(&ramp).unwrap();
        assert_eq!(s[0], -0.5);
        assert_eq!(s[10], 0.5);
        for (i, v) in s.iter().enumerate() {
            assert!((v - (i as f64 / 10.0 - 0.5)).abs() < 1e-12);
        }
        assert_eq!(scale_sao2(&[96.0; 7]).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(moving_normalize(&[1.0, f64::NAN], 4).is_err());
        assert!(scale_sao2(&[f64::INFINITY]).is_err());
    }
}
