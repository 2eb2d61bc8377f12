//! Central finite-difference verification of analytic gradients.
//!
//! The scalar objective for a tensor-valued function `f` is `⟨r, f(x)⟩` with a
//! fixed random projection `r`, so one backward pass seeded with `r` yields
//! the analytic gradient of every input coordinate at once.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Result};
use crate::ops::{self, BatchNormMode, ConvSpec, LstmWeights, RunningStats};
use crate::tensor::Tensor;
use crate::var::Var;

/// Absolute floor on the denominator of the relative error, so coordinates
/// whose true gradient is zero are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;
/// Above this many input coordinates a random subset of this size is checked.
pub const MAX_CHECKED_COORDS: usize = 10_000;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input index, flat coordinate)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
}

/// Compares the gradient of `⟨r, f(inputs)⟩` from backpropagation against
/// central differences with step `h`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&[Var]) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(arg_err("grad_check", "step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let leaves: Vec<Var> = inputs.iter().cloned().map(Var::parameter).collect();
    let out = f(&leaves)?;
    let projection = Tensor::new(
        out.shape().to_vec(),
        (0..out.value().numel()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    out.backward_with(projection.clone())?;
    let analytic: Vec<Tensor> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| Tensor::zeros(l.shape())))
        .collect();
    drop(out);

    let objective = |xs: &[Tensor]| -> Result<f64> {
        let consts: Vec<Var> = xs.iter().cloned().map(Var::constant).collect();
        let y = f(&consts)?;
        Ok(y.value().data().iter().zip(projection.data()).map(|(a, b)| a * b).sum())
    };

    let total: usize = inputs.iter().map(Tensor::numel).sum();
    let coords: Vec<usize> = if total > MAX_CHECKED_COORDS {
        let mut picked = sample(&mut rng, total, MAX_CHECKED_COORDS).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..total).collect()
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: coords.len(),
        worst: None,
    };
    for flat in coords {
        let (which, idx) = locate(inputs, flat);
        let orig = work[which].data()[idx];
        work[which].data_mut()[idx] = orig + h;
        let plus = objective(&work)?;
        work[which].data_mut()[idx] = orig - h;
        let minus = objective(&work)?;
        work[which].data_mut()[idx] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[which].data()[idx], numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((which, idx));
        }
    }
    Ok(report)
}

fn locate(inputs: &[Tensor], mut flat: usize) -> (usize, usize) {
    for (i, t) in inputs.iter().enumerate() {
        if flat < t.numel() {
            return (i, flat);
        }
        flat -= t.numel();
    }
    unreachable!("coordinate beyond inputs")
}

/// Result of checking one operator over several random shapes.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Step used by every suite check.
pub const SUITE_STEP: f64 = 1e-5;

/// Random tensor with entries in `±[lo, hi]` (magnitudes bounded away from
/// zero when `lo > 0`, which keeps kinks of piecewise operators out of reach
/// of the finite-difference stencil).
pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(lo..=hi);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("random tensor shape")
}

/// Runs `cases` random instances of a checker and keeps the worst error.
pub fn check_cases<G>(name: &str, tolerance: f64, cases: usize, seed: u64, mut case: G) -> Result<CheckOutcome>
where
    G: FnMut(&mut ChaCha8Rng, u64) -> Result<GradCheckReport>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..cases {
        let report = case(&mut rng, seed.wrapping_add(i as u64))?;
        worst = worst.max(report.max_rel_error);
    }
    Ok(CheckOutcome {
        name: name.to_string(),
        cases,
        max_rel_error: worst,
        tolerance,
    })
}

/// Finite-difference checks of every operator over `cases` random shapes
/// each. Tolerances: `1e-4` relative, `1e-3` for the recurrent layer.
pub fn operator_suite(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let h = SUITE_STEP;
    let mut out = Vec::new();

    out.push(check_cases("conv1d", 1e-4, cases, seed ^ 0x01, |rng, s| {
        let cin = rng.random_range(1..=4);
        let depthwise = rng.random_bool(0.5);
        let groups = if depthwise { cin } else { 1 };
        let cout = groups * rng.random_range(1..=3);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let d = rng.random_range(1..=3);
        let t = rng.random_range(3..=12);
        let inputs = vec![
            random_tensor(rng, &[cin, t], 0.0, 1.0),
            random_tensor(rng, &[cout, cin / groups, k], 0.0, 1.0),
            random_tensor(rng, &[cout], 0.0, 1.0),
        ];
        let spec = ConvSpec { dilation: d, groups };
        grad_check(|v| ops::conv1d(&v[0], &v[1], Some(&v[2]), spec), &inputs, h, s)
    })?);

    out.push(check_cases("maxpool1d", 1e-4, cases, seed ^ 0x02, |rng, s| {
        let c = rng.random_range(1..=3);
        let w = [2, 3, 5][rng.random_range(0..3)];
        let t = w * rng.random_range(1..=6) + rng.random_range(0..w);
        let inputs = vec![random_tensor(rng, &[c, t], 0.0, 1.0)];
        grad_check(|v| ops::maxpool1d(&v[0], w), &inputs, h, s)
    })?);

    type Unary = fn(&Var) -> Result<Var>;
    for (name, f, salt) in [
        ("selu", ops::selu as Unary, 0x03u64),
        ("relu", ops::relu as Unary, 0x04),
        ("tanh", ops::tanh as Unary, 0x05),
        ("positionwise_norm", ops::positionwise_norm as Unary, 0x06),
        ("softmax", ops::softmax as Unary, 0x07),
    ] {
        out.push(check_cases(name, 1e-4, cases, seed ^ salt, |rng, s| {
            let c = rng.random_range(2..=5);
            let t = rng.random_range(1..=10);
            let inputs = vec![random_tensor(rng, &[c, t], 0.05, 2.0)];
            grad_check(|v| f(&v[0]), &inputs, h, s)
        })?);
    }

    out.push(check_cases("weight_norm", 1e-4, cases, seed ^ 0x08, |rng, s| {
        let cout = rng.random_range(1..=4);
        let cin = rng.random_range(1..=4);
        let k = rng.random_range(1..=3);
        let inputs = vec![
            random_tensor(rng, &[cout, cin, k], 0.1, 1.0),
            random_tensor(rng, &[cout], 0.2, 2.0),
        ];
        grad_check(|v| ops::weight_norm(&v[0], &v[1]), &inputs, h, s)
    })?);

    for (name, mode, salt) in [
        ("batch_norm/train", BatchNormMode::Train, 0x09u64),
        ("batch_norm/eval", BatchNormMode::Eval, 0x0a),
    ] {
        out.push(check_cases(name, 1e-4, cases, seed ^ salt, |rng, s| {
            let c = rng.random_range(1..=4);
            let t = rng.random_range(3..=12);
            let mut stats = RunningStats::new(c);
            for (m, v) in stats.mean.iter_mut().zip(stats.var.iter_mut()) {
                *m = rng.random_range(-1.0..1.0);
                *v = rng.random_range(0.5..2.0);
            }
            let inputs = vec![
                random_tensor(rng, &[c, t], 0.0, 2.0),
                random_tensor(rng, &[c], 0.2, 1.5),
                random_tensor(rng, &[c], 0.0, 1.0),
            ];
            grad_check(
                |v| {
                    let mut st = stats.clone();
                    ops::batch_norm(&v[0], &v[1], &v[2], &mut st, mode)
                },
                &inputs,
                h,
                s,
            )
        })?);
    }

    out.push(check_cases("bilstm", 1e-3, cases, seed ^ 0x0b, |rng, s| {
        let c = rng.random_range(1..=3);
        let t = rng.random_range(1..=6);
        let hid = rng.random_range(1..=4);
        let mut inputs = vec![random_tensor(rng, &[c, t], 0.0, 1.5)];
        for _ in 0..2 {
            inputs.push(random_tensor(rng, &[4 * hid, c], 0.0, 0.8));
            inputs.push(random_tensor(rng, &[4 * hid, hid], 0.0, 0.8));
            inputs.push(random_tensor(rng, &[4 * hid], 0.0, 0.5));
        }
        grad_check(|v| ops::bilstm(&v[0], &lstm_weights(&v[1..4]), &lstm_weights(&v[4..7])), &inputs, h, s)
    })?);

    out.push(check_cases("concat", 1e-4, cases, seed ^ 0x0c, |rng, s| {
        let t = rng.random_range(1..=8);
        let n = rng.random_range(2..=3);
        let inputs: Vec<Tensor> = (0..n)
            .map(|_| {
                let c = rng.random_range(1..=3);
                random_tensor(rng, &[c, t], 0.0, 1.0)
            })
            .collect();
        grad_check(|v| ops::concat(&v.iter().collect::<Vec<_>>()), &inputs, h, s)
    })?);

    out.push(check_cases("add", 1e-4, cases, seed ^ 0x0d, |rng, s| {
        let shape = [rng.random_range(1..=3), rng.random_range(1..=8)];
        let inputs = vec![random_tensor(rng, &shape, 0.0, 1.0), random_tensor(rng, &shape, 0.0, 1.0)];
        grad_check(|v| ops::add(&v[0], &v[1]), &inputs, h, s)
    })?);

    out.push(check_cases("dropout", 1e-4, cases, seed ^ 0x0e, |rng, s| {
        let shape = [rng.random_range(1..=3), rng.random_range(1..=8)];
        let rate = rng.random_range(0.1..0.6);
        let inputs = vec![random_tensor(rng, &shape, 0.0, 1.0)];
        grad_check(|v| ops::dropout(&v[0], rate, true, s), &inputs, h, s)
    })?);

    Ok(out)
}

fn lstm_weights(v: &[Var]) -> LstmWeights {
    LstmWeights {
        w_ih: v[0].clone(),
        w_hh: v[1].clone(),
        bias: v[2].clone(),
    }
}
