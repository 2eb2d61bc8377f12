use crate::error::{shape_err, Result};
use crate::tensor::Tensor;
use crate::var::Var;

pub const BATCH_NORM_EPS: f64 = 1e-5;
/// Lower bound on the per-step standard deviation in [`positionwise_norm`].
pub const POSITIONWISE_EPS: f64 = 1e-5;
const WEIGHT_NORM_FLOOR: f64 = 1e-12;

/// Reparameterises `v` (`C_out × …`) as `g[o] · v[o] / ‖v[o]‖` row by row.
pub fn weight_norm(v: &Var, g: &Var) -> Result<Var> {
    let vv = v.value();
    let rows = vv.shape()[0];
    if g.shape() != [rows] {
        return Err(shape_err(
            "weight_norm",
            format!("magnitude {:?} for direction {:?}", g.shape(), vv.shape()),
        ));
    }
    vv.ensure_finite("weight_norm")?;
    g.value().ensure_finite("weight_norm")?;
    let width = vv.numel() / rows.max(1);
    let norms: Vec<f64> = (0..rows)
        .map(|r| {
            let row = &vv.data()[r * width..(r + 1) * width];
            row.iter().map(|x| x * x).sum::<f64>().sqrt().max(WEIGHT_NORM_FLOOR)
        })
        .collect();
    let gd = g.value().data();
    let mut out = vv.clone();
    for (r, chunk) in out.data_mut().chunks_mut(width.max(1)).enumerate().take(rows) {
        let s = gd[r] / norms[r];
        for x in chunk {
            *x *= s;
        }
    }
    Ok(Var::from_op(
        out,
        vec![v.clone(), g.clone()],
        Box::new(move |grad, parents| {
            let v = parents[0].value();
            let g = parents[1].value().data();
            let mut dv = Tensor::zeros(v.shape());
            let mut dg = Tensor::zeros(&[rows]);
            for r in 0..rows {
                let span = r * width..(r + 1) * width;
                let vr = &v.data()[span.clone()];
                let gr = &grad.data()[span.clone()];
                let n = norms[r];
                // projection of the upstream gradient onto the unit direction
                let proj: f64 = vr.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>() / n;
                dg.data_mut()[r] = proj;
                let s = g[r] / n;
                for ((d, &a), &b) in dv.data_mut()[span].iter_mut().zip(vr).zip(gr) {
                    *d = s * (b - proj * a / n);
                }
            }
            vec![Some(dv), Some(dg)]
        }),
    ))
}

/// Running mean/variance of a batch-normalisation layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalise with the statistics of the current input over its time axis
    /// and update the running averages.
    Train,
    /// Normalise with the running averages.
    Eval,
}

/// Per-channel batch normalisation with an affine transform over a `C × T`
/// input, treating the time axis as the batch.
pub fn batch_norm(
    x: &Var,
    gamma: &Var,
    beta: &Var,
    stats: &mut RunningStats,
    mode: BatchNormMode,
) -> Result<Var> {
    let xv = x.value();
    xv.expect_rank("batch_norm", 2)?;
    let (c, t) = (xv.channels(), xv.len());
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c || stats.var.len() != c {
        return Err(shape_err("batch_norm", format!("{c} channels vs affine {:?}", gamma.shape())));
    }
    xv.ensure_finite("batch_norm")?;
    gamma.value().ensure_finite("batch_norm")?;
    beta.value().ensure_finite("batch_norm")?;

    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        BatchNormMode::Train => (0..c)
            .map(|r| {
                let row = xv.row(r);
                let m = row.iter().sum::<f64>() / t as f64;
                let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t as f64;
                (m, v)
            })
            .unzip(),
        BatchNormMode::Eval => (stats.mean.clone(), stats.var.clone()),
    };
    if mode == BatchNormMode::Train {
        let m = stats.momentum;
        let unbias = if t > 1 { t as f64 / (t - 1) as f64 } else { 1.0 };
        for r in 0..c {
            stats.mean[r] = (1.0 - m) * stats.mean[r] + m * mean[r];
            stats.var[r] = (1.0 - m) * stats.var[r] + m * var[r] * unbias;
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();

    let mut xhat = Tensor::zeros(&[c, t]);
    let mut out = Tensor::zeros(&[c, t]);
    let (gd, bd) = (gamma.value().data(), beta.value().data());
    for r in 0..c {
        let (m, s) = (mean[r], inv_std[r]);
        for ((h, o), &x) in xhat.row_mut(r).iter_mut().zip(out.row_mut(r).iter_mut()).zip(xv.row(r)) {
            *h = (x - m) * s;
            *o = gd[r] * *h + bd[r];
        }
    }

    Ok(Var::from_op(
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g, parents| {
            let gd = parents[1].value().data();
            let mut dx = Tensor::zeros(&[c, t]);
            let mut dgamma = Tensor::zeros(&[c]);
            let mut dbeta = Tensor::zeros(&[c]);
            for r in 0..c {
                let (gr, hr) = (g.row(r), xhat.row(r));
                let sum_g: f64 = gr.iter().sum();
                let sum_gh: f64 = gr.iter().zip(hr).map(|(a, b)| a * b).sum();
                dgamma.data_mut()[r] = sum_gh;
                dbeta.data_mut()[r] = sum_g;
                let k = gd[r] * inv_std[r];
                let dr = dx.row_mut(r);
                match mode {
                    BatchNormMode::Train => {
                        let (mg, mgh) = (sum_g / t as f64, sum_gh / t as f64);
                        for i in 0..t {
                            dr[i] = k * (gr[i] - mg - hr[i] * mgh);
                        }
                    }
                    BatchNormMode::Eval => {
                        for i in 0..t {
                            dr[i] = k * gr[i];
                        }
                    }
                }
            }
            vec![Some(dx), Some(dgamma), Some(dbeta)]
        }),
    ))
}

/// Normalises across channels independently at each time step:
/// `(x[:, t] − mean) / max(std, POSITIONWISE_EPS)` with the population std.
pub fn positionwise_norm(x: &Var) -> Result<Var> {
    let xv = x.value();
    xv.expect_rank("positionwise_norm", 2)?;
    xv.ensure_finite("positionwise_norm")?;
    let (c, t) = (xv.channels(), xv.len());
    let mut mean = vec![0.0; t];
    for r in 0..c {
        for (m, v) in mean.iter_mut().zip(xv.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= c as f64);
    let mut var = vec![0.0; t];
    for r in 0..c {
        for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    // std below the floor is treated as a constant divisor
    let denom: Vec<f64> = var.iter().map(|v| (v / c as f64).sqrt().max(POSITIONWISE_EPS)).collect();
    let clamped: Vec<bool> = var
        .iter()
        .map(|v| (v / c as f64).sqrt() <= POSITIONWISE_EPS)
        .collect();
    let mut out = Tensor::zeros(&[c, t]);
    for r in 0..c {
        for (i, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = (xv.row(r)[i] - mean[i]) / denom[i];
        }
    }
    let saved = out.clone();
    Ok(Var::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut mg = vec![0.0; t];
            let mut mgy = vec![0.0; t];
            for r in 0..c {
                for i in 0..t {
                    mg[i] += g.row(r)[i];
                    mgy[i] += g.row(r)[i] * saved.row(r)[i];
                }
            }
            let inv_c = 1.0 / c as f64;
            let mut dx = Tensor::zeros(&[c, t]);
            for r in 0..c {
                let (gr, yr) = (g.row(r), saved.row(r));
                for (i, d) in dx.row_mut(r).iter_mut().enumerate() {
                    let centered = gr[i] - mg[i] * inv_c;
                    *d = if clamped[i] {
                        centered / denom[i]
                    } else {
                        (centered - yr[i] * mgy[i] * inv_c) / denom[i]
                    };
                }
            }
            vec![Some(dx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 10_000) as f64 / 2_500.0 - 2.0
            })
            .collect()
    }

    #[test]
    fn weight_norm_identity_and_scale_invariance() {
        let v = Tensor::new(vec![1, 2, 1], vec![0.6, 0.8]).unwrap();
        let g = Tensor::from_vec(vec![1.0]);
        let w = weight_norm(&Var::constant(v.clone()), &Var::constant(g.clone())).unwrap();
        assert!(w.value().max_abs_diff(&v) < 1e-15);
        let v10 = v.map(|x| 10.0 * x);
        let w10 = weight_norm(&Var::constant(v10), &Var::constant(g)).unwrap();
        assert!(w10.value().max_abs_diff(w.value()) < 1e-15);
    }

    #[test]
    fn train_mode_standardises_each_channel() {
        let x = Tensor::new(vec![3, 200], noise(600, 3).iter().map(|v| 5.0 * v + 2.0).collect()).unwrap();
        let mut stats = RunningStats::new(3);
        let y = batch_norm(
            &Var::constant(x),
            &Var::constant(Tensor::full(&[3], 1.0)),
            &Var::constant(Tensor::zeros(&[3])),
            &mut stats,
            BatchNormMode::Train,
        )
        .unwrap();
        for r in 0..3 {
            let row = y.value().row(r);
            let m = row.iter().sum::<f64>() / 200.0;
            let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 200.0;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4);
        }
        assert!(stats.mean.iter().all(|m| (m - 0.2).abs() < 0.2));
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let x = Tensor::new(vec![2, 5], noise(10, 5)).unwrap();
        let mut stats = RunningStats::new(2);
        let y = batch_norm(
            &Var::constant(x.clone()),
            &Var::constant(Tensor::full(&[2], 1.0)),
            &Var::constant(Tensor::zeros(&[2])),
            &mut stats,
            BatchNormMode::Eval,
        )
        .unwrap();
        // eps makes it 1/sqrt(1 + 1e-5), not exactly one
        assert!(y.value().max_abs_diff(&x) < 1e-4);
        assert_eq!(stats, RunningStats::new(2));
    }

    #[test]
    fn positionwise_columns_have_zero_mean() {
        let x = Tensor::new(vec![4, 50], noise(200, 9)).unwrap();
        let y = positionwise_norm(&Var::constant(x)).unwrap();
        for t in 0..50 {
            let m: f64 = (0..4).map(|c| y.value().get2(c, t)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn positionwise_equal_column_is_zero() {
        let x = Tensor::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        let y = positionwise_norm(&Var::constant(x)).unwrap();
        assert_eq!(y.value().get2(0, 0), 0.0);
        assert_eq!(y.value().get2(1, 0), 0.0);
    }
}
