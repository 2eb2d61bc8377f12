use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;
use crate::var::Var;

pub fn add(a: &Var, b: &Var) -> Result<Var> {
    if a.shape() != b.shape() {
        return Err(shape_err("add", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    a.value().ensure_finite("add")?;
    b.value().ensure_finite("add")?;
    let mut out = a.value().clone();
    out.add_assign(b.value());
    Ok(Var::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(|g, parents| {
            parents
                .iter()
                .map(|p| p.requires_grad().then(|| g.clone()))
                .collect()
        }),
    ))
}

/// Concatenates `C_i × T` tensors along the channel axis.
pub fn concat(parts: &[&Var]) -> Result<Var> {
    let first = parts
        .first()
        .ok_or_else(|| arg_err("concat", "no inputs"))?;
    let t = first.value().len();
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        p.value().expect_rank("concat", 2)?;
        if p.value().len() != t {
            return Err(shape_err(
                "concat",
                format!("time length {} vs {t}", p.value().len()),
            ));
        }
        p.value().ensure_finite("concat")?;
        channels.push(p.value().channels());
    }
    let total: usize = channels.iter().sum();
    let mut data = Vec::with_capacity(total * t);
    for p in parts {
        data.extend_from_slice(p.value().data());
    }
    let out = Tensor::new(vec![total, t], data)?;
    Ok(Var::from_op(
        out,
        parts.iter().map(|p| (*p).clone()).collect(),
        Box::new(move |g, parents| {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(parents.len());
            for (p, &c) in parents.iter().zip(&channels) {
                let n = c * t;
                grads.push(p.requires_grad().then(|| {
                    Tensor::new(vec![c, t], g.data()[offset..offset + n].to_vec())
                        .expect("concat split shape")
                }));
                offset += n;
            }
            grads
        }),
    ))
}

/// Softmax over the channel axis, independently at each time step.
pub fn softmax(x: &Var) -> Result<Var> {
    let xv = x.value();
    xv.expect_rank("softmax", 2)?;
    xv.ensure_finite("softmax")?;
    let (c, t) = (xv.channels(), xv.len());
    let mut out = xv.clone();
    let mut max = vec![f64::NEG_INFINITY; t];
    for r in 0..c {
        for (m, &v) in max.iter_mut().zip(xv.row(r)) {
            *m = m.max(v);
        }
    }
    let mut sum = vec![0.0; t];
    for r in 0..c {
        for ((o, m), s) in out.row_mut(r).iter_mut().zip(&max).zip(sum.iter_mut()) {
            *o = (*o - m).exp();
            *s += *o;
        }
    }
    for r in 0..c {
        for (o, s) in out.row_mut(r).iter_mut().zip(&sum) {
            *o /= s;
        }
    }
    let saved = out.clone();
    Ok(Var::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let (c, t) = (saved.channels(), saved.len());
            let mut inner = vec![0.0; t];
            for r in 0..c {
                for ((acc, gy), y) in inner.iter_mut().zip(g.row(r)).zip(saved.row(r)) {
                    *acc += gy * y;
                }
            }
            let mut dx = Tensor::zeros(&[c, t]);
            for r in 0..c {
                let (gy, y) = (g.row(r), saved.row(r));
                for (i, d) in dx.row_mut(r).iter_mut().enumerate() {
                    *d = y[i] * (gy[i] - inner[i]);
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Inverted dropout. The keep mask is drawn from a ChaCha stream seeded with
/// `seed`, so a given seed always drops the same elements. `rate == 0` or
/// `train == false` is the identity.
pub fn dropout(x: &Var, rate: f64, train: bool, seed: u64) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(arg_err("dropout", format!("rate {rate} outside [0, 1)")));
    }
    if !train || rate == 0.0 {
        return Ok(x.clone());
    }
    x.value().ensure_finite("dropout")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.value().numel())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    let mut out = x.value().clone();
    for (o, m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok(Var::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = g.clone();
            for (d, m) in dx.data_mut().iter_mut().zip(&mask) {
                *d *= m;
            }
            vec![Some(dx)]
        }),
    ))
}
