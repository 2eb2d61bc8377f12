use super::{axpy, dot};
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;
use crate::var::Var;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            dilation: 1,
            groups: 1,
        }
    }
}

struct Geometry {
    cin: usize,
    cout: usize,
    per_group_in: usize,
    per_group_out: usize,
    taps: usize,
    t: usize,
    dilation: usize,
    pad_left: usize,
}

impl Geometry {
    /// Valid output range `[lo, hi)` for tap `j`, and the input offset.
    #[inline]
    fn span(&self, j: usize) -> (usize, usize, isize) {
        let shift = (j * self.dilation) as isize - self.pad_left as isize;
        let t = self.t as isize;
        let lo = (-shift).clamp(0, t) as usize;
        let hi = (t - shift).clamp(0, t) as usize;
        (lo, hi.max(lo), shift)
    }

    /// `span` restricted to the output block `[b0, b1)`.
    #[inline]
    fn span_in(&self, j: usize, b0: usize, b1: usize) -> (usize, usize, isize) {
        let (lo, hi, shift) = self.span(j);
        let (lo, hi) = (lo.max(b0), hi.min(b1));
        (lo, hi.max(lo), shift)
    }

    fn weight_index(&self, o: usize, ci: usize, j: usize) -> usize {
        (o * self.per_group_in + ci) * self.taps + j
    }

    fn input_channel(&self, o: usize, ci: usize) -> usize {
        (o / self.per_group_out) * self.per_group_in + ci
    }
}

/// Output samples processed together, so every input and output row touched
/// by one block stays in cache.
const BLOCK: usize = 1024;

fn blocks(t: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..t.div_ceil(BLOCK)).map(move |i| (i * BLOCK, ((i + 1) * BLOCK).min(t)))
}

/// Same-length 1-D cross-correlation.
///
/// `input` is `C_in × T`, `weight` is `C_out × (C_in / groups) × k`, and the
/// output is `C_out × T`. The input is zero-padded by `(k − 1)·dilation`
/// samples in total, split as evenly as possible with the extra sample on the
/// right. `groups == C_in` gives a depthwise convolution; `k == 1` with
/// `groups == 1` gives a pointwise channel mix.
pub fn conv1d(input: &Var, weight: &Var, bias: Option<&Var>, spec: ConvSpec) -> Result<Var> {
    let x = input.value();
    let w = weight.value();
    x.expect_rank("conv1d", 2)?;
    w.expect_rank("conv1d", 3)?;
    if spec.dilation == 0 || spec.groups == 0 {
        return Err(arg_err("conv1d", "dilation and groups must be positive"));
    }
    let (cin, t) = (x.channels(), x.len());
    let (cout, per_group_in, taps) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let g = spec.groups;
    if cin % g != 0 || cout % g != 0 || per_group_in != cin / g {
        return Err(shape_err(
            "conv1d",
            format!("input {cin} ch, weight {:?}, groups {g}", w.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(shape_err("conv1d", format!("bias {:?} for {cout} outputs", b.shape())));
        }
        b.value().ensure_finite("conv1d")?;
    }
    x.ensure_finite("conv1d")?;
    w.ensure_finite("conv1d")?;

    let geo = Geometry {
        cin,
        cout,
        per_group_in,
        per_group_out: cout / g,
        taps,
        t,
        dilation: spec.dilation,
        pad_left: (taps - 1) * spec.dilation / 2,
    };

    let mut out = Tensor::zeros(&[cout, t]);
    let wd = w.data();
    if let Some(b) = bias {
        for o in 0..cout {
            out.row_mut(o).fill(b.value().data()[o]);
        }
    }
    for (b0, b1) in blocks(t) {
        for o in 0..cout {
            let row = out.row_mut(o);
            for ci in 0..per_group_in {
                let xr = x.row(geo.input_channel(o, ci));
                for j in 0..taps {
                    let (lo, hi, shift) = geo.span_in(j, b0, b1);
                    if lo < hi {
                        let src = &xr[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                        axpy(&mut row[lo..hi], wd[geo.weight_index(o, ci, j)], src);
                    }
                }
            }
        }
    }

    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Ok(Var::from_op(
        out,
        parents,
        Box::new(move |g, parents| {
            let x = parents[0].value();
            let w = parents[1].value();
            let wd = w.data();
            let mut dx = parents[0].requires_grad().then(|| Tensor::zeros(&[geo.cin, geo.t]));
            let mut dw = parents[1].requires_grad().then(|| Tensor::zeros(w.shape()));
            for (b0, b1) in blocks(geo.t) {
                for o in 0..geo.cout {
                    let go = g.row(o);
                    for ci in 0..geo.per_group_in {
                        let ch = geo.input_channel(o, ci);
                        for j in 0..geo.taps {
                            let (lo, hi, shift) = geo.span_in(j, b0, b1);
                            if lo >= hi {
                                continue;
                            }
                            let (slo, shi) = ((lo as isize + shift) as usize, (hi as isize + shift) as usize);
                            let wi = geo.weight_index(o, ci, j);
                            if let Some(dx) = dx.as_mut() {
                                axpy(&mut dx.row_mut(ch)[slo..shi], wd[wi], &go[lo..hi]);
                            }
                            if let Some(dw) = dw.as_mut() {
                                dw.data_mut()[wi] += dot(&go[lo..hi], &x.row(ch)[slo..shi]);
                            }
                        }
                    }
                }
            }
            let mut grads = vec![dx, dw];
            if parents.len() == 3 {
                grads.push(parents[2].requires_grad().then(|| {
                    Tensor::from_vec((0..geo.cout).map(|o| g.row(o).iter().sum()).collect())
                }));
            }
            grads
        }),
    ))
}
