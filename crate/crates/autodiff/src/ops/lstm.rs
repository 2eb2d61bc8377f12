//! Bidirectional LSTM over a `C × T` sequence with full backpropagation
//! through time.
//!
//! Gate layout in the stacked `4H` weight rows is input, forget, candidate,
//! output. Both directions start from zero hidden and cell state.

use super::dot;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;
use crate::var::Var;

/// Weights of one direction: `w_ih` is `4H × C`, `w_hh` is `4H × H`,
/// `bias` is `4H`.
#[derive(Clone, Debug)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

impl LstmWeights {
    fn hidden(&self) -> usize {
        self.w_hh.shape().get(1).copied().unwrap_or(0)
    }

    fn check(&self, c: usize, h: usize) -> Result<()> {
        if self.w_ih.shape() != [4 * h, c] || self.w_hh.shape() != [4 * h, h] || self.bias.shape() != [4 * h] {
            return Err(shape_err(
                "bilstm",
                format!(
                    "w_ih {:?}, w_hh {:?}, bias {:?} for {c} inputs and hidden {h}",
                    self.w_ih.shape(),
                    self.w_hh.shape(),
                    self.bias.shape()
                ),
            ));
        }
        for v in [&self.w_ih, &self.w_hh, &self.bias] {
            v.value().ensure_finite("bilstm")?;
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-position activations of one direction, all `T × …` and indexed by
/// time position (not processing step).
struct DirectionCache {
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
}

fn positions(t: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..t).rev())
    } else {
        Box::new(0..t)
    }
}

fn previous(pos: usize, t: usize, reverse: bool) -> Option<usize> {
    if reverse {
        (pos + 1 < t).then_some(pos + 1)
    } else {
        pos.checked_sub(1)
    }
}

fn run_direction(xt: &[f64], c: usize, t: usize, h: usize, w: [&Tensor; 3], reverse: bool) -> DirectionCache {
    let (w_ih, w_hh, bias) = (w[0].data(), w[1].data(), w[2].data());
    let g4 = 4 * h;
    let mut cache = DirectionCache {
        gates: vec![0.0; t * g4],
        cells: vec![0.0; t * h],
        tanh_cells: vec![0.0; t * h],
        hidden: vec![0.0; t * h],
    };
    let zero = vec![0.0; h];
    let mut z = vec![0.0; g4];
    for pos in positions(t, reverse) {
        let x = &xt[pos * c..(pos + 1) * c];
        let prev = previous(pos, t, reverse);
        let (h_prev, c_prev) = match prev {
            Some(p) => (
                cache.hidden[p * h..(p + 1) * h].to_vec(),
                cache.cells[p * h..(p + 1) * h].to_vec(),
            ),
            None => (zero.clone(), zero.clone()),
        };
        for r in 0..g4 {
            z[r] = bias[r] + dot(&w_ih[r * c..(r + 1) * c], x) + dot(&w_hh[r * h..(r + 1) * h], &h_prev);
        }
        let gates = &mut cache.gates[pos * g4..(pos + 1) * g4];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        for j in 0..h {
            let cell = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            let tc = cell.tanh();
            cache.cells[pos * h + j] = cell;
            cache.tanh_cells[pos * h + j] = tc;
            cache.hidden[pos * h + j] = gates[3 * h + j] * tc;
        }
    }
    cache
}

struct DirectionGrads {
    dx: Vec<f64>,
    dw_ih: Tensor,
    dw_hh: Tensor,
    dbias: Tensor,
}

/// BPTT for one direction. `dout` is `T × H` (time-major) upstream gradient
/// on the hidden states of this direction.
#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    xt: &[f64],
    c: usize,
    t: usize,
    h: usize,
    w: [&Tensor; 3],
    cache: &DirectionCache,
    dout: &[f64],
    reverse: bool,
) -> DirectionGrads {
    let (w_ih, w_hh) = (w[0].data(), w[1].data());
    let g4 = 4 * h;
    let mut grads = DirectionGrads {
        dx: vec![0.0; t * c],
        dw_ih: Tensor::zeros(&[g4, c]),
        dw_hh: Tensor::zeros(&[g4, h]),
        dbias: Tensor::zeros(&[g4]),
    };
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    let zero = vec![0.0; h];
    let order: Vec<usize> = positions(t, reverse).collect();
    for &pos in order.iter().rev() {
        let gates = &cache.gates[pos * g4..(pos + 1) * g4];
        let prev = previous(pos, t, reverse);
        let (h_prev, c_prev) = match prev {
            Some(p) => (&cache.hidden[p * h..(p + 1) * h], &cache.cells[p * h..(p + 1) * h]),
            None => (&zero[..], &zero[..]),
        };
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = cache.tanh_cells[pos * h + j];
            let dh = dout[pos * h + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = &xt[pos * c..(pos + 1) * c];
        let dx = &mut grads.dx[pos * c..(pos + 1) * c];
        dh_next.fill(0.0);
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads.dbias.data_mut()[r] += d;
            let row_ih = &mut grads.dw_ih.data_mut()[r * c..(r + 1) * c];
            for k in 0..c {
                row_ih[k] += d * x[k];
                dx[k] += d * w_ih[r * c + k];
            }
            let row_hh = &mut grads.dw_hh.data_mut()[r * h..(r + 1) * h];
            for k in 0..h {
                row_hh[k] += d * h_prev[k];
                dh_next[k] += d * w_hh[r * h + k];
            }
        }
    }
    grads
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Runs a forward and a backward LSTM over `input` (`C × T`) and stacks their
/// hidden states into a `2H × T` output: rows `0..H` forward, `H..2H` backward.
pub fn bilstm(input: &Var, fwd: &LstmWeights, bwd: &LstmWeights) -> Result<Var> {
    let xv = input.value();
    xv.expect_rank("bilstm", 2)?;
    xv.ensure_finite("bilstm")?;
    let (c, t) = (xv.channels(), xv.len());
    let h = fwd.hidden();
    fwd.check(c, h)?;
    bwd.check(c, h)?;

    let xt = transpose(xv.data(), c, t);
    let wf = [fwd.w_ih.value(), fwd.w_hh.value(), fwd.bias.value()];
    let wb = [bwd.w_ih.value(), bwd.w_hh.value(), bwd.bias.value()];
    let cache_f = run_direction(&xt, c, t, h, wf, false);
    let cache_b = run_direction(&xt, c, t, h, wb, true);

    let mut out = Tensor::zeros(&[2 * h, t]);
    for pos in 0..t {
        for j in 0..h {
            out.data_mut()[j * t + pos] = cache_f.hidden[pos * h + j];
            out.data_mut()[(h + j) * t + pos] = cache_b.hidden[pos * h + j];
        }
    }

    let parents = vec![
        input.clone(),
        fwd.w_ih.clone(),
        fwd.w_hh.clone(),
        fwd.bias.clone(),
        bwd.w_ih.clone(),
        bwd.w_hh.clone(),
        bwd.bias.clone(),
    ];
    Ok(Var::from_op(
        out,
        parents,
        Box::new(move |g, parents| {
            let gt = transpose(g.data(), 2 * h, t);
            let mut dout_f = vec![0.0; t * h];
            let mut dout_b = vec![0.0; t * h];
            for pos in 0..t {
                dout_f[pos * h..(pos + 1) * h].copy_from_slice(&gt[pos * 2 * h..pos * 2 * h + h]);
                dout_b[pos * h..(pos + 1) * h].copy_from_slice(&gt[pos * 2 * h + h..(pos + 1) * 2 * h]);
            }
            let wf = [parents[1].value(), parents[2].value(), parents[3].value()];
            let wb = [parents[4].value(), parents[5].value(), parents[6].value()];
            let gf = backprop_direction(&xt, c, t, h, wf, &cache_f, &dout_f, false);
            let gb = backprop_direction(&xt, c, t, h, wb, &cache_b, &dout_b, true);
            let dx_t: Vec<f64> = gf.dx.iter().zip(&gb.dx).map(|(a, b)| a + b).collect();
            let dx = Tensor::new(vec![c, t], transpose(&dx_t, t, c)).expect("bilstm dx shape");
            vec![
                Some(dx),
                Some(gf.dw_ih),
                Some(gf.dw_hh),
                Some(gf.dbias),
                Some(gb.dw_ih),
                Some(gb.dw_hh),
                Some(gb.dbias),
            ]
        }),
    ))
}
