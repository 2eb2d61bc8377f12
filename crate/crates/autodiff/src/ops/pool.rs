use crate::error::{arg_err, Result};
use crate::tensor::Tensor;
use crate::var::Var;

/// Non-overlapping max pooling along time. A trailing partial window is
/// dropped. The backward pass routes each gradient to the first maximal
/// element of its window.
pub fn maxpool1d(x: &Var, width: usize) -> Result<Var> {
    let xv = x.value();
    xv.expect_rank("maxpool1d", 2)?;
    if width == 0 {
        return Err(arg_err("maxpool1d", "width must be positive"));
    }
    xv.ensure_finite("maxpool1d")?;
    let (c, t) = (xv.channels(), xv.len());
    let n = t / width;
    let mut out = Tensor::zeros(&[c, n]);
    let mut argmax = vec![0usize; c * n];
    for r in 0..c {
        let src = xv.row(r);
        let dst = out.row_mut(r);
        for i in 0..n {
            let win = &src[i * width..(i + 1) * width];
            let mut best = 0;
            for (k, &v) in win.iter().enumerate().skip(1) {
                if v > win[best] {
                    best = k;
                }
            }
            dst[i] = win[best];
            argmax[r * n + i] = i * width + best;
        }
    }
    Ok(Var::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut dx = Tensor::zeros(&[c, t]);
            for r in 0..c {
                let gr = g.row(r);
                let dr = dx.row_mut(r);
                for i in 0..n {
                    dr[argmax[r * n + i]] += gr[i];
                }
            }
            vec![Some(dx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maxima() {
        let x = Var::constant(Tensor::new(vec![1, 4], vec![1.0, 3.0, 2.0, 4.0]).unwrap());
        assert_eq!(maxpool1d(&x, 2).unwrap().value().data(), &[3.0, 4.0]);
    }

    #[test]
    fn two_five_five_reduces_by_fifty() {
        let x = Var::constant(Tensor::zeros(&[2, 50 * 7]));
        let y = maxpool1d(&maxpool1d(&maxpool1d(&x, 2).unwrap(), 5).unwrap(), 5).unwrap();
        assert_eq!(y.shape(), &[2, 7]);
    }

    #[test]
    fn ties_route_to_first_index() {
        let x = Var::parameter(Tensor::new(vec![1, 3], vec![2.0, 2.0, 1.0]).unwrap());
        let y = maxpool1d(&x, 3).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0, 0.0, 0.0]);
    }
}
