use crate::error::Result;
use crate::tensor::Tensor;
use crate::var::Var;

/// SELU scale, from the self-normalising fixed point.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU negative-branch coefficient.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

fn unary(
    op: &'static str,
    x: &Var,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Var> {
    x.value().ensure_finite(op)?;
    let out = x.value().map(f);
    let saved = out.clone();
    Ok(Var::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g: &Tensor, parents: &[Var]| {
            let xin = parents[0].value().data();
            let y = saved.data();
            let mut dx = g.clone();
            for (i, d) in dx.data_mut().iter_mut().enumerate() {
                *d *= df(xin[i], y[i]);
            }
            vec![Some(dx)]
        }),
    ))
}

pub fn selu(x: &Var) -> Result<Var> {
    unary(
        "selu",
        x,
        |v| {
            if v > 0.0 {
                SELU_LAMBDA * v
            } else {
                SELU_LAMBDA * SELU_ALPHA * v.exp_m1()
            }
        },
        |v, y| {
            if v > 0.0 {
                SELU_LAMBDA
            } else {
                y + SELU_LAMBDA * SELU_ALPHA
            }
        },
    )
}

pub fn relu(x: &Var) -> Result<Var> {
    unary("relu", x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
}

pub fn tanh(x: &Var) -> Result<Var> {
    unary("tanh", x, f64::tanh, |_, y| 1.0 - y * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(f: fn(&Var) -> Result<Var>, v: f64) -> f64 {
        f(&Var::constant(Tensor::scalar(v))).unwrap().value().data()[0]
    }

    #[test]
    fn selu_reference_points() {
        assert_eq!(eval(selu, 0.0), 0.0);
        assert!((eval(selu, 1.0) - SELU_LAMBDA).abs() < 1e-15);
        // saturation towards -lambda*alpha
        let s = eval(selu, -30.0);
        assert!((s - (-1.758_099)).abs() < 1e-6, "{s}");
        assert!((s + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }

    #[test]
    fn relu_reference_points() {
        assert_eq!(eval(relu, -2.0), 0.0);
        assert_eq!(eval(relu, 2.0), 2.0);
    }

    #[test]
    fn rejects_non_finite() {
        let x = Var::constant(Tensor::scalar(f64::NAN));
        assert!(tanh(&x).is_err());
    }
}
