use autodiff::ops::{self, BatchNormMode, RunningStats};
use autodiff::{Tensor, Var};
use proptest::prelude::*;

fn matrix(max_c: usize, max_t: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_c, 1..=max_t).prop_flat_map(|(c, t)| {
        prop::collection::vec(-5.0f64..5.0, c * t).prop_map(move |d| Tensor::new(vec![c, t], d).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_columns_sum_to_one(x in matrix(5, 12)) {
        let y = ops::softmax(&Var::constant(x)).unwrap();
        let v = y.value();
        for t in 0..v.len() {
            let s: f64 = (0..v.channels()).map(|c| v.get2(c, t)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        prop_assert!(v.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn conv_preserves_length(x in matrix(3, 20), k in 1usize..6, d in 1usize..4) {
        let c = x.channels();
        let w = Tensor::full(&[2, c, k], 0.1);
        let y = ops::conv1d(&Var::constant(x.clone()), &Var::constant(w), None, Default::default()).unwrap();
        prop_assert_eq!(y.value().len(), x.len());
        let yd = ops::conv1d(
            &Var::constant(x.clone()),
            &Var::constant(Tensor::full(&[c, 1, k], 0.1)),
            None,
            ops::ConvSpec { dilation: d, groups: c },
        ).unwrap();
        prop_assert_eq!(yd.value().shape(), x.shape());
    }

    #[test]
    fn maxpool_output_is_floor(x in matrix(3, 40), w in 1usize..6) {
        let y = ops::maxpool1d(&Var::constant(x.clone()), w).unwrap();
        prop_assert_eq!(y.value().len(), x.len() / w);
    }

    #[test]
    fn weight_norm_rows_have_norm_g(v in matrix(4, 6), g in 0.1f64..3.0) {
        let rows = v.channels();
        let w = ops::weight_norm(&Var::constant(v.clone()), &Var::constant(Tensor::full(&[rows], g))).unwrap();
        for r in 0..rows {
            let n: f64 = w.value().row(r).iter().map(|a| a * a).sum::<f64>().sqrt();
            let vn: f64 = v.row(r).iter().map(|a| a * a).sum::<f64>().sqrt();
            if vn > 1e-6 {
                prop_assert!((n - g).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn train_batch_norm_standardises(x in matrix(3, 16)) {
        prop_assume!(x.len() >= 2);
        let c = x.channels();
        let mut st = RunningStats::new(c);
        let y = ops::batch_norm(
            &Var::constant(x.clone()),
            &Var::constant(Tensor::full(&[c], 1.0)),
            &Var::constant(Tensor::zeros(&[c])),
            &mut st,
            BatchNormMode::Train,
        ).unwrap();
        for r in 0..c {
            let row = y.value().row(r);
            let mean: f64 = row.iter().sum::<f64>() / row.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn positionwise_columns_are_centred(x in matrix(5, 10)) {
        prop_assume!(x.channels() >= 2);
        let y = ops::positionwise_norm(&Var::constant(x)).unwrap();
        let v = y.value();
        for t in 0..v.len() {
            let s: f64 = (0..v.channels()).map(|c| v.get2(c, t)).sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn selu_is_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let x = Tensor::from_vec(vec![a.min(b), a.max(b)]);
        let y = ops::selu(&Var::constant(x)).unwrap();
        prop_assert!(y.value().data()[0] <= y.value().data()[1]);
    }
}
