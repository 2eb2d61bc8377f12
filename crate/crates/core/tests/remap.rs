mod common;

use autodiff::Tensor;
use proptest::prelude::*;

use common::REMAP_TRUTH as TRUTH;
use sleepnet::remap::{
    bce, encode_bin, full_index, marginals, multitask_loss, output_bin, remap, LossWeights, OutputBin, TaskLabelTriple,
    NON_EMPTY,
};

fn t(a: i8, p: i8, s: i8) -> TaskLabelTriple {
    TaskLabelTriple::new(a, p, s)
}

#[test]
fn full_truth_table() {
    let mut counts = [0usize; 3];
    for ((a, p, s), expected) in TRUTH {
        let triple = t(a, p, s);
        match expected {
            None => {
                assert!(output_bin(triple).unwrap_err().is_validation(), "{triple}");
                counts[0] += 1;
            }
            Some(bin) => {
                assert_eq!(output_bin(triple).unwrap(), bin, "{triple}");
                if bin == OutputBin::Ignore {
                    counts[1] += 1;
                } else {
                    counts[2] += 1;
                }
            }
        }
    }
    assert_eq!(counts, [6, 6, 6]);
    assert_eq!(TaskLabelTriple::all().len(), 18);
}

#[test]
fn only_two_bins_move_and_four_stay() {
    let moved: Vec<(u8, u8)> = (0..12u8)
        .filter_map(|b| {
            let out = remap(b).unwrap();
            (!out.is_ignored() && out.code() != b).then_some((b, out.code()))
        })
        .collect();
    assert_eq!(moved, [(2, 1), (4, 5)]);
    let fixed: Vec<u8> = (0..12u8).filter(|&b| remap(b).unwrap().code() == b && b != 0).collect();
    assert_eq!(fixed, [1, 5, 7, 10]);
    assert!(remap(12).is_err());
}

#[test]
fn full_index_layout() {
    let indices: Vec<usize> = TRUTH
        .iter()
        .map(|&((a, p, s), _)| full_index(t(a, p, s)).unwrap())
        .collect();
    assert_eq!(indices, (0..18).collect::<Vec<_>>());
    let non_empty: Vec<usize> = TRUTH
        .iter()
        .enumerate()
        .filter(|(_, (_, b))| b.is_some())
        .map(|(i, _)| i)
        .collect();
    assert_eq!(non_empty, NON_EMPTY);
    assert!(full_index(t(2, 0, 0)).is_err());
    assert!(full_index(t(0, -1, 0)).is_err());
    assert_eq!(encode_bin(t(0, 0, 1)).unwrap(), 7);
}

#[test]
fn every_class_has_its_own_channel() {
    for (i, c) in OutputBin::CLASSES.iter().enumerate() {
        assert_eq!(c.channel(), Some(i));
        assert_eq!(OutputBin::from_code(c.code()), Some(*c));
    }
    assert_eq!(OutputBin::Ignore.channel(), None);
    assert_eq!(OutputBin::from_code(3), None);
}

fn simplex() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0f64..1.0).prop_filter("non-zero", |v| v.iter().sum::<f64>() > 1e-3).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.map(|x| x / s)
    })
}

proptest! {
    #[test]
    fn marginal_identities(p in simplex()) {
        let m = marginals(p).unwrap();
        prop_assert_eq!(m.arousal, p[3]);
        prop_assert_eq!(m.apnea, p[1]);
        prop_assert!((m.sleep - (1.0 - p[0])).abs() < 1e-12);
        prop_assert!(m.apnea + m.arousal <= m.sleep + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m.sleep));
    }

    #[test]
    fn ignored_samples_get_no_gradient(p in simplex(), q in simplex(), keep in 0usize..4) {
        let probs = Tensor::new(vec![4, 2], vec![p[0], q[0], p[1], q[1], p[2], q[2], p[3], q[3]]).unwrap();
        let bins = [OutputBin::Ignore, OutputBin::CLASSES[keep]];
        let (loss, grad) = multitask_loss(&probs, &bins, LossWeights::MULTI_TASK).unwrap();
        for c in 0..4 {
            prop_assert_eq!(grad.get2(c, 0), 0.0);
        }
        let single = Tensor::new(vec![4, 1], q.to_vec()).unwrap();
        let (alone, _) = multitask_loss(&single, &bins[1..], LossWeights::MULTI_TASK).unwrap();
        prop_assert!((loss - alone).abs() < 1e-12);
    }

    #[test]
    fn arousal_only_weights_give_plain_arousal_cross_entropy(p in simplex(), keep in 0usize..4) {
        let bin = OutputBin::CLASSES[keep];
        let probs = Tensor::new(vec![4, 1], p.to_vec()).unwrap();
        let (loss, _) = multitask_loss(&probs, &[bin], LossWeights::AROUSAL_ONLY).unwrap();
        let q = if bin == OutputBin::TargetArousal { p[3] } else { 1.0 - p[3] };
        let expected = -q.max(1e-12).ln();
        prop_assert!((loss - expected).abs() < 1e-9, "{} vs {}", loss, expected);
    }

    // Central differences of the loss in each probability.
    #[test]
    fn loss_gradient_matches_finite_differences(p in simplex(), keep in 0usize..4) {
        let p = p.map(|x| 0.05 + 0.8 * x);
        let bins = [OutputBin::CLASSES[keep]];
        let at = |v: [f64; 4]| multitask_loss(&Tensor::new(vec![4, 1], v.to_vec()).unwrap(), &bins, LossWeights::MULTI_TASK).unwrap();
        let (_, grad) = at(p);
        let h = 1e-6;
        for c in 0..4 {
            let (mut up, mut down) = (p, p);
            up[c] += h;
            down[c] -= h;
            let numeric = (at(up).0 - at(down).0) / (2.0 * h);
            prop_assert!((numeric - grad.get2(c, 0)).abs() < 1e-5, "channel {}: {} vs {}", c, numeric, grad.get2(c, 0));
        }
    }
}

#[test]
fn uniform_prediction_on_normal_sleep() {
    let probs = Tensor::new(vec![4, 1], vec![0.25; 4]).unwrap();
    let (loss, _) = multitask_loss(&probs, &[OutputBin::NormalSleep], LossWeights::MULTI_TASK).unwrap();
    // arousal 2·ln(4/3), apnea ln(4/3), sleep −ln(3/4)
    assert!((loss - 4.0 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
}

#[test]
fn clamped_cross_entropy_stays_finite() {
    let (l, d) = bce(0.0, true);
    assert!(l.is_finite() && l > 27.0);
    assert_eq!(d, 0.0);
    let (l, _) = bce(1.0, true);
    assert_eq!(l, 0.0);
}

#[test]
fn malformed_inputs() {
    assert!(marginals([0.5, 0.5, 0.5, 0.0]).is_err());
    assert!(marginals([-0.1, 0.6, 0.5, 0.0]).is_err());
    assert!(marginals([f64::NAN, 0.0, 0.0, 1.0]).is_err());
    let probs = Tensor::new(vec![4, 2], vec![0.25; 8]).unwrap();
    assert!(multitask_loss(&probs, &[OutputBin::Wake], LossWeights::MULTI_TASK).is_err());
}
