mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_auprc, pairwise_auroc};
use sleepnet::clinical::grade_agreement;
use sleepnet::metrics::{auprc, auroc, challenge_arousal_track, confusion_matrix, one_vs_all_sens_spec, ScoredTrack};

/// Scores drawn from a small grid so that ties are common.
fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..200);
    let levels = rng.random_range(2..30);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

#[test]
fn ranking_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2018);
    for i in 0..200 {
        let (scores, labels) = random_instance(&mut rng);
        let track = ScoredTrack::new(scores.clone(), labels.clone());
        let (fast, slow) = (auprc(&track).unwrap(), brute_auprc(&scores, &labels));
        assert!((fast - slow).abs() <= 1e-9, "instance {i}: AUPRC {fast} vs {slow}");
        let (fast, slow) = (auroc(&track).unwrap(), pairwise_auroc(&scores, &labels));
        assert!((fast - slow).abs() <= 1e-9, "instance {i}: AUROC {fast} vs {slow}");
    }
}

#[test]
fn small_worked_example() {
    let t = ScoredTrack::new(vec![0.9, 0.8, 0.7, 0.6], vec![true, false, true, false]);
    assert!((auprc(&t).unwrap() - 0.8333).abs() < 1e-4);
    assert!((auroc(&t).unwrap() - 0.75).abs() < 1e-12);
}

proptest! {
    #[test]
    fn invariant_under_increasing_transforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, labels) = random_instance(&mut rng);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).exp() + 0.25).collect();
        let a = ScoredTrack::new(scores.clone(), labels.clone());
        let b = ScoredTrack::new(warped, labels.clone());
        prop_assert!((auprc(&a).unwrap() - auprc(&b).unwrap()).abs() < 1e-12);
        prop_assert!((auroc(&a).unwrap() - auroc(&b).unwrap()).abs() < 1e-12);
        let negated = ScoredTrack::new(scores.iter().map(|s| -s).collect(), labels);
        prop_assert!((auroc(&a).unwrap() + auroc(&negated).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_samples_are_the_same_as_removed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, labels) = random_instance(&mut rng);
        let mut mask: Vec<bool> = (0..scores.len()).map(|_| rng.random_bool(0.7)).collect();
        mask[0] = true;
        mask[1] = true;
        let masked = ScoredTrack::with_mask(scores.clone(), labels.clone(), mask.clone());
        let kept: Vec<usize> = (0..scores.len()).filter(|&i| mask[i]).collect();
        let removed = ScoredTrack::new(kept.iter().map(|&i| scores[i]).collect(), kept.iter().map(|&i| labels[i]).collect());
        prop_assert_eq!(auprc(&masked).unwrap(), auprc(&removed).unwrap());
        prop_assert_eq!(auroc(&masked).unwrap(), auroc(&removed).unwrap());
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, labels) = random_instance(&mut rng);
        let t = ScoredTrack::new(scores, labels);
        let ap = auprc(&t).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
        let roc = auroc(&t).unwrap();
        prop_assert!((0.0..=1.0).contains(&roc));
    }
}

#[test]
fn non_finite_scores_are_rejected_unless_masked() {
    let bad = ScoredTrack::new(vec![0.3, f64::NAN], vec![true, false]);
    assert!(auprc(&bad).is_err());
    let hidden = ScoredTrack::with_mask(vec![0.3, f64::NAN, 0.1], vec![true, false, false], vec![true, false, true]);
    assert_eq!(auroc(&hidden).unwrap(), 1.0);
    let short = ScoredTrack::with_mask(vec![0.3], vec![true, false], vec![true]);
    assert!(auroc(&short).is_err());
}

#[test]
fn challenge_track_holds_each_second() {
    let rate = 200;
    let labels: Vec<i8> = (0..3 * rate + 17)
        .map(|i| match i / rate {
            0 => 0,
            1 => 1,
            _ => -1,
        })
        .collect();
    let t = challenge_arousal_track(&[0.1, 0.8, 0.9, 0.4], &labels, rate, true).unwrap();
    assert_eq!(t.len(), labels.len());
    assert!(t.scores[..rate].iter().all(|&s| s == 0.1));
    assert!(t.scores[rate..2 * rate].iter().all(|&s| s == 0.8));
    assert_eq!(t.masked_count(), rate + 17);
    assert_eq!(auroc(&t).unwrap(), 1.0);
    // unmasked, the non-target second scored 0.9 outranks the positive
    let unmasked = challenge_arousal_track(&[0.1, 0.8, 0.9, 0.4], &labels, rate, false).unwrap();
    assert_eq!(unmasked.masked_count(), 0);
    assert!(auroc(&unmasked).unwrap() < 1.0);
}

#[test]
fn confusion_rows_are_truth() {
    let cm = confusion_matrix(&[1, 1, 0, 2], &[0, 1, 0, 2], 3).unwrap();
    assert_eq!(cm, vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    assert!(confusion_matrix(&[3], &[0], 3).is_err());
    assert!(confusion_matrix(&[0, 1], &[0], 3).is_err());
}

const VALIDATION: [[u64; 4]; 4] = [[12, 2, 0, 0], [4, 20, 3, 0], [0, 6, 35, 8], [0, 0, 2, 8]];
const TEST: [[u64; 4]; 4] = [[12, 2, 0, 0], [7, 16, 3, 0], [0, 12, 22, 14], [0, 0, 0, 12]];

fn rows(m: [[u64; 4]; 4]) -> Vec<Vec<u64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

#[test]
fn published_grade_agreement() {
    // (accuracy, normal over-grading, under-grading per mild/moderate/severe)
    let cases = [
        (VALIDATION, 0.75, 0.1428, [0.1481, 0.1224, 0.2000]),
        (TEST, 0.62, 0.1428, [0.2692, 0.25, 0.0]),
    ];
    for (m, acc, osr, usr) in cases {
        let g = grade_agreement(&rows(m)).unwrap();
        assert!((g.accuracy.unwrap() - acc).abs() < 1e-4, "{:?}", g.accuracy);
        assert!((g.normal_osr.unwrap() - osr).abs() < 1e-4, "{:?}", g.normal_osr);
        for (got, want) in g.usr.iter().zip(usr) {
            assert!((got.unwrap() - want).abs() < 1e-4, "{got:?} vs {want}");
        }
    }
}

#[test]
fn published_sensitivity_and_specificity() {
    let cases = [
        (VALIDATION, [(0.857, 0.953), (0.741, 0.890), (0.714, 0.902), (0.800, 0.911)]),
        (TEST, [(0.857, 0.919), (0.615, 0.811), (0.458, 0.942), (1.0, 0.841)]),
    ];
    for (m, expected) in cases {
        let rates = one_vs_all_sens_spec(&rows(m));
        for (r, (sens, spec)) in rates.iter().zip(expected) {
            assert!((r.sensitivity.unwrap() - sens).abs() < 5e-4, "{r:?}");
            assert!((r.specificity.unwrap() - spec).abs() < 5e-4, "{r:?}");
        }
    }
}
