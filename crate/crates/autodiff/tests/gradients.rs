use autodiff::gradcheck::{grad_check, operator_suite, random_tensor};
use autodiff::ops;
use autodiff::{Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_operator_matches_finite_differences() {
    let outcomes = operator_suite(20, 7).unwrap();
    assert!(outcomes.len() >= 12);
    for o in &outcomes {
        println!("{:<20} cases={} max_rel={:.2e} tol={:.0e}", o.name, o.cases, o.max_rel_error, o.tolerance);
    }
    for o in &outcomes {
        assert!(o.passed(), "{} exceeded tolerance: {:.3e}", o.name, o.max_rel_error);
    }
}

// A deliberately wrong backward rule must be caught.
#[test]
fn corrupted_backward_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, &[3, 7], 0.1, 1.0);
    let report = grad_check(
        |v| {
            let y = ops::tanh(&v[0])?;
            let value = y.value().clone();
            Ok(Var::from_op(
                value,
                vec![y],
                Box::new(|g, _| vec![Some(g.map(|a| a * 1.1))]),
            ))
        },
        &[x],
        1e-5,
        3,
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
}

#[test]
fn composite_graph_with_shared_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_tensor(&mut rng, &[2, 9], 0.1, 1.0);
    let w = random_tensor(&mut rng, &[3, 2, 3], 0.1, 1.0);
    let report = grad_check(
        |v| {
            let h = ops::conv1d(&v[0], &v[1], None, Default::default())?;
            let a = ops::selu(&h)?;
            let b = ops::tanh(&h)?;
            ops::softmax(&ops::add(&a, &b)?)
        },
        &[x, w],
        1e-5,
        11,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn large_inputs_are_subsampled() {
    let x = Tensor::new(vec![2, 6000], (0..12000).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let report = grad_check(|v| ops::tanh(&v[0]), &[x], 1e-5, 1).unwrap();
    assert_eq!(report.checked, 10_000);
    assert!(report.max_rel_error < 1e-4);
}
