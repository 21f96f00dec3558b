use fedwsm::nn::gradcheck::{check_gradient, random_case};
use fedwsm::nn::*;
use fedwsm::rng::{Purpose, Streams};
use fedwsm::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

fn seven_net() -> ModelParams {
    let mut rng = Streams::new(7).get(Purpose::ModelInit, 0, 0);
    let mut p = ModelParams::init_glorot(mlp_shapes(4, &[5], 3), &mut rng).unwrap();
    p.biases_mut(0).copy_from_slice(&[0.1, -0.2, 0.05, 0.0, 0.3]);
    p.biases_mut(1).copy_from_slice(&[0.01, -0.02, 0.03]);
    p
}

#[test]
fn forward_matches_external_oracle() {
    let p = seven_net();
    assert_eq!(p.weights(0)[0], -0.21947713063715757);
    assert_eq!(p.weights(1)[14], -0.8565514339224441);
    let x = Matrix::from_rows(&[
        vec![0.5, -1.0, 2.0, 0.0],
        vec![1.0, 1.0, 1.0, 1.0],
        vec![-0.3, 0.2, 0.7, -1.5],
    ])
    .unwrap();
    // Computed with numpy from the weights above: relu(x W0^T + b0) W1^T + b1.
    let expected = [
        [0.22200544132445255, -0.34032398412456744, -1.0294198716701037],
        [-0.4081952217468635, -0.5811188293452975, -1.4721956292431717],
        [0.6432842904903397, -0.36435897418678415, -0.21363296641891955],
    ];
    let z = predict_logits(&p, &x).unwrap();
    for (r, row) in expected.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            assert!((z.get(r, c) - v).abs() < 1e-14, "logit ({r},{c})");
        }
    }
}

#[test]
fn forward_trivial_cases() {
    let zero = ModelParams::zeros(mlp_shapes(3, &[4], 2)).unwrap();
    let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
    assert_eq!(predict_logits(&zero, &x).unwrap().data(), &[0.0, 0.0]);

    let mut id = ModelParams::zeros(mlp_shapes(2, &[], 2)).unwrap();
    id.weights_mut(0).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    assert_eq!(predict_logits(&id, &x).unwrap().data(), &[1.0, 2.0]);

    let wrong = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
    assert!(matches!(predict_logits(&id, &wrong), Err(Error::Config(_))));
}

#[test]
fn hundred_random_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let case = random_case(&mut rng, 1e-3).unwrap();
        for kind in [LossKind::CrossEntropy, LossKind::Wsm(case.beta.clone())] {
            let g = check_gradient(&case.params, &case.batch, &kind, H, FLOOR).unwrap();
            worst = worst.max(g.max_rel_error);
        }
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn uniform_beta_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let c = rng.random_range(2..=12);
        let b = rng.random_range(1..=4);
        let z: Vec<f64> = (0..b * c).map(|_| rng.random_range(-20.0..20.0)).collect();
        let z = Matrix::new(b, c, z).unwrap();
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let kind = LossKind::Wsm(ClassWeights::uniform(c));
        let wsm = loss(&z, &y, &kind).unwrap();
        let ce = loss_ce(&z, &y).unwrap();
        assert!((wsm - (ce - (c as f64).ln())).abs() < 1e-10);
        let gw = logit_grad(&z, &y, &kind).unwrap();
        let gc = logit_grad(&z, &y, &LossKind::CrossEntropy).unwrap();
        for (a, e) in gw.data().iter().zip(gc.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn single_present_class_has_zero_gradient() {
    let w = ClassWeights::new(vec![1.0, 0.0]).unwrap();
    let z = Matrix::from_rows(&[vec![3.0, -7.0], vec![-2.0, 40.0]]).unwrap();
    let g = logit_grad(&z, &[0, 0], &LossKind::Wsm(w)).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));
}

#[test]
fn absent_label_is_an_invariant_violation() {
    let w = ClassWeights::new(vec![0.5, 0.5, 0.0]).unwrap();
    let z = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
    assert!(matches!(loss_wsm(&z, &[2], &w), Err(Error::Invariant(_))));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let case = random_case(&mut rng, 1e-3).unwrap();
        let mut p = case.params.clone();
        for _ in 0..20 {
            let (_, g) = loss_and_grad(&p, &case.batch, &LossKind::Wsm(case.beta.clone())).unwrap();
            sgd_step(&mut p, &g, 0.1, 1e-4).unwrap();
        }
        p
    };
    assert_eq!(run().to_flat(), run().to_flat());
}

fn logits_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (2usize..8).prop_flat_map(|c| {
        (
            proptest::collection::vec(-1e4f64..1e4, c),
            proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], c),
            0..c,
        )
    })
}

proptest! {
    #[test]
    fn wsm_masks_absent_classes((z, raw, y) in logits_and_weights()) {
        let mut raw = raw;
        if raw[y] == 0.0 {
            raw[y] = 0.5;
        }
        let total: f64 = raw.iter().sum();
        let mut beta: Vec<f64> = raw.iter().map(|v| v / total).collect();
        beta[y] = 0.0;
        beta[y] = 1.0 - beta.iter().sum::<f64>();
        let w = ClassWeights::new(beta.clone()).unwrap();
        let c = z.len();
        let zm = Matrix::new(1, c, z).unwrap();
        let l = loss_wsm(&zm, &[y], &w).unwrap();
        prop_assert!(l.is_finite());
        let g = logit_grad(&zm, &[y], &LossKind::Wsm(w)).unwrap();
        for (k, &b) in beta.iter().enumerate() {
            prop_assert!(g.data()[k].is_finite());
            if b == 0.0 {
                prop_assert_eq!(g.data()[k], 0.0);
            }
        }
        let ce = logit_grad(&zm, &[y], &LossKind::CrossEntropy).unwrap();
        prop_assert!(ce.data().iter().all(|v| v.is_finite()));
        prop_assert!(loss_ce(&zm, &[y]).unwrap().is_finite());
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, 1e-3).unwrap();
        for kind in [LossKind::CrossEntropy, LossKind::Wsm(case.beta.clone())] {
            let g = check_gradient(&case.params, &case.batch, &kind, H, FLOOR).unwrap();
            prop_assert!(g.max_rel_error < 1e-5, "relative error {:e}", g.max_rel_error);
        }
    }
}
