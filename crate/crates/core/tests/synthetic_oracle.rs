use fedwsm::metrics::accuracy;
use fedwsm::nn::{loss_and_grad, mlp_shapes, sgd_step, LossKind, ModelParams};
use fedwsm::partition::{make_synthetic, Dataset};
use fedwsm::rng::{Purpose, Streams};
use rand::seq::SliceRandom;

/// Centralized multinomial logistic regression: batch 64, lr 0.05, weight decay 1e-4.
fn logistic_regression_test_accuracy(ds: &Dataset, epochs: usize) -> f64 {
    let streams = Streams::new(0);
    let mut w = ModelParams::init_glorot(
        mlp_shapes(ds.dim(), &[], ds.num_classes()),
        &mut streams.get(Purpose::ModelInit, 0, 0),
    )
    .unwrap();
    let mut rng = streams.get(Purpose::LocalTraining, 0, 0);
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(64) {
            let (_, g) = loss_and_grad(&w, &ds.train().select(chunk), &LossKind::CrossEntropy).unwrap();
            sgd_step(&mut w, &g, 0.05, 1e-4).unwrap();
        }
    }
    accuracy(&w, ds.test()).unwrap()
}

#[test]
fn unit_spread_regression_value() {
    let ds = make_synthetic(10, 32, 600, 1.0, 1).unwrap();
    assert_eq!(ds.test().len(), 1200);
    let acc = logistic_regression_test_accuracy(&ds, 50);
    // 384 of 1200 test rows; recorded from the first run and frozen.
    assert_eq!(acc, 384.0 / 1200.0);
}

#[test]
fn huge_spread_is_near_chance() {
    let ds = make_synthetic(10, 32, 600, 20.0, 1).unwrap();
    let acc = logistic_regression_test_accuracy(&ds, 5);
    assert!((acc - 0.1).abs() <= 0.05, "{acc}");
}
