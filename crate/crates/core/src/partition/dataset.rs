use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{LabeledBatch, Matrix};
use crate::rng::{Purpose, Streams};

/// A labelled dataset with a held-out test split.
///
/// `train` is what gets partitioned across clients; `test` is only used to
/// evaluate the global model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    train: LabeledBatch,
    test: LabeledBatch,
    num_classes: usize,
}

impl Dataset {
    pub fn new(train: LabeledBatch, test: LabeledBatch, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("dataset needs at least one class"));
        }
        if !test.is_empty() && test.dim() != train.dim() {
            return Err(Error::config(format!(
                "test feature dimension {} differs from train dimension {}",
                test.dim(),
                train.dim()
            )));
        }
        if let Some(&y) = train.labels().iter().chain(test.labels()).find(|&&y| y >= num_classes) {
            return Err(Error::config(format!("label {y} out of range for {num_classes} classes")));
        }
        Ok(Self {
            train,
            test,
            num_classes,
        })
    }

    pub fn train(&self) -> &LabeledBatch {
        &self.train
    }

    pub fn test(&self) -> &LabeledBatch {
        &self.test
    }

    pub fn features(&self) -> &Matrix {
        self.train.features()
    }

    pub fn labels(&self) -> &[usize] {
        self.train.labels()
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Replaces the test split.
    pub fn with_test(self, test: LabeledBatch) -> Result<Self> {
        Self::new(self.train, test, self.num_classes)
    }

    /// Moves a random `fraction` of the training rows into the test split
    /// (appended after any existing test rows).
    pub fn split_test(self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::config(format!("test fraction must lie in [0, 1), got {fraction}")));
        }
        let n = self.train.len();
        let n_test = (fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut Streams::new(seed).get(Purpose::TestSplit, 0, 0));
        let (test_idx, train_idx) = order.split_at(n_test);
        let mut train_idx = train_idx.to_vec();
        let mut test_idx = test_idx.to_vec();
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let moved = self.train.select(&test_idx);
        let test = if self.test.is_empty() {
            moved
        } else {
            LabeledBatch::concat(self.dim(), [&self.test, &moved])
        };
        Self::new(self.train.select(&train_idx), test, self.num_classes)
    }
}

/// Gaussian class clusters.
///
/// Class `c` is centred on the unit basis vector `e_c` when `C <= D`, so all
/// centres are pairwise `sqrt(2)` apart; otherwise centres are random unit
/// vectors. Each sample adds isotropic noise with standard deviation `spread`.
/// `round(0.2 * per_class)` samples of every class go to the test split, and all
/// features are then standardised per dimension with the training statistics.
/// Training rows are ordered class by class.
pub fn make_synthetic(num_classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes < 2 || dim < 2 {
        return Err(Error::config("synthetic data needs at least 2 classes and 2 dimensions"));
    }
    if per_class == 0 {
        return Err(Error::config("per_class must be positive"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config(format!("spread must be finite and >= 0, got {spread}")));
    }
    let mut rng = Streams::new(seed).get(Purpose::SyntheticData, 0, 0);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            if num_classes <= dim {
                let mut m = vec![0.0; dim];
                m[c] = 1.0;
                m
            } else {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();

    let n_test = (0.2 * per_class as f64).round() as usize;
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        for i in 0..per_class {
            let (xs, ys) = if i < n_test {
                (&mut test_x, &mut test_y)
            } else {
                (&mut train_x, &mut train_y)
            };
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                xs.push(m + spread * noise);
            }
            ys.push(c);
        }
    }

    let n_train = train_y.len();
    for d in 0..dim {
        let mean = (0..n_train).map(|i| train_x[i * dim + d]).sum::<f64>() / n_train as f64;
        let var = (0..n_train).map(|i| (train_x[i * dim + d] - mean).powi(2)).sum::<f64>() / n_train as f64;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        for row in train_x.chunks_mut(dim).chain(test_x.chunks_mut(dim)) {
            row[d] = (row[d] - mean) * scale;
        }
    }

    let train = LabeledBatch::new(Matrix::new(n_train, dim, train_x)?, train_y, num_classes)?;
    let test = LabeledBatch::new(Matrix::new(test_y.len(), dim, test_x)?, test_y, num_classes)?;
    Dataset::new(train, test, num_classes)
}
