use std::collections::HashSet;

use fedwsm::nn::{LabeledBatch, Matrix};
use fedwsm::partition::*;
use fedwsm::Error;
use proptest::prelude::*;

fn balanced(classes: usize, per_class: usize) -> Dataset {
    make_synthetic(classes, 8.max(classes), per_class, 0.5, 3).unwrap()
}

fn proportions(shard: &DatasetShard, classes: usize) -> Vec<f64> {
    let counts = shard.class_counts(classes);
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

#[test]
fn near_uniform_for_huge_alpha() {
    let ds = balanced(10, 100);
    let shards = dirichlet_partition(&ds, &PartitionConfig::new(1e6, 10, 0)).unwrap();
    for s in &shards {
        let max = proportions(s, 10).into_iter().fold(0.0, f64::max);
        assert!(max < 0.15, "client {} max proportion {max}", s.client_id);
    }
}

#[test]
fn tiny_alpha_concentrates_on_two_classes() {
    let ds = balanced(10, 100);
    let mut medians = Vec::new();
    for seed in 0..100 {
        let shards = dirichlet_partition(&ds, &PartitionConfig::new(0.01, 10, seed)).unwrap();
        let mut top2: Vec<f64> = shards
            .iter()
            .map(|s| {
                let mut p = proportions(s, 10);
                p.sort_by(|a, b| b.total_cmp(a));
                p[0] + p[1]
            })
            .collect();
        top2.sort_by(f64::total_cmp);
        medians.push((top2[4] + top2[5]) / 2.0);
    }
    medians.sort_by(f64::total_cmp);
    let median = (medians[49] + medians[50]) / 2.0;
    assert!(median >= 0.8, "median top-2 share {median}");
}

#[test]
fn more_clients_than_samples() {
    let ds = balanced(2, 5);
    let err = dirichlet_partition(&ds, &PartitionConfig::new(1.0, ds.len() + 1, 0)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn invalid_alpha() {
    let ds = balanced(2, 5);
    for alpha in [0.0, -1.0, f64::NAN] {
        assert!(matches!(
            dirichlet_partition(&ds, &PartitionConfig::new(alpha, 2, 0)),
            Err(Error::Config(_))
        ));
    }
}

#[test]
fn entropy_grows_with_alpha() {
    let ds = balanced(10, 60);
    let grid = [0.01, 0.1, 0.5, 1.0, 10.0, 100.0];
    let means: Vec<f64> = grid
        .iter()
        .map(|&alpha| {
            (0..50)
                .map(|seed| {
                    let shards = dirichlet_partition(&ds, &PartitionConfig::new(alpha, 10, seed)).unwrap();
                    mean_label_entropy(&shards, 10)
                })
                .sum::<f64>()
                / 50.0
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}

#[test]
fn manifest_lists_every_client_class_pair() {
    let ds = balanced(3, 20);
    let shards = dirichlet_partition(&ds, &PartitionConfig::new(0.5, 4, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.csv");
    write_manifest(&shards, 3, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("client_id,class,count"));
    let rows: Vec<Vec<usize>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 12);
    let total: usize = rows.iter().map(|r| r[2]).sum();
    assert_eq!(total, 4 * (ds.len() / 4));
}

#[test]
fn hash_identifies_content() {
    let ds = balanced(3, 20);
    let a = dirichlet_partition(&ds, &PartitionConfig::new(0.5, 4, 1)).unwrap();
    let b = dirichlet_partition(&ds, &PartitionConfig::new(0.5, 4, 1)).unwrap();
    let c = dirichlet_partition(&ds, &PartitionConfig::new(0.5, 4, 2)).unwrap();
    assert_eq!(partition_hash(&a), partition_hash(&b));
    assert_ne!(partition_hash(&a), partition_hash(&c));
    assert_eq!(partition_hash(&a).len(), 64);
}

fn small_dataset() -> impl Strategy<Value = Dataset> {
    (2usize..6, 1usize..40, 1usize..30).prop_flat_map(|(classes, n, pad)| {
        proptest::collection::vec(0..classes, n + pad).prop_map(move |labels| {
            let n = labels.len();
            let x: Vec<f64> = (0..n * 2).map(|i| i as f64).collect();
            let train = LabeledBatch::new(Matrix::new(n, 2, x).unwrap(), labels, classes).unwrap();
            Dataset::new(train, LabeledBatch::empty(2), classes).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_invariants(
        ds in small_dataset(),
        alpha in prop_oneof![Just(0.01), Just(0.1), Just(1.0), Just(100.0)],
        k in 1usize..6,
        val_fraction in prop_oneof![Just(0.0), Just(0.1), Just(0.25)],
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= ds.len());
        let cfg = PartitionConfig { alpha, num_clients: k, seed, val_fraction };
        let m = ds.len() / k;
        let n_val = (val_fraction * m as f64).round() as usize;
        prop_assume!(n_val < m);
        let shards = dirichlet_partition(&ds, &cfg).unwrap();
        prop_assert_eq!(shards.len(), k);

        let mut seen = HashSet::new();
        for (i, s) in shards.iter().enumerate() {
            prop_assert_eq!(s.client_id, i);
            prop_assert_eq!(s.train.len() + s.val.len(), m);
            prop_assert_eq!(s.val.len(), n_val);
            prop_assert_eq!(s.n_k(), s.train.len());
            for &r in s.train_indices.iter().chain(&s.val_indices) {
                prop_assert!(seen.insert(r), "row {} assigned twice", r);
            }
            for (j, &r) in s.train_indices.iter().enumerate() {
                prop_assert_eq!(s.train.labels()[j], ds.labels()[r]);
                prop_assert_eq!(s.train.features().row(j), ds.features().row(r));
            }
            // Exact frequencies: beta_c * n equals the integer count.
            let n = s.train.len();
            for c in 0..ds.num_classes() {
                let count = s.train.labels().iter().filter(|&&y| y == c).count();
                prop_assert_eq!(s.beta.as_slice()[c], count as f64 / n as f64);
            }
        }
        prop_assert_eq!(seen.len(), k * m);

        let again = dirichlet_partition(&ds, &cfg).unwrap();
        prop_assert_eq!(partition_hash(&shards), partition_hash(&again));
    }
}
