//! Datasets and non-i.i.d. client partitioning.

pub mod dataset;
pub mod dirichlet;
pub mod idx;
pub mod tabular;

pub use dataset::{make_synthetic, Dataset};
pub use dirichlet::{
    dirichlet_partition, mean_label_entropy, partition_hash, sample_dirichlet, write_manifest, DatasetShard,
    PartitionConfig,
};
pub use idx::load_idx;
pub use tabular::load_csv;
