//! Synthetic data, client partitioning and feature-vector augmentation.

mod augment;
mod csv_io;
mod partition;
mod synthetic;

pub use augment::{strong_augment, weak_augment, Augmentation};
pub use csv_io::{read_samples_csv, write_samples_csv};
pub use partition::{partition, ClientDatasets, Heterogeneity, HiddenLabels, LabeledSet, PartitionSpec, UnlabeledSet};
pub use synthetic::{class_means, generate_synthetic, long_tailed_counts, Arrangement, Corpus, SyntheticData, SyntheticSpec};

/// One feature vector with an optional label. Used at I/O boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: Option<usize>,
}
