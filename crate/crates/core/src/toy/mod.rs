//! Desk-scale training on the unit sphere.
//!
//! Each sample owns a free, directly trainable unit embedding; each identity
//! owns a trainable unit prototype. Batches are scored with cosines, pushed
//! through one of the losses, and optimized with momentum SGD followed by
//! re-normalization.

mod dataset;
mod report;
mod train;

pub use dataset::{expected_cluster_radius, generate_dataset, GeneratedDataset, ToyDataset};
pub use report::{gradient_trajectory_report, TrajectoryReport};
pub use train::{train, SgdMomentum, TrainConfig, TrainLogRow, TrainOutcome, TrainState};
