//! Per-client, per-timestep data streams with ground-truth concept labels.

mod concept;
mod idx;
mod schedule;
mod stream;
mod synthetic;

pub use concept::{apply_concept, ConceptId, Example, SwapTable, PRIVILEGED, UNPRIVILEGED};
pub use idx::{load_idx, load_idx_images, load_idx_labels, transform_group0_image, PixelMatrix};
pub use schedule::{build_schedule, DriftSchedule, Scenario};
pub use stream::{build_stream, privileged_count, Dataset, IdxSource, StreamGrid, TimestepBatch};
pub use synthetic::{blob_mean, generate_synthetic, SYNTHETIC_CLASSES, SYNTHETIC_FEATURES};
