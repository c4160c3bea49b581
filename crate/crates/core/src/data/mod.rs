//! Synthetic fingerprint datasets, image IO, normalization and the
//! robustness processing operators.

pub mod dataset;
pub mod ppm;
pub mod process;
pub mod stats;
pub mod synth;

pub use dataset::{generate, load_dataset, read_manifest, synth_dataset, Dataset, Manifest, Sample, Truth};
pub use process::{process_image, ProcessingOp};
pub use stats::{compute_stats, NormStats};
pub use synth::{ClassSpec, FingerprintKind, Preset, Role, Split, SplitCounts, SynthConfig};
