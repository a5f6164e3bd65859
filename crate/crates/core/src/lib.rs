//! Test-time aggregation of neural networks.
//!
//! Dataset-specific feature extractors `N_1..N_n` and an aggregated extractor
//! `N*` are trained jointly under a shared task head, with a regulariser that
//! pulls `N*`'s convolution weights towards the elementwise combination of the
//! others. After training, extractors can be merged (`N_1 ⊕ N_2`) or a dataset
//! forgotten (`(N_1 ⊕ N_2) ⊖ N_2`) by parameter arithmetic alone.
//!
//! Modules:
//! - [`tensor`]: f32 tensors with reverse-mode autodiff for the ops used here.
//! - [`model`]: architectures, the aggregable/non-aggregable parameter split.
//! - [`aggregation`]: ⊕, ⊖, the regulariser, model composition.
//! - [`data`]: IDX files, preprocessing, synthetic datasets.
//! - [`train`]: joint and baseline training, evaluation.
//! - [`checkpoint`], [`expr`], [`report`]: persistence and reporting used by the CLI.

pub mod aggregation;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod expr;
pub mod model;
pub mod params;
pub mod report;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{ParamEntry, ParamKind, ParamSet, Role};
pub use tensor::Tensor;
