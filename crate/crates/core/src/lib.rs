//! Cerebrovascular reactivity and bolus arrival time mapping from BOLD fMRI.
//!
//! Two pipelines share one voxelwise GLM engine: a resting-state pipeline that
//! uses the cerebellar mean signal as its regressor, and a hypercapnic pipeline
//! that regresses on the end-tidal CO₂ envelope. Synthetic phantoms with known
//! ground truth, image-similarity and reliability metrics, and an exporter for
//! deep-learning training stacks are included.

// Negated float comparisons (`!(x > 0.0)`) are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod dlprep;
pub mod glm;
pub mod manifest;
pub mod metrics;
pub mod nifti;
pub mod pipeline;
pub mod phantom;
pub mod signal;
pub mod tables;
pub mod volume;

pub use error::{Error, Result};
