//! Quality assessment for segmentation labels.
//!
//! The crate predicts the Dice similarity of a candidate mask from an
//! (image, mask, class-text) triple, trains that predictor on synthetically
//! degraded labels with a compositional MSE + optimal-pair ranking loss, and
//! applies the predictions to dataset benchmarking and data-efficient sample
//! selection.

pub mod assignment;
pub mod dataset;
pub mod degrade;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod nifti;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod selection;
pub mod toytask;
pub mod training;
pub mod volume;
