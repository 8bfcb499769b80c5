//! Unsupervised domain adaptation for multi-class cardiac MR segmentation.
//!
//! A multi-task network predicts per-pixel class probabilities together with
//! a 3-D surface point cloud for each short-axis slice. Adaptation to an
//! unlabelled target domain is adversarial: discriminators align the two
//! domains on the softmax output, on its self-information (entropy) map, and
//! on the predicted point clouds, while an exact earth mover's distance
//! supervises the cloud head on the source domain.
//!
//! Companion modules provide a synthetic cardiac phantom for controlled
//! experiments, preprocessing and augmentation, evaluation metrics with
//! exact distance transforms, and agreement statistics.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod jsonf;
pub mod losses;
pub mod nets;
pub mod nn;
pub mod plots;
pub mod pointcloud;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{CoreError, Result};
