//! Vision-aided radio: decide which of the devices seen by a camera is the
//! one transmitting, from estimated channel impulse responses and bounding
//! boxes.
//!
//! The crate contains a synthetic testbed (a pilot-based OFDM uplink over a
//! multipath channel, and a camera with an object detector), the
//! preprocessing that fuses both streams into labelled instances, feature
//! extraction, two classifiers (a random forest tuned by grid search with
//! k-fold cross-validation and a small multilayer perceptron), metrics and
//! the final device association step.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod geometry;
pub mod mlp;
pub mod model_file;
pub mod radio;
pub mod rng;
pub mod vision;

pub use error::{Error, Result};
pub use fusion::{FusedInstance, Label};
