//! Apparent-age estimation with an ensemble of shifted age-group classifiers.
//!
//! Ages are encoded into 34 three-year groups under three grid offsets. Each
//! classifier's probability vector is decoded by a top-k expected value over
//! group indices, the three scores are summed into an age, and predictions
//! are scored with the epsilon-error against annotator mean and spread.

pub mod agecore;
pub mod dataset;
mod error;
pub mod numfmt;
pub mod raster;
pub mod report;
pub mod synth;
pub mod toymodel;

pub use crate::agecore::{
    decode_topk, encode_age, epsilon_error, fuse, mean_epsilon, AgeEstimate, GroupingScheme,
    ModelScore, ProbVector,
};
pub use crate::error::{Error, Result};
