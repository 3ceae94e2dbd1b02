//! Uncertainty sampling for training binary text classifiers with few labels.
//!
//! The crate is organised around the sampling loop: a [`classifier`] built
//! from smoothed log likelihood ratios with logistic calibration,
//! [`sampling`] strategies that choose which unlabeled documents to label
//! next, [`evaluation`] measures, and a [`harness`] that replays the whole
//! protocol against a simulated teacher.

pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod harness;
pub mod sampling;
