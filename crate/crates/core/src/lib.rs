//! Influence analysis for questionnaire rating profiles.
//!
//! The pipeline: ingest or synthesize a cohort of respondents (20 ratings
//! plus background answers each), partition it by a background question,
//! run the nonparametric test battery per expression statement, render each
//! profile as a 25x20 grayscale image, train a small convolutional network
//! to recover the partition from the images, and report validation accuracy
//! against the pure-chance baseline next to the significance pattern.

pub mod cli;
pub mod dataset;
pub mod encoder;
pub mod grouping;
pub mod influence;
pub mod nn;
pub mod seed;
pub mod special;
pub mod stats;
pub mod trainer;

pub use cli::run;
