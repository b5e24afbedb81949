//! Display-recapture detection from paired RGB images and ToF depth maps.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data_model;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod representation;
pub mod spectrum;
pub mod spoof_classifier;
pub mod synth_gen;
pub mod tensor;

pub use error::{Error, Result};
