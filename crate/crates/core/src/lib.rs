//! Pulse processing for active-target TPC digital signals.

pub mod bench;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod models;
pub mod nn;
pub mod pointcloud;
pub mod rng;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use signal::{Hit, PeakWindow, ScoreMap, Trace, ADC_MAX, TRACE_LEN};
