//! Run configuration: one JSON file with a section per subsystem. Missing
//! sections and fields take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{GoldParams, PeakParams, SnipParams, Teacher};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::synth::GenConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoldSection {
    #[serde(flatten)]
    pub params: GoldParams,
    /// Width of the Gaussian response used by the deconvolution, in buckets.
    pub response_sigma: f64,
}

impl Default for GoldSection {
    fn default() -> Self {
        Self {
            params: GoldParams::default(),
            response_sigma: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub repeat: usize,
    /// Untimed passes before the timed ones.
    pub warmup: usize,
    /// Traces per network batch in the CNN chain.
    pub batch_size: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repeat: 5,
            warmup: 1,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gen: GenConfig,
    pub snip: SnipParams,
    pub gold: GoldSection,
    pub peaks: PeakParams,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.teacher()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Param("train: epochs and batch_size must be >= 1".into()));
        }
        if self.bench.repeat == 0 || self.bench.batch_size == 0 {
            return Err(Error::Param("bench: repeat and batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn teacher(&self) -> Result<Teacher> {
        Teacher::new(self.snip, self.gold.response_sigma, self.gold.params, self.peaks)
    }
}
