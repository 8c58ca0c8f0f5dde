//! The classical pipeline: peak-clipping baseline, Gold deconvolution,
//! peak search, window labelling and integration. Its outputs are the
//! training labels for the network stages.

mod gold;
mod peaks;
mod snip;

pub use gold::{gold_deconvolve, gold_slice, GoldParams, ResponseMatrix, GOLD_EPSILON};
pub use peaks::{
    find_peaks, label_windows, score_windows, snap_windows, windows_to_hits, SCORE_CUT,
};
pub use snip::{snip_background, snip_slice, SnipParams, SMOOTH_HALF_WIDTH};

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Hit, ScoreMap, Trace};

/// Peak search and windowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakParams {
    pub min_separation: f64,
    pub half_width: usize,
    pub score_cut: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            min_separation: 3.0,
            half_width: 7,
            score_cut: SCORE_CUT,
        }
    }
}

impl PeakParams {
    pub fn validate(&self) -> Result<()> {
        if self.half_width == 0 {
            return Err(Error::Param("half_width must be >= 1".into()));
        }
        if !(self.score_cut > 0.0 && self.score_cut < 1.0) {
            return Err(Error::Param("score_cut must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherLabels {
    pub baseline: Trace,
    pub deconvolved: Trace,
    pub score_map: ScoreMap,
    pub hits: Vec<Hit>,
}

/// The full classical chain with fixed parameters.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub snip: SnipParams,
    pub response: ResponseMatrix,
    pub gold: GoldParams,
    pub peaks: PeakParams,
}

impl Teacher {
    pub fn new(
        snip: SnipParams,
        sigma: f64,
        gold: GoldParams,
        peaks: PeakParams,
    ) -> Result<Self> {
        snip.validate()?;
        gold.validate()?;
        peaks.validate()?;
        Ok(Self {
            snip,
            response: ResponseMatrix::gaussian(sigma)?,
            gold,
            peaks,
        })
    }

    /// snip -> subtract -> gold -> find_peaks -> label_windows -> windows_to_hits.
    pub fn teach(&self, raw: &Trace) -> Result<TeacherLabels> {
        self.teach_timed(raw, &mut [Duration::ZERO; 3])
    }

    /// As [`Teacher::teach`], adding the time spent in background removal,
    /// deconvolution and peak labelling to `times`.
    pub fn teach_timed(&self, raw: &Trace, times: &mut [Duration; 3]) -> Result<TeacherLabels> {
        let t0 = Instant::now();
        let baseline = snip_background(raw, &self.snip).map_err(|e| e.in_stage("snip"))?;
        let subtracted = raw.subtract(&baseline)?;
        let t1 = Instant::now();
        let deconvolved = gold_deconvolve(&subtracted, &self.response, &self.gold)
            .map_err(|e| e.in_stage("gold"))?;
        let t2 = Instant::now();
        let centroids = find_peaks(
            deconvolved.samples(),
            self.gold.threshold,
            self.peaks.min_separation,
        );
        let score_map = label_windows(&centroids, self.peaks.half_width);
        let hits = windows_to_hits(&deconvolved, &score_map, self.peaks.score_cut);
        let t3 = Instant::now();
        times[0] += t1 - t0;
        times[1] += t2 - t1;
        times[2] += t3 - t2;
        Ok(TeacherLabels {
            baseline,
            deconvolved,
            score_map,
            hits,
        })
    }

    /// Hits only; the path timed by the benchmark.
    pub fn hits(&self, raw: &Trace) -> Result<Vec<Hit>> {
        Ok(self.teach(raw)?.hits)
    }

    pub fn teach_batch(&self, traces: &[Trace]) -> Result<Vec<TeacherLabels>> {
        traces.par_iter().map(|t| self.teach(t)).collect()
    }
}

impl Default for Teacher {
    fn default() -> Self {
        Self::new(
            SnipParams::default(),
            4.0,
            GoldParams::default(),
            PeakParams::default(),
        )
        .expect("default parameters are valid")
    }
}
