//! Trace types shared by every processing stage.
//!
//! A [`Trace`] is one digitized pad signal of [`TRACE_LEN`] time buckets.
//! Buckets are indexed from 0; centroids are real-valued bucket positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of time buckets in one record.
pub const TRACE_LEN: usize = 512;

/// Full-scale value of the 12-bit digitizer.
pub const ADC_MAX: f64 = 4095.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    event_id: u32,
    pad_id: u32,
    samples: Vec<f64>,
}

impl Trace {
    pub fn new(event_id: u32, pad_id: u32, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != TRACE_LEN {
            return Err(Error::Length {
                expected: TRACE_LEN,
                found: samples.len(),
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trace sample {i}")));
        }
        Ok(Self {
            event_id,
            pad_id,
            samples,
        })
    }

    pub fn constant(event_id: u32, pad_id: u32, value: f64) -> Self {
        Self {
            event_id,
            pad_id,
            samples: vec![value; TRACE_LEN],
        }
    }

    pub fn zeros(event_id: u32, pad_id: u32) -> Self {
        Self::constant(event_id, pad_id, 0.0)
    }

    /// Builds a trace carrying the identity of `self` with new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(self.event_id, self.pad_id, samples)
    }

    pub fn event_id(&self) -> u32 {
        self.event_id
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Sample-wise difference `self - other`.
    pub fn subtract(&self, other: &Trace) -> Result<Trace> {
        if self.event_id != other.event_id || self.pad_id != other.pad_id {
            return Err(Error::Identity(
                self.event_id,
                self.pad_id,
                other.event_id,
                other.pad_id,
            ));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Trace {
            event_id: self.event_id,
            pad_id: self.pad_id,
            samples,
        })
    }

    /// Sum of samples over the inclusive bucket range `[lo, hi]`.
    pub fn integrate(&self, lo: usize, hi: usize) -> Result<f64> {
        integrate_range(&self.samples, lo, hi)
    }

    pub fn rms(&self) -> f64 {
        let ss: f64 = self.samples.iter().map(|v| v * v).sum();
        (ss / TRACE_LEN as f64).sqrt()
    }
}

/// Sum of `samples[lo..=hi]`.
pub fn integrate_range(samples: &[f64], lo: usize, hi: usize) -> Result<f64> {
    if lo > hi || hi >= samples.len() {
        return Err(Error::Range { lo, hi });
    }
    Ok(samples[lo..=hi].iter().sum())
}

/// Per-bucket peak membership scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    scores: Vec<f64>,
}

impl ScoreMap {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() != TRACE_LEN {
            return Err(Error::Length {
                expected: TRACE_LEN,
                found: scores.len(),
            });
        }
        if let Some(i) = scores
            .iter()
            .position(|s| !(0.0..=1.0).contains(s))
        {
            return Err(Error::Param(format!(
                "score {} at bucket {i} outside [0, 1]",
                scores[i]
            )));
        }
        Ok(Self { scores })
    }

    pub fn zeros() -> Self {
        Self {
            scores: vec![0.0; TRACE_LEN],
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Contiguous runs of buckets with score strictly above `cut`, as
    /// inclusive `(lo, hi)` pairs.
    pub fn runs_above(&self, cut: f64) -> Vec<(usize, usize)> {
        runs_above(&self.scores, cut)
    }
}

pub(crate) fn runs_above(scores: &[f64], cut: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &s) in scores.iter().enumerate() {
        match (s > cut, start) {
            (true, None) => start = Some(i),
            (false, Some(lo)) => {
                runs.push((lo, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(lo) = start {
        runs.push((lo, scores.len() - 1));
    }
    runs
}

/// A segment of a trace holding one peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakWindow {
    pub lo: usize,
    pub hi: usize,
    pub centroid: f64,
    pub charge: f64,
}

/// One reconstructed hit on a pad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub pad_id: u32,
    pub time: f64,
    pub charge: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace_of(values: &[f64]) -> Trace {
        let mut s = vec![0.0; TRACE_LEN];
        s[..values.len()].copy_from_slice(values);
        Trace::new(1, 2, s).unwrap()
    }

    #[test]
    fn subtract_equal_traces_is_zero() {
        let a = Trace::constant(3, 7, 5.0);
        let d = a.subtract(&a).unwrap();
        assert!(d.samples().iter().all(|&v| v == 0.0));
        assert_eq!((d.event_id(), d.pad_id()), (3, 7));
    }

    #[test]
    fn short_trace_is_rejected() {
        let err = Trace::new(0, 0, vec![10.0, 12.0]).unwrap_err();
        assert!(matches!(err, Error::Length { expected: 512, found: 2 }));
    }

    #[test]
    fn subtract_rejects_other_pad() {
        let a = Trace::constant(0, 1, 5.0);
        let b = Trace::constant(0, 2, 5.0);
        assert!(matches!(a.subtract(&b), Err(Error::Identity(..))));
    }

    #[test]
    fn non_finite_sample_is_rejected() {
        let mut s = vec![0.0; TRACE_LEN];
        s[40] = f64::NAN;
        assert!(matches!(Trace::new(0, 0, s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn integrate_examples() {
        let mut s = vec![0.0; TRACE_LEN];
        s[100] = 1.0;
        s[101] = 2.0;
        s[102] = 3.0;
        let t = Trace::new(0, 0, s).unwrap();
        assert_eq!(t.integrate(100, 102).unwrap(), 6.0);
        assert_eq!(t.integrate(101, 101).unwrap(), 2.0);
        assert!(matches!(t.integrate(500, 512), Err(Error::Range { .. })));
        assert!(matches!(t.integrate(10, 9), Err(Error::Range { .. })));
    }

    #[test]
    fn integrate_gaussian_three_sigma() {
        // 0.9973 is the mass of a normal within +-3 sigma; the sampled sum
        // of a unit-area Gaussian with sigma = 4 agrees closely.
        let sigma = 4.0;
        let mu = 256.0;
        let s: Vec<f64> = (0..TRACE_LEN)
            .map(|i| {
                let z = (i as f64 - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        let t = trace_of(&[]).with_samples(s).unwrap();
        let q = t.integrate(244, 268).unwrap();
        assert!((q - 0.9973).abs() < 0.01, "{q}");
    }

    #[test]
    fn runs_respect_strict_cut() {
        let mut s = vec![0.0; TRACE_LEN];
        s[10..14].copy_from_slice(&[0.49, 0.51, 0.51, 0.49]);
        s[510] = 0.9;
        s[511] = 0.9;
        let m = ScoreMap::new(s).unwrap();
        assert_eq!(m.runs_above(0.5), vec![(11, 12), (510, 511)]);
        assert!(ScoreMap::new(vec![1.5; TRACE_LEN]).is_err());
    }

    proptest! {
        #[test]
        fn integrate_is_additive(
            values in proptest::collection::vec(-1000.0f64..1000.0, TRACE_LEN),
            a in 0usize..TRACE_LEN, b in 0usize..TRACE_LEN, c in 0usize..TRACE_LEN,
        ) {
            let mut idx = [a, b, c];
            idx.sort_unstable();
            let [lo, m, hi] = idx;
            prop_assume!(m < hi);
            let t = Trace::new(0, 0, values).unwrap();
            let whole = t.integrate(lo, hi).unwrap();
            let parts = t.integrate(lo, m).unwrap() + t.integrate(m + 1, hi).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
        }

        #[test]
        fn subtract_self_is_zero(values in proptest::collection::vec(0.0f64..4095.0, TRACE_LEN)) {
            let t = Trace::new(9, 9, values).unwrap();
            prop_assert!(t.subtract(&t).unwrap().samples().iter().all(|&v| v == 0.0));
        }
    }
}
