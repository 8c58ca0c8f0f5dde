use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Trace;

/// Half-width of the optional moving-average pre-smoothing.
pub const SMOOTH_HALF_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnipParams {
    /// Largest clipping half-width, in buckets.
    pub window_m: usize,
    /// Moving-average the input before clipping.
    pub smooth: bool,
}

impl Default for SnipParams {
    fn default() -> Self {
        Self {
            window_m: 16,
            smooth: true,
        }
    }
}

impl SnipParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=255).contains(&self.window_m) {
            return Err(Error::Param(format!(
                "snip window_m {} outside [1, 255]",
                self.window_m
            )));
        }
        Ok(())
    }
}

fn moving_average(v: &[f64], half: usize) -> Vec<f64> {
    let n = v.len() as isize;
    let h = half as isize;
    (0..n)
        .map(|i| {
            let s: f64 = (i - h..=i + h).map(|j| v[j.clamp(0, n - 1) as usize]).sum();
            s / (2 * h + 1) as f64
        })
        .collect()
}

/// Peak clipping on an arbitrary-length slice: for `w = 1..=m`,
/// `v[i] = min(v[i], (v[i-w] + v[i+w]) / 2)` with indices clamped to the
/// record.
pub fn snip_slice(input: &[f64], p: &SnipParams) -> Result<Vec<f64>> {
    p.validate()?;
    if input.is_empty() {
        return Ok(Vec::new());
    }
    let mut v = if p.smooth {
        moving_average(input, SMOOTH_HALF_WIDTH)
    } else {
        input.to_vec()
    };
    let n = v.len();
    let mut next = vec![0.0; n];
    for w in 1..=p.window_m {
        for (i, out) in next.iter_mut().enumerate() {
            let left = v[i.saturating_sub(w)];
            let right = v[(i + w).min(n - 1)];
            *out = v[i].min(0.5 * (left + right));
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(v)
}

pub fn snip_background(t: &Trace, p: &SnipParams) -> Result<Trace> {
    t.with_samples(snip_slice(t.samples(), p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TRACE_LEN;
    use proptest::prelude::*;

    fn raw() -> SnipParams {
        SnipParams {
            window_m: 40,
            smooth: false,
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        for smooth in [false, true] {
            let p = SnipParams { window_m: 30, smooth };
            let t = Trace::constant(0, 0, 123.0);
            let b = snip_background(&t, &p).unwrap();
            assert!(b.samples().iter().all(|&v| (v - 123.0).abs() < 1e-12));
        }
    }

    #[test]
    fn isolated_gaussian_is_clipped() {
        let s: Vec<f64> = (0..TRACE_LEN)
            .map(|i| {
                let z = (i as f64 - 250.0) / 4.0;
                100.0 + 500.0 * (-0.5 * z * z).exp()
            })
            .collect();
        let t = Trace::new(0, 0, s).unwrap();
        let b = snip_background(&t, &raw()).unwrap();
        // The true background is the straight line at 100 under the peak.
        let dev = b.samples().iter().map(|v| (v - 100.0).abs()).fold(0.0, f64::max);
        assert!(dev < 2.0, "max deviation {dev}");
    }

    #[test]
    fn slow_oscillation_is_followed() {
        use crate::synth::{BaselineModel, Oscillation};
        let m = BaselineModel {
            offset: 250.0,
            oscillations: vec![Oscillation {
                amplitude: 10.0,
                frequency: 1.0,
                phase: 0.3,
            }],
            edge_jump: None,
        };
        let truth = m.evaluate();
        let p = SnipParams {
            window_m: 16,
            smooth: false,
        };
        let b = snip_slice(&truth, &p).unwrap();
        let rms = (b.iter().zip(&truth).map(|(a, t)| (a - t).powi(2)).sum::<f64>()
            / TRACE_LEN as f64)
            .sqrt();
        assert!(rms < 1.0, "rms {rms}");
    }

    #[test]
    fn window_is_validated() {
        let p = SnipParams {
            window_m: 0,
            smooth: false,
        };
        assert!(snip_slice(&[1.0; 8], &p).is_err());
        let p = SnipParams {
            window_m: 256,
            smooth: false,
        };
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn clipping_never_rises(values in proptest::collection::vec(0.0f64..4095.0, 64), m in 1usize..40) {
            let p = SnipParams { window_m: m, smooth: false };
            let out = snip_slice(&values, &p).unwrap();
            for (o, v) in out.iter().zip(&values) {
                prop_assert!(o <= v);
            }
        }

        #[test]
        fn shift_equivariant(values in proptest::collection::vec(0.0f64..4000.0, 64), c in -500.0f64..500.0, smooth: bool) {
            let p = SnipParams { window_m: 12, smooth };
            let a = snip_slice(&values, &p).unwrap();
            let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
            let b = snip_slice(&shifted, &p).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x + c - y).abs() < 1e-9);
            }
        }
    }
}
