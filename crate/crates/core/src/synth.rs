//! Synthetic GET-like traces with known truth.
//!
//! A trace is a baseline (offset, slow sinusoids, optional ramp at one record
//! edge) plus shaped hit pulses plus white Gaussian noise, clamped to the ADC
//! range. The truth (pre-clamp baseline and the hit list) is returned next to
//! every trace.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::signal::{Trace, ADC_MAX, TRACE_LEN};

/// Highest oscillation frequency accepted, in cycles per record.
pub const MAX_OSC_FREQUENCY: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSide {
    First,
    Last,
}

/// Linear ramp of `height` at the record edge decaying to zero over `width`
/// buckets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeJump {
    pub side: EdgeSide,
    pub width: usize,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub amplitude: f64,
    /// Cycles per record.
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub offset: f64,
    pub oscillations: Vec<Oscillation>,
    pub edge_jump: Option<EdgeJump>,
}

impl BaselineModel {
    pub fn flat(offset: f64) -> Self {
        Self {
            offset,
            oscillations: Vec::new(),
            edge_jump: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() {
            return Err(Error::Param("baseline offset must be finite".into()));
        }
        for o in &self.oscillations {
            if !(o.amplitude >= 0.0 && o.amplitude.is_finite()) {
                return Err(Error::Param(format!("oscillation amplitude {}", o.amplitude)));
            }
            if !(0.0..=MAX_OSC_FREQUENCY).contains(&o.frequency) {
                return Err(Error::Param(format!(
                    "oscillation frequency {} outside [0, {MAX_OSC_FREQUENCY}]",
                    o.frequency
                )));
            }
        }
        if let Some(j) = &self.edge_jump {
            if j.width == 0 || j.width > TRACE_LEN || !j.height.is_finite() {
                return Err(Error::Param(format!("edge jump {j:?}")));
            }
        }
        Ok(())
    }

    pub fn value_at(&self, i: usize) -> f64 {
        let x = i as f64;
        let mut v = self.offset;
        for o in &self.oscillations {
            v += o.amplitude * (TAU * o.frequency * x / TRACE_LEN as f64 + o.phase).sin();
        }
        if let Some(j) = &self.edge_jump {
            let dist = match j.side {
                EdgeSide::First => i,
                EdgeSide::Last => TRACE_LEN - 1 - i,
            };
            if dist < j.width {
                v += j.height * (1.0 - dist as f64 / j.width as f64);
            }
        }
        v
    }

    pub fn evaluate(&self) -> Vec<f64> {
        (0..TRACE_LEN).map(|i| self.value_at(i)).collect()
    }
}

pub fn gen_baseline(model: &BaselineModel, event_id: u32, pad_id: u32) -> Result<Trace> {
    model.validate()?;
    Trace::new(event_id, pad_id, model.evaluate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitTruth {
    /// Centre of mass of the shaped pulse, in buckets.
    pub time: f64,
    pub charge: f64,
    /// Spread of the arriving charge in time, in buckets.
    pub width_sigma: f64,
}

impl HitTruth {
    fn validate(&self) -> Result<()> {
        if !(0.0..=(TRACE_LEN - 1) as f64).contains(&self.time)
            || !(self.charge > 0.0)
            || !(self.width_sigma > 0.0)
        {
            return Err(Error::Param(format!("invalid hit {self:?}")));
        }
        Ok(())
    }
}

/// Electronics response applied to each hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shaping {
    /// `(t/tau)^3 exp(3 (1 - t/tau))`, unit area, shifted so its mean is 0.
    Gamma { tau: f64 },
    /// Unit-area Gaussian.
    Gaussian { sigma: f64 },
}

impl Default for Shaping {
    fn default() -> Self {
        Shaping::Gaussian { sigma: 4.0 }
    }
}

impl Shaping {
    fn validate(&self) -> Result<()> {
        let p = match *self {
            Shaping::Gamma { tau } => tau,
            Shaping::Gaussian { sigma } => sigma,
        };
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Param(format!("shaping {self:?}")));
        }
        Ok(())
    }
}

/// Quadrature step for the hit-spread integral, in buckets.
const QUAD_STEP: f64 = 0.25;
const QUAD_PER_BUCKET: i64 = 4;

/// Adds the shaped pulse of `hit` to `out`.
pub fn render_hit(out: &mut [f64], hit: &HitTruth, shaping: &Shaping) {
    match *shaping {
        Shaping::Gaussian { sigma } => {
            let s = (sigma * sigma + hit.width_sigma * hit.width_sigma).sqrt();
            let norm = hit.charge / (s * (2.0 * PI).sqrt());
            let lo = (hit.time - 8.0 * s).floor().max(0.0) as usize;
            let hi = ((hit.time + 8.0 * s).ceil() as usize).min(out.len() - 1);
            for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let z = (i as f64 - hit.time) / s;
                *o += norm * (-0.5 * z * z).exp();
            }
        }
        Shaping::Gamma { tau } => render_gamma(out, hit, tau),
    }
}

fn render_gamma(out: &mut [f64], hit: &HitTruth, tau: f64) {
    // Gamma density with shape 4 and scale tau/3; mean 4 tau / 3.
    let theta = tau / 3.0;
    let mean = 4.0 * theta;
    let pdf = |y: f64| {
        if y <= 0.0 {
            0.0
        } else {
            y * y * y * (-y / theta).exp() / (6.0 * theta.powi(4))
        }
    };

    let w = hit.width_sigma;
    let k_max = (5.0 * w / QUAD_STEP).ceil() as i64;
    let mut weights: Vec<f64> = (-k_max..=k_max)
        .map(|k| {
            let v = k as f64 * QUAD_STEP;
            (-0.5 * v * v / (w * w)).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|g| *g /= total);

    let lo = (hit.time - mean - 5.0 * w).floor().max(0.0) as i64;
    let hi = ((hit.time - mean + 12.0 * tau + 5.0 * w).ceil() as i64).min(out.len() as i64 - 1);
    if hi < lo {
        return;
    }
    // Shaper evaluated on the fine grid y_n = n / 4 + (mean - time).
    let n_min = QUAD_PER_BUCKET * lo - k_max;
    let n_max = QUAD_PER_BUCKET * hi + k_max;
    let base = mean - hit.time;
    let table: Vec<f64> = (n_min..=n_max)
        .map(|n| pdf(base + n as f64 * QUAD_STEP))
        .collect();
    for i in lo..=hi {
        let centre = (QUAD_PER_BUCKET * i - n_min) as usize;
        // k runs from -k_max to k_max; table index = centre - k.
        let acc: f64 = weights
            .iter()
            .enumerate()
            .map(|(j, g)| g * table[centre + k_max as usize - j])
            .sum();
        out[i as usize] += hit.charge * acc;
    }
}

/// Noiseless signal of a hit list.
pub fn render_hits(hits: &[HitTruth], shaping: &Shaping) -> Vec<f64> {
    let mut out = vec![0.0; TRACE_LEN];
    for h in hits {
        render_hit(&mut out, h, shaping);
    }
    out
}

/// Distribution of random baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselinePrior {
    pub offset: [f64; 2],
    pub max_oscillations: usize,
    pub amplitude_max: f64,
    pub frequency: [f64; 2],
    pub edge_jump_probability: f64,
    pub edge_width: [usize; 2],
    pub edge_height_max: f64,
}

impl Default for BaselinePrior {
    fn default() -> Self {
        Self {
            offset: [150.0, 400.0],
            max_oscillations: 2,
            amplitude_max: 15.0,
            frequency: [0.25, 2.0],
            edge_jump_probability: 0.2,
            edge_width: [8, 24],
            edge_height_max: 40.0,
        }
    }
}

impl BaselinePrior {
    pub fn sample(&self, rng: &mut Rng) -> BaselineModel {
        let offset = rng.range(self.offset[0], self.offset[1]);
        let n = rng.below(self.max_oscillations as u64 + 1) as usize;
        let oscillations = (0..n)
            .map(|_| Oscillation {
                amplitude: rng.range(0.0, self.amplitude_max),
                frequency: rng.range(self.frequency[0], self.frequency[1]),
                phase: rng.range(0.0, TAU),
            })
            .collect();
        let edge_jump = rng.bernoulli(self.edge_jump_probability).then(|| {
            let side = if rng.bernoulli(0.5) {
                EdgeSide::First
            } else {
                EdgeSide::Last
            };
            let span = (self.edge_width[1] - self.edge_width[0]) as u64 + 1;
            EdgeJump {
                side,
                width: self.edge_width[0] + rng.below(span) as usize,
                height: rng.range(-self.edge_height_max, self.edge_height_max),
            }
        });
        BaselineModel {
            offset,
            oscillations,
            edge_jump,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub noise_sigma: f64,
    /// Inclusive range of hits per trace.
    pub hits_per_trace: [usize; 2],
    /// Probability that a hit after the first piles up on its predecessor.
    pub pileup_probability: f64,
    /// Gap between piled-up hits, in buckets.
    pub pileup_gap: [f64; 2],
    /// Minimum spacing between hits that are not piled up.
    pub min_spacing: f64,
    /// Charge range, sampled log-uniformly (ADC x bucket).
    pub charge: [f64; 2],
    pub width_sigma: [f64; 2],
    /// Hits keep this distance from the record edges.
    pub time_margin: f64,
    pub shaping: Shaping,
    pub baseline: BaselinePrior,
    /// Consecutive traces are grouped into events of this many pads.
    pub pads_per_event: u32,
    pub rng_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 5.0,
            hits_per_trace: [1, 3],
            pileup_probability: 0.3,
            pileup_gap: [4.0, 12.0],
            min_spacing: 0.0,
            charge: [1000.0, 20_000.0],
            width_sigma: [3.0, 3.5],
            time_margin: 32.0,
            shaping: Shaping::default(),
            baseline: BaselinePrior::default(),
            pads_per_event: 64,
            rng_seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Param(format!("gen config: {m}")));
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma < 0");
        }
        if !(0.0..=1.0).contains(&self.pileup_probability) {
            return bad("pileup_probability outside [0, 1]");
        }
        if self.hits_per_trace[0] > self.hits_per_trace[1] {
            return bad("hits_per_trace range reversed");
        }
        if !(self.charge[0] > 0.0 && self.charge[0] <= self.charge[1]) {
            return bad("charge range");
        }
        if !(self.width_sigma[0] > 0.0 && self.width_sigma[0] <= self.width_sigma[1]) {
            return bad("width_sigma range");
        }
        if !(self.pileup_gap[0] >= 0.0 && self.pileup_gap[0] <= self.pileup_gap[1]) {
            return bad("pileup_gap range");
        }
        if !(self.time_margin >= 0.0 && 2.0 * self.time_margin < (TRACE_LEN - 1) as f64) {
            return bad("time_margin");
        }
        if self.pads_per_event == 0 {
            return bad("pads_per_event = 0");
        }
        self.shaping.validate()
    }

    fn sample_hits(&self, rng: &mut Rng) -> Vec<HitTruth> {
        let span = (self.hits_per_trace[1] - self.hits_per_trace[0]) as u64 + 1;
        let n = self.hits_per_trace[0] + rng.below(span) as usize;
        let t_lo = self.time_margin;
        let t_hi = (TRACE_LEN - 1) as f64 - self.time_margin;
        let (ln_lo, ln_hi) = (self.charge[0].ln(), self.charge[1].ln());
        let mut hits: Vec<HitTruth> = Vec::with_capacity(n);
        for _ in 0..n {
            let charge = rng.range(ln_lo, ln_hi).exp();
            let width_sigma = rng.range(self.width_sigma[0], self.width_sigma[1]);
            let pileup = !hits.is_empty() && rng.bernoulli(self.pileup_probability);
            let time = if pileup {
                let prev = hits[hits.len() - 1].time;
                let gap = rng.range(self.pileup_gap[0], self.pileup_gap[1]);
                let t = if rng.bernoulli(0.5) { prev + gap } else { prev - gap };
                t.clamp(t_lo, t_hi)
            } else {
                // Rejection sampling for spacing; give up after a few tries.
                let mut t = rng.range(t_lo, t_hi);
                for _ in 0..64 {
                    if hits.iter().all(|h| (h.time - t).abs() >= self.min_spacing) {
                        break;
                    }
                    t = rng.range(t_lo, t_hi);
                }
                t
            };
            hits.push(HitTruth {
                time,
                charge,
                width_sigma,
            });
        }
        hits.sort_by(|a, b| a.time.total_cmp(&b.time));
        hits
    }
}

/// Generator-side ground truth for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// Baseline before noise and clamping.
    pub baseline: Vec<f64>,
    pub hits: Vec<HitTruth>,
}

/// Generates one trace from explicit truth. Noise is drawn from `rng`.
pub fn compose_trace(
    event_id: u32,
    pad_id: u32,
    model: &BaselineModel,
    hits: &[HitTruth],
    cfg: &GenConfig,
    rng: &mut Rng,
) -> Result<(Trace, TruthRecord)> {
    model.validate()?;
    for h in hits {
        h.validate()?;
    }
    let baseline = model.evaluate();
    let signal = render_hits(hits, &cfg.shaping);
    let samples = baseline
        .iter()
        .zip(&signal)
        .map(|(b, s)| {
            let noise = if cfg.noise_sigma > 0.0 {
                cfg.noise_sigma * rng.normal()
            } else {
                0.0
            };
            (b + s + noise).clamp(0.0, ADC_MAX)
        })
        .collect();
    let trace = Trace::new(event_id, pad_id, samples)?;
    Ok((
        trace,
        TruthRecord {
            baseline,
            hits: hits.to_vec(),
        },
    ))
}

/// Draws a random baseline and hit list and renders the trace.
pub fn gen_trace(
    cfg: &GenConfig,
    rng: &mut Rng,
    event_id: u32,
    pad_id: u32,
) -> Result<(Trace, TruthRecord)> {
    cfg.validate()?;
    let model = cfg.baseline.sample(rng);
    let hits = cfg.sample_hits(rng);
    compose_trace(event_id, pad_id, &model, &hits, cfg, rng)
}

/// Trace `index` of the run seeded by `cfg.rng_seed`, with its own stream.
pub fn gen_indexed(cfg: &GenConfig, index: u64) -> Result<(Trace, TruthRecord)> {
    let mut rng = Rng::stream(cfg.rng_seed, index);
    let event_id = (index / cfg.pads_per_event as u64) as u32;
    let pad_id = (index % cfg.pads_per_event as u64) as u32;
    gen_trace(cfg, &mut rng, event_id, pad_id)
}

/// Generates traces `start..start + count` in parallel, in index order.
pub fn gen_batch(cfg: &GenConfig, start: u64, count: usize) -> Result<Vec<(Trace, TruthRecord)>> {
    use rayon::prelude::*;
    cfg.validate()?;
    (start..start + count as u64)
        .into_par_iter()
        .map(|i| gen_indexed(cfg, i))
        .collect()
}

/// A straight track crossing the given pads: each pad `(pad_id, x, y)` gets
/// one hit whose time interpolates linearly between `t_start` at
/// `start` and `t_end` at `end`, by projection onto the segment.
#[allow(clippy::too_many_arguments)]
pub fn gen_track_event(
    event_id: u32,
    pads: &[(u32, f64, f64)],
    start: (f64, f64),
    end: (f64, f64),
    t_start: f64,
    t_end: f64,
    charge: f64,
    cfg: &GenConfig,
    rng: &mut Rng,
) -> Result<Vec<(Trace, TruthRecord)>> {
    cfg.validate()?;
    let (dx, dy) = (end.0 - start.0, end.1 - start.1);
    let len2 = dx * dx + dy * dy;
    if len2 <= 0.0 {
        return Err(Error::Param("degenerate track".into()));
    }
    pads.iter()
        .map(|&(pad_id, x, y)| {
            let s = (((x - start.0) * dx + (y - start.1) * dy) / len2).clamp(0.0, 1.0);
            let hit = HitTruth {
                time: t_start + s * (t_end - t_start),
                charge,
                width_sigma: 0.5 * (cfg.width_sigma[0] + cfg.width_sigma[1]),
            };
            let model = cfg.baseline.sample(rng);
            compose_trace(event_id, pad_id, &model, &[hit], cfg, rng)
        })
        .collect()
}
