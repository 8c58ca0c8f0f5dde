//! Paired timing of the classical and network pipelines, trace to hits.
//!
//! Both pipelines start from the same encoded dataset bytes, and decoding
//! is part of the measured time. Everything runs on the calling thread.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::dataset::decode_dataset;
use crate::dsp::Teacher;
use crate::error::{Error, Result};
use crate::models::Chain;
use crate::signal::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Classical,
    Cnn,
    Both,
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "cnn" => Ok(Self::Cnn),
            "both" => Ok(Self::Both),
            _ => Err(Error::Param(format!("unknown pipeline {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    /// Median over the timed repeats.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub pipeline: Pipeline,
    pub traces: usize,
    /// Wall time of each timed repeat.
    pub samples: Vec<f64>,
    pub wall_seconds: f64,
    pub traces_per_second: f64,
    pub stages: Vec<StageTime>,
    pub hits: usize,
}

impl PipelineReport {
    pub fn stage(&self, name: &str) -> Option<f64> {
        self.stages.iter().find(|s| s.stage == name).map(|s| s.seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub traces: usize,
    pub threads: usize,
    pub repeat: usize,
    pub warmup: usize,
    pub classical: Option<PipelineReport>,
    pub cnn: Option<PipelineReport>,
    /// Classical wall time over network wall time.
    pub speedup: Option<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn decode_traces(bytes: &[u8]) -> Result<Vec<Trace>> {
    Ok(decode_dataset(bytes)?
        .1
        .into_iter()
        .map(|r| r.trace)
        .collect())
}

/// One timed pass: `(wall, per-stage, hit count)`, decode first.
type Pass = (f64, Vec<f64>, usize);

fn measure(
    pipeline: Pipeline,
    names: &[&str],
    cfg: &BenchConfig,
    mut pass: impl FnMut() -> Result<Pass>,
) -> Result<PipelineReport> {
    for _ in 0..cfg.warmup {
        pass()?;
    }
    let mut walls = Vec::with_capacity(cfg.repeat);
    let mut stages = vec![Vec::with_capacity(cfg.repeat); names.len()];
    let mut hits = 0;
    for _ in 0..cfg.repeat.max(1) {
        let (wall, per_stage, h) = pass()?;
        walls.push(wall);
        for (acc, s) in stages.iter_mut().zip(per_stage) {
            acc.push(s);
        }
        hits = h;
    }
    let wall = median(&walls);
    Ok(PipelineReport {
        pipeline,
        traces: 0,
        samples: walls,
        wall_seconds: wall,
        traces_per_second: 0.0,
        stages: names
            .iter()
            .zip(&stages)
            .map(|(n, v)| StageTime {
                stage: n.to_string(),
                seconds: median(v),
            })
            .collect(),
        hits,
    })
}

fn finish(mut r: PipelineReport, traces: usize) -> PipelineReport {
    r.traces = traces;
    r.traces_per_second = traces as f64 / r.wall_seconds.max(f64::MIN_POSITIVE);
    r
}

pub fn bench_classical(bytes: &[u8], teacher: &Teacher, cfg: &BenchConfig) -> Result<PipelineReport> {
    let mut count = 0;
    let r = measure(Pipeline::Classical, &["decode", "snip", "gold", "peaks"], cfg, || {
        let start = Instant::now();
        let traces = decode_traces(bytes)?;
        let decoded = start.elapsed();
        let mut times = [Duration::ZERO; 3];
        let mut hits = 0;
        for t in &traces {
            hits += teacher.teach_timed(t, &mut times)?.hits.len();
        }
        count = traces.len();
        let mut per = vec![decoded.as_secs_f64()];
        per.extend(times.iter().map(Duration::as_secs_f64));
        Ok((start.elapsed().as_secs_f64(), per, hits))
    })?;
    Ok(finish(r, count))
}

pub fn bench_cnn(
    bytes: &[u8],
    chain: &Chain,
    score_cut: f64,
    cfg: &BenchConfig,
) -> Result<PipelineReport> {
    let mut runner = chain.runner(cfg.batch_size);
    let mut count = 0;
    let r = measure(Pipeline::Cnn, &["decode", "baseline", "deconv", "peaks"], cfg, || {
        let start = Instant::now();
        let traces = decode_traces(bytes)?;
        let decoded = start.elapsed();
        let mut times = [Duration::ZERO; 3];
        let mut hits = 0;
        for part in traces.chunks(cfg.batch_size * 8) {
            hits += runner
                .run_timed(part, score_cut, &mut times)?
                .iter()
                .map(|o| o.hits.len())
                .sum::<usize>();
        }
        count = traces.len();
        let mut per = vec![decoded.as_secs_f64()];
        per.extend(times.iter().map(Duration::as_secs_f64));
        Ok((start.elapsed().as_secs_f64(), per, hits))
    })?;
    Ok(finish(r, count))
}

/// Runs the selected pipelines over the dataset `bytes`. The chain is
/// required for `Cnn` and `Both`.
pub fn run_bench(
    bytes: &[u8],
    pipeline: Pipeline,
    teacher: &Teacher,
    chain: Option<&Chain>,
    score_cut: f64,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    let needs_chain = pipeline != Pipeline::Classical;
    if needs_chain && chain.is_none() {
        return Err(Error::Param("the cnn pipeline needs trained models".into()));
    }
    let classical = match pipeline {
        Pipeline::Classical | Pipeline::Both => Some(bench_classical(bytes, teacher, cfg)?),
        Pipeline::Cnn => None,
    };
    let cnn = match (pipeline, chain) {
        (Pipeline::Cnn | Pipeline::Both, Some(c)) => Some(bench_cnn(bytes, c, score_cut, cfg)?),
        _ => None,
    };
    let traces = classical.as_ref().or(cnn.as_ref()).map_or(0, |r| r.traces);
    let speedup = match (&classical, &cnn) {
        (Some(a), Some(b)) => Some(a.wall_seconds / b.wall_seconds.max(f64::MIN_POSITIVE)),
        _ => None,
    };
    Ok(BenchReport {
        traces,
        threads: 1,
        repeat: cfg.repeat.max(1),
        warmup: cfg.warmup,
        classical,
        cnn,
        speedup,
    })
}
