//! The three network stages, their training data, metrics and the chained
//! inference path.
//!
//! Inputs are divided by [`INPUT_SCALE`] before entering a network.
//! Regression targets use the same scale and outputs are multiplied back;
//! the score-map target of the peak stage is left as is.

use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dsp::{score_windows, snap_windows, windows_to_hits, PeakParams, TeacherLabels};
use crate::error::{Error, Result};
use crate::nn::{
    load_model, save_model, train, Dataset, LayerSpec, Loss, Network, Padding, Shape, Tape,
    TrainConfig, TrainReport,
};
use crate::signal::{runs_above, Hit, ScoreMap, Trace, TRACE_LEN};

pub const INPUT_SCALE: f64 = 4096.0;
pub const STAGE_INPUT: Shape = Shape::new(1, TRACE_LEN);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Baseline,
    #[serde(rename = "deconv")]
    Deconvolution,
    Peaks,
}

impl StageKind {
    pub const ALL: [StageKind; 3] = [StageKind::Baseline, StageKind::Deconvolution, StageKind::Peaks];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::Baseline => "baseline",
            StageKind::Deconvolution => "deconv",
            StageKind::Peaks => "peaks",
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            StageKind::Peaks => Loss::Bce,
            _ => Loss::Mse,
        }
    }

    /// Multiplier from network output to physical units.
    pub fn output_scale(self) -> f64 {
        match self {
            StageKind::Peaks => 1.0,
            _ => INPUT_SCALE,
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let conv = |kernel_size, filters, padding| Conv1d {
            filters,
            kernel_size,
            padding,
        };
        let dense = Dense { units: TRACE_LEN };
        match self {
            StageKind::Baseline => vec![
                conv(17, 32, Padding::Same),
                Relu,
                MaxPoolChannel { pool: 16 },
                conv(17, 2, Padding::Same),
                Relu,
                Flatten,
                dense,
            ],
            StageKind::Deconvolution => vec![
                conv(19, 32, Padding::Valid),
                Relu,
                MaxPoolChannel { pool: 16 },
                Flatten,
                dense,
            ],
            StageKind::Peaks => vec![
                conv(21, 32, Padding::Same),
                Relu,
                MaxPoolChannel { pool: 16 },
                Flatten,
                dense,
                Sigmoid,
            ],
        }
    }

    /// Network input and target for one labelled trace.
    pub fn example(self, raw: &[f64], labels: &StageLabels) -> (Vec<f64>, Vec<f64>) {
        let scaled = |v: &[f64]| v.iter().map(|x| x / INPUT_SCALE).collect::<Vec<_>>();
        match self {
            StageKind::Baseline => (scaled(raw), scaled(&labels.baseline)),
            StageKind::Deconvolution => {
                let sub: Vec<f64> = raw.iter().zip(&labels.baseline).map(|(r, b)| r - b).collect();
                (scaled(&sub), scaled(&labels.deconvolved))
            }
            StageKind::Peaks => (scaled(&labels.deconvolved), labels.scores.clone()),
        }
    }

    /// The teacher product this stage is trained to reproduce.
    pub fn teacher_target<'a>(self, labels: &'a StageLabels) -> &'a [f64] {
        match self {
            StageKind::Baseline => &labels.baseline,
            StageKind::Deconvolution => &labels.deconvolved,
            StageKind::Peaks => &labels.scores,
        }
    }
}

impl std::fmt::Display for StageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(StageKind::Baseline),
            "deconv" | "deconvolution" => Ok(StageKind::Deconvolution),
            "peaks" => Ok(StageKind::Peaks),
            _ => Err(Error::Param(format!("unknown stage {s:?}"))),
        }
    }
}

/// Teacher outputs for one trace as plain sample vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLabels {
    pub baseline: Vec<f64>,
    pub deconvolved: Vec<f64>,
    pub scores: Vec<f64>,
}

impl From<&TeacherLabels> for StageLabels {
    fn from(t: &TeacherLabels) -> Self {
        Self {
            baseline: t.baseline.samples().to_vec(),
            deconvolved: t.deconvolved.samples().to_vec(),
            scores: t.score_map.scores().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub kind: StageKind,
    pub network: Network,
}

pub fn build_stage(kind: StageKind, seed: u64) -> StageModel {
    let network = Network::build(STAGE_INPUT, &kind.layers(), seed)
        .expect("stage architectures are consistent");
    StageModel { kind, network }
}

impl StageModel {
    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    fn check(&self) -> Result<()> {
        if self.network.input_shape() != STAGE_INPUT
            || self.network.output_shape() != Shape::new(TRACE_LEN, 1)
        {
            return Err(Error::Shape(format!(
                "{} model maps {} to {}, expected {} to {}x1",
                self.kind,
                self.network.input_shape(),
                self.network.output_shape(),
                STAGE_INPUT,
                TRACE_LEN
            )));
        }
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        json!({
            "stage": self.kind,
            "input_scale": INPUT_SCALE,
            "output_scale": self.kind.output_scale(),
            "params": self.param_count(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(path, &self.network, &self.metadata())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (network, meta) = load_model(path)?;
        let kind: StageKind = meta
            .get("stage")
            .cloned()
            .map(serde_json::from_value)
            .transpose()?
            .ok_or_else(|| Error::Format("model metadata has no stage".into()))?;
        let scale = meta.get("input_scale").and_then(|v| v.as_f64());
        if scale != Some(INPUT_SCALE) {
            return Err(Error::Format(format!("model input scale {scale:?}")));
        }
        let model = Self { kind, network };
        model.check()?;
        Ok(model)
    }

    /// Output in physical units for network inputs stored back to back.
    pub fn predict_batch(&self, tape: &mut Tape, inputs: &[f64]) -> Result<Vec<f64>> {
        self.network
            .run(tape, inputs)
            .map_err(|e| e.in_stage(self.kind.name()))?;
        let s = self.kind.output_scale();
        Ok(tape.output().iter().map(|v| v * s).collect())
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict_batch(&mut Tape::new(&self.network, 1), input)
    }
}

/// Training pairs of one stage from raw traces and teacher labels.
pub fn stage_dataset<'a>(
    kind: StageKind,
    items: impl IntoIterator<Item = (&'a [f64], &'a StageLabels)>,
) -> Result<Dataset> {
    let mut d = Dataset::new(STAGE_INPUT, TRACE_LEN);
    for (raw, labels) in items {
        let (x, y) = kind.example(raw, labels);
        d.push(&x, &y)?;
    }
    Ok(d)
}

pub fn train_stage(
    kind: StageKind,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&crate::nn::EpochRecord),
) -> Result<(StageModel, TrainReport)> {
    let mut model = build_stage(kind, cfg.seed);
    let report = train(&mut model.network, train_set, val_set, kind.loss(), cfg, on_epoch)
        .map_err(|e| e.in_stage(kind.name()))?;
    Ok((model, report))
}

/// Per-stage quality numbers; fields that do not apply to a stage are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub stage: StageKind,
    pub traces: usize,
    /// Median over traces of `|pred - teacher|_2 / |teacher|_2`.
    pub rel_error_median: Option<f64>,
    /// Traces left out of the median because `|teacher|_2 < 1`.
    pub rel_error_skipped: usize,
    pub detection_accuracy: Option<f64>,
    pub centroid_rms: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub truth_windows: usize,
    pub missed_windows: usize,
}

/// A prediction/teacher pair for one trace, in physical units.
pub struct EvalItem<'a> {
    pub prediction: &'a [f64],
    pub teacher: &'a [f64],
    /// Signal used to place window centroids (the peak-stage input).
    pub signal: &'a [f64],
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

pub fn evaluate_items<'a>(
    kind: StageKind,
    items: impl IntoIterator<Item = EvalItem<'a>>,
    score_cut: f64,
) -> Result<EvalMetrics> {
    let mut m = EvalMetrics {
        stage: kind,
        traces: 0,
        rel_error_median: None,
        rel_error_skipped: 0,
        detection_accuracy: None,
        centroid_rms: None,
        false_positive_rate: None,
        truth_windows: 0,
        missed_windows: 0,
    };
    let mut rel = Vec::new();
    let (mut sq, mut matched, mut false_pos) = (0.0, 0usize, 0usize);
    for item in items {
        m.traces += 1;
        match kind {
            StageKind::Baseline | StageKind::Deconvolution => {
                let norm = item.teacher.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1.0 {
                    m.rel_error_skipped += 1;
                    continue;
                }
                let diff = item
                    .prediction
                    .iter()
                    .zip(item.teacher)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    .sqrt();
                rel.push(diff / norm);
            }
            StageKind::Peaks => {
                let truth = score_windows(item.signal, item.teacher, score_cut);
                let truth_runs = runs_above(item.teacher, score_cut);
                let pred = score_windows(item.signal, item.prediction, score_cut);
                let pred_runs = runs_above(item.prediction, score_cut);
                m.truth_windows += truth_runs.len();
                for &run in &truth_runs {
                    let hit: Vec<_> = pred
                        .iter()
                        .filter(|w| overlaps(run, (w.lo, w.hi)))
                        .collect();
                    if !pred_runs.iter().any(|&p| overlaps(run, p)) {
                        m.missed_windows += 1;
                        continue;
                    }
                    let t = truth.iter().find(|w| (w.lo, w.hi) == run);
                    let best = t.and_then(|t| {
                        hit.iter()
                            .map(|w| w.centroid - t.centroid)
                            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                    });
                    if let Some(d) = best {
                        sq += d * d;
                        matched += 1;
                    }
                }
                false_pos += pred_runs
                    .iter()
                    .filter(|&&p| !truth_runs.iter().any(|&t| overlaps(t, p)))
                    .count();
            }
        }
    }
    if m.traces == 0 {
        return Err(Error::Empty("evaluation set"));
    }
    if kind == StageKind::Peaks {
        m.detection_accuracy = Some(if m.truth_windows == 0 {
            1.0
        } else {
            (m.truth_windows - m.missed_windows) as f64 / m.truth_windows as f64
        });
        m.centroid_rms = Some(if matched == 0 { 0.0 } else { (sq / matched as f64).sqrt() });
        m.false_positive_rate = Some(false_pos as f64 / m.traces as f64);
    } else {
        m.rel_error_median = median(rel);
    }
    Ok(m)
}

/// Runs `model` over the stage inputs of `data` and scores it against the
/// teacher targets.
pub fn evaluate_stage(model: &StageModel, data: &Dataset, score_cut: f64) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let kind = model.kind;
    let mut tape = Tape::new(&model.network, 1);
    let mut preds = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        preds.push(model.predict_batch(&mut tape, data.input(i))?);
    }
    let ts = kind.output_scale();
    let teachers: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.target(i).iter().map(|v| v * ts).collect())
        .collect();
    let signals: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.input(i).iter().map(|v| v * INPUT_SCALE).collect())
        .collect();
    evaluate_items(
        kind,
        (0..data.len()).map(|i| EvalItem {
            prediction: &preds[i],
            teacher: &teachers[i],
            signal: &signals[i],
        }),
        score_cut,
    )
}

/// The three trained stages chained for inference.
#[derive(Debug, Clone)]
pub struct Chain {
    pub baseline: StageModel,
    pub deconv: StageModel,
    pub peaks: StageModel,
    /// Half-width of the teacher's labelling window; short score runs are
    /// widened to it before integration (see [`snap_windows`]).
    pub half_width: usize,
}

/// Intermediate products of the chain for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub baseline: Vec<f64>,
    pub deconvolved: Vec<f64>,
    pub scores: Vec<f64>,
    pub hits: Vec<Hit>,
}

pub const MODEL_FILES: [(StageKind, &str); 3] = [
    (StageKind::Baseline, "baseline.tpnn"),
    (StageKind::Deconvolution, "deconv.tpnn"),
    (StageKind::Peaks, "peaks.tpnn"),
];

impl Chain {
    pub fn new(baseline: StageModel, deconv: StageModel, peaks: StageModel) -> Result<Self> {
        for (m, k) in [
            (&baseline, StageKind::Baseline),
            (&deconv, StageKind::Deconvolution),
            (&peaks, StageKind::Peaks),
        ] {
            if m.kind != k {
                return Err(Error::Param(format!("{} model given as {k}", m.kind)));
            }
            m.check()?;
        }
        Ok(Self {
            baseline,
            deconv,
            peaks,
            half_width: PeakParams::default().half_width,
        })
    }

    pub fn with_half_width(mut self, half_width: usize) -> Self {
        self.half_width = half_width;
        self
    }

    /// Loads `baseline.tpnn`, `deconv.tpnn` and `peaks.tpnn` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut loaded = Vec::new();
        for (_, file) in MODEL_FILES {
            let path = dir.join(file);
            if !path.is_file() {
                return Err(Error::file(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "model file missing"),
                ));
            }
            loaded.push(StageModel::load(path)?);
        }
        let mut it = loaded.into_iter();
        let (b, d, p) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        Self::new(b, d, p)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        for (m, (_, file)) in [&self.baseline, &self.deconv, &self.peaks]
            .into_iter()
            .zip(MODEL_FILES)
        {
            m.save(dir.join(file))?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.baseline.param_count() + self.deconv.param_count() + self.peaks.param_count()
    }

    pub fn runner(&self, batch: usize) -> ChainRunner<'_> {
        ChainRunner::new(self, batch)
    }

    pub fn infer(&self, raw: &Trace, score_cut: f64) -> Result<Vec<Hit>> {
        Ok(self.runner(1).run(std::slice::from_ref(raw), score_cut)?.remove(0).hits)
    }
}

/// Reusable buffers for running the chain over batches of traces.
pub struct ChainRunner<'a> {
    chain: &'a Chain,
    batch: usize,
    tapes: [Tape; 3],
    tail: Option<(usize, [Tape; 3])>,
}

impl<'a> ChainRunner<'a> {
    fn new(chain: &'a Chain, batch: usize) -> Self {
        let batch = batch.max(1);
        Self {
            chain,
            batch,
            tapes: Self::tapes(chain, batch),
            tail: None,
        }
    }

    fn tapes(chain: &Chain, n: usize) -> [Tape; 3] {
        [
            Tape::new(&chain.baseline.network, n),
            Tape::new(&chain.deconv.network, n),
            Tape::new(&chain.peaks.network, n),
        ]
    }

    /// raw -> baseline net -> subtract -> deconvolution net -> peak net ->
    /// snapped windows on the deconvolved output.
    pub fn run(&mut self, traces: &[Trace], score_cut: f64) -> Result<Vec<ChainOutput>> {
        self.run_timed(traces, score_cut, &mut [Duration::ZERO; 3])
    }

    /// As [`ChainRunner::run`], adding the time spent in each stage (peak
    /// windowing counts towards the last) to `times`.
    pub fn run_timed(
        &mut self,
        traces: &[Trace],
        score_cut: f64,
        times: &mut [Duration; 3],
    ) -> Result<Vec<ChainOutput>> {
        let mut out = Vec::with_capacity(traces.len());
        for part in traces.chunks(self.batch) {
            let n = part.len();
            let chain = self.chain;
            let tapes = if n == self.batch {
                &mut self.tapes
            } else {
                if self.tail.as_ref().map(|t| t.0) != Some(n) {
                    self.tail = Some((n, Self::tapes(chain, n)));
                }
                &mut self.tail.as_mut().expect("just set").1
            };
            let [tb, td, tp] = tapes;

            let t0 = Instant::now();
            let mut x: Vec<f64> = part
                .iter()
                .flat_map(|t| t.samples().iter().map(|v| v / INPUT_SCALE))
                .collect();
            let baseline = chain.baseline.predict_batch(tb, &x)?;
            for (i, v) in x.iter_mut().enumerate() {
                let raw = part[i / TRACE_LEN].samples()[i % TRACE_LEN];
                *v = (raw - baseline[i]) / INPUT_SCALE;
            }
            let t1 = Instant::now();
            let deconvolved = chain.deconv.predict_batch(td, &x)?;
            for (v, d) in x.iter_mut().zip(&deconvolved) {
                *v = d / INPUT_SCALE;
            }
            let t2 = Instant::now();
            let scores = chain.peaks.predict_batch(tp, &x)?;

            for (k, raw) in part.iter().enumerate() {
                let span = k * TRACE_LEN..(k + 1) * TRACE_LEN;
                let d = raw.with_samples(deconvolved[span.clone()].to_vec())?;
                let s: Vec<f64> = scores[span.clone()].iter().map(|v| v.clamp(0.0, 1.0)).collect();
                let map = ScoreMap::new(s)?;
                let windows = snap_windows(&map, score_cut, chain.half_width);
                let hits = windows_to_hits(&d, &windows, 0.5);
                out.push(ChainOutput {
                    baseline: baseline[span].to_vec(),
                    deconvolved: d.into_samples(),
                    scores: map.scores().to_vec(),
                    hits,
                });
            }
            let t3 = Instant::now();
            times[0] += t1 - t0;
            times[1] += t2 - t1;
            times[2] += t3 - t2;
        }
        Ok(out)
    }
}
