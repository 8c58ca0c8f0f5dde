//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs the full desk-scale protocol, including 60-epoch training of all
//! three stages on 16k traces, so expect it to take the better part of an
//! hour on one core. `ACCEPTANCE_ONLY=1,2,5` restricts the run to the
//! listed criteria (training-based criteria 6-10 share their models).
//! `ACCEPTANCE_STRICT=1` turns any FAIL into a nonzero exit.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use tpcnet::bench::{run_bench, Pipeline};
use tpcnet::config::BenchConfig;
use tpcnet::dataset::{decode_dataset, encode_dataset, Record, RecordLabels};
use tpcnet::dsp::{gold_slice, snip_background, GoldParams, ResponseMatrix, SnipParams, Teacher};
use tpcnet::models::{
    build_stage, evaluate_stage, stage_dataset, train_stage, Chain, StageKind, StageLabels,
    StageModel,
};
use tpcnet::nn::{gradient_check, LayerSpec, Loss, Network, Padding, Shape, TrainConfig, TrainReport};
use tpcnet::rng::Rng;
use tpcnet::synth::{
    compose_trace, gen_batch, render_hit, BaselineModel, GenConfig, HitTruth, Oscillation,
};
use tpcnet::{Hit, Trace, TRACE_LEN};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn wanted(only: &Option<Vec<u32>>, id: u32) -> bool {
    only.as_ref().map_or(true, |v| v.contains(&id))
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();

    type Check = fn(&mut Shared) -> Outcome;
    let criteria: [(u32, &str, Check); 11] = [
        (1, "gold positivity and integral conservation", c1_gold_conservation),
        (2, "gold matches explicit-matrix oracle", c2_gold_oracle),
        (3, "snip baseline fidelity", c3_snip_fidelity),
        (4, "finite-difference gradients", c4_gradients),
        (5, "trainable parameter count", c5_param_count),
        (6, "desk-scale baseline stage", c6_baseline_stage),
        (7, "desk-scale deconvolution stage", c7_deconv_stage),
        (8, "desk-scale peak stage", c8_peak_stage),
        (9, "chain consistency with teacher", c9_chain),
        (10, "cnn chain outpaces classical pipeline", c10_bench),
        (11, "determinism of gen/teach/train/infer", c11_determinism),
    ];

    let mut shared = Shared::default();
    let mut failed = 0;
    let mut lines = Vec::new();
    for (id, name, check) in criteria {
        if !wanted(&only, id) {
            continue;
        }
        let start = Instant::now();
        let r = check(&mut shared);
        let line = format!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if r.pass { "PASS" } else { "FAIL" },
            id,
            r.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        failed += usize::from(!r.pass);
        lines.push(line);
    }
    println!("\nacceptance summary: {} passed, {failed} failed", lines.len() - failed);
    for l in &lines {
        println!("{l}");
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1 to 3

fn c1_gold_conservation(_: &mut Shared) -> Outcome {
    let cfg = GenConfig {
        noise_sigma: 0.0,
        rng_seed: 101,
        ..GenConfig::default()
    };
    let a = ResponseMatrix::gaussian(4.0).unwrap();
    let p = GoldParams::default();
    let start = Instant::now();
    let (mut worst, mut min_x) = (0.0f64, f64::INFINITY);
    for (trace, truth) in gen_batch(&cfg, 0, 1000).unwrap() {
        let y: Vec<f64> = trace
            .samples()
            .iter()
            .zip(&truth.baseline)
            .map(|(s, b)| s - b)
            .collect();
        let x = gold_slice(&y, &a, &p).unwrap();
        min_x = x.iter().copied().fold(min_x, f64::min);
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        worst = worst.max((sx - sy).abs() / sy);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        min_x >= 0.0 && worst < 1e-3 && secs < 30.0,
        format!("min x {min_x:.3e}, worst |sum x - sum y|/sum y {worst:.3e} (< 1e-3), {secs:.1} s (< 30)"),
    )
}

/// Gold iterations written out with an explicit 16 x 16 matrix.
fn dense_gold(y: &[f64], a: &ResponseMatrix, p: &GoldParams) -> Vec<f64> {
    let n = y.len();
    let h = a.half_width() as isize;
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        for off in -h..=h {
            let j = (i as isize - off).clamp(0, n as isize - 1) as usize;
            row[j] += a.kernel()[(off + h) as usize];
        }
    }
    let at = |v: &[f64]| -> Vec<f64> { (0..n).map(|j| (0..n).map(|i| m[i][j] * v[i]).sum()).collect() };
    let ax = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| m[i][j] * v[j]).sum()).collect() };
    let y: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let aty = at(&y);
    let mut x: Vec<f64> = aty.iter().map(|v| v.max(1e-10)).collect();
    for round in 0..=p.boosting_rounds {
        for _ in 0..p.iterations {
            let den = at(&ax(&x));
            for i in 0..n {
                x[i] *= aty[i] / den[i].max(1e-10);
            }
        }
        if round < p.boosting_rounds {
            x.iter_mut().for_each(|v| *v = v.powf(p.boost_exponent));
        }
    }
    x
}

fn c2_gold_oracle(_: &mut Shared) -> Outcome {
    let mut rng = Rng::new(202);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = ResponseMatrix::gaussian(rng.range(0.6, 3.5)).unwrap();
        let p = GoldParams {
            iterations: 1 + rng.below(200) as usize,
            boosting_rounds: rng.below(3) as usize,
            boost_exponent: rng.range(1.0, 1.5),
            ..GoldParams::default()
        };
        let y: Vec<f64> = (0..16).map(|_| rng.range(-5.0, 100.0)).collect();
        let fast = gold_slice(&y, &a, &p).unwrap();
        let slow = dense_gold(&y, &a, &p);
        let scale = slow.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = fast
            .iter()
            .zip(&slow)
            .map(|(f, s)| (f - s).abs())
            .fold(0.0, f64::max)
            / scale;
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 5.0,
        format!("worst relative deviation {worst:.2e} (<= 1e-10) over 100 cases, {secs:.2} s (< 5)"),
    )
}

fn c3_snip_fidelity(_: &mut Shared) -> Outcome {
    let cfg = GenConfig::default();
    let snip = SnipParams::default();
    let mut rng = Rng::new(303);
    let (mut sq, mut count) = (0.0, 0usize);
    let (mut peaks, mut absorbed, mut worst_kept) = (0usize, 0usize, f64::INFINITY);
    for i in 0..1000u32 {
        let oscillations = (0..1 + rng.below(2))
            .map(|_| Oscillation {
                amplitude: rng.range(2.0, 15.0),
                frequency: rng.range(0.25, 2.0),
                phase: rng.range(0.0, std::f64::consts::TAU),
            })
            .collect();
        let model = BaselineModel {
            offset: rng.range(150.0, 400.0),
            oscillations,
            edge_jump: None,
        };
        // Isolated peaks: at most three, at least 60 buckets apart,
        // amplitudes from 10 channels up.
        let n = 1 + rng.below(3) as usize;
        let mut hits: Vec<HitTruth> = Vec::new();
        while hits.len() < n {
            let time = rng.range(40.0, 471.0);
            if hits.iter().all(|h| (h.time - time).abs() >= 60.0) {
                let width_sigma = rng.range(3.0, 3.5);
                let amp = (rng.range(10f64.ln(), 400f64.ln())).exp();
                let sd = (16.0 + width_sigma * width_sigma).sqrt();
                hits.push(HitTruth {
                    time,
                    charge: amp * sd * (std::f64::consts::TAU).sqrt(),
                    width_sigma,
                });
            }
        }
        let (trace, truth) = compose_trace(0, i, &model, &hits, &cfg, &mut rng).unwrap();
        let est = snip_background(&trace, &snip).unwrap();
        let err: Vec<f64> = est
            .samples()
            .iter()
            .zip(&truth.baseline)
            .map(|(e, b)| e - b)
            .collect();
        sq += err.iter().map(|e| e * e).sum::<f64>();
        count += err.len();
        for h in &hits {
            let mut pulse = vec![0.0; TRACE_LEN];
            render_hit(&mut pulse, h, &cfg.shaping);
            let (apex, &amp) = pulse
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            if amp < 10.0 {
                continue;
            }
            peaks += 1;
            let kept = (amp - err[apex]) / amp;
            worst_kept = worst_kept.min(kept);
            if kept < 0.8 {
                absorbed += 1;
            }
        }
    }
    let rms = (sq / count as f64).sqrt();
    outcome(
        rms <= 5.0 && absorbed == 0,
        format!(
            "RMS(snip - true baseline) {rms:.2} ADC (<= 5); {absorbed}/{peaks} peaks >= 10 ADC kept below 80% (worst kept {:.1}%)",
            100.0 * worst_kept
        ),
    )
}

// ---------------------------------------------------------------- 4 and 5

fn c4_gradients(_: &mut Shared) -> Outcome {
    let start = Instant::now();
    let conv = |filters, kernel_size, padding| LayerSpec::Conv1d {
        filters,
        kernel_size,
        padding,
    };
    let cases: Vec<(&str, Shape, Vec<LayerSpec>, Loss)> = vec![
        ("conv same", Shape::new(2, 12), vec![conv(3, 5, Padding::Same)], Loss::Mse),
        ("conv valid", Shape::new(1, 15), vec![conv(2, 7, Padding::Valid)], Loss::Mse),
        ("dense", Shape::new(6, 1), vec![LayerSpec::Dense { units: 4 }], Loss::Mse),
        ("relu", Shape::new(6, 1), vec![LayerSpec::Dense { units: 5 }, LayerSpec::Relu], Loss::Mse),
        (
            "maxpool_time",
            Shape::new(2, 11),
            vec![conv(2, 3, Padding::Same), LayerSpec::MaxPoolTime { pool: 3 }],
            Loss::Mse,
        ),
        (
            "maxpool_channel",
            Shape::new(1, 10),
            vec![conv(6, 3, Padding::Same), LayerSpec::MaxPoolChannel { pool: 4 }],
            Loss::Mse,
        ),
        (
            "flatten",
            Shape::new(1, 8),
            vec![conv(2, 3, Padding::Same), LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
            Loss::Mse,
        ),
        ("sigmoid mse", Shape::new(5, 1), vec![LayerSpec::Dense { units: 4 }, LayerSpec::Sigmoid], Loss::Mse),
        ("sigmoid bce", Shape::new(5, 1), vec![LayerSpec::Dense { units: 4 }, LayerSpec::Sigmoid], Loss::Bce),
    ];
    let mut worst = 0.0f64;
    let mut report = Vec::new();
    let mut rng = Rng::new(404);
    for (i, (name, input, specs, loss)) in cases.into_iter().enumerate() {
        let net = Network::build(input, &specs, 40 + i as u64).unwrap();
        let batch = 3;
        let x: Vec<f64> = (0..batch * input.size()).map(|_| rng.range(-1.0, 1.0)).collect();
        let y: Vec<f64> = (0..batch * net.output_shape().size())
            .map(|_| match loss {
                Loss::Mse => rng.range(-1.0, 1.0),
                Loss::Bce => f64::from(u8::from(rng.bernoulli(0.3))),
            })
            .collect();
        let r = gradient_check(&net, &x, &y, loss, 1e-5, 400, i as u64).unwrap();
        worst = worst.max(r.max_rel_error);
        report.push(format!("{name} {:.1e}", r.max_rel_error));
    }
    // The assembled stages against teacher targets. Inputs are drawn over
    // the scaled input range: real traces park thousands of pre-activations
    // on ReLU and channel-pool kinks, where central differences straddle
    // two linear pieces.
    let teacher = Teacher::default();
    let data = gen_batch(&GenConfig::default(), 0, 2).unwrap();
    for kind in StageKind::ALL {
        let model = build_stage(kind, 7);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (t, _) in &data {
            let labels = StageLabels::from(&teacher.teach(t).unwrap());
            let (_, yi) = kind.example(t.samples(), &labels);
            x.extend((0..TRACE_LEN).map(|_| rng.uniform()));
            y.extend(yi);
        }
        let r = gradient_check(&model.network, &x, &y, kind.loss(), 1e-5, 40, 9).unwrap();
        worst = worst.max(r.max_rel_error);
        report.push(format!("{kind} stage {:.1e}", r.max_rel_error));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} (< 1e-4), {secs:.1} s (< 60); {}", report.join(", ")),
    )
}

fn c5_param_count(_: &mut Shared) -> Outcome {
    let counts: Vec<usize> = StageKind::ALL.iter().map(|&k| build_stage(k, 1).param_count()).collect();
    let total: usize = counts.iter().sum();
    outcome(
        total > 500_000,
        format!(
            "{total} trainable parameters (> 5e5): baseline {}, deconv {}, peaks {}",
            counts[0], counts[1], counts[2]
        ),
    )
}

// ---------------------------------------------------------------- 6 to 10

const N_TRAIN: usize = 16_000;
const N_VAL: usize = 4_000;
const N_HELD_OUT: usize = 1_000;
const TRAINING_BUDGET_S: f64 = 7_200.0;

#[derive(Default)]
struct Shared {
    data: Option<Data>,
    models: Vec<(StageModel, TrainReport, f64)>,
}

/// Quantised traces with teacher labels, as they come back from a file.
struct Data {
    bytes: Vec<u8>,
    traces: Vec<Trace>,
    labels: Vec<StageLabels>,
}

fn labelled(cfg: &GenConfig, n: usize) -> Data {
    let teacher = Teacher::default();
    let raw: Vec<Record> = gen_batch(cfg, 0, n)
        .unwrap()
        .into_iter()
        .map(|(t, _)| Record::new(t))
        .collect();
    let bytes = encode_dataset(&raw).unwrap();
    drop(raw);
    let traces: Vec<Trace> = decode_dataset(&bytes)
        .unwrap()
        .1
        .into_iter()
        .map(|r| r.trace)
        .collect();
    let labels = teacher
        .teach_batch(&traces)
        .unwrap()
        .iter()
        .map(|l| StageLabels::from(&RecordLabels::from(l)))
        .collect();
    Data {
        bytes,
        traces,
        labels,
    }
}

impl Shared {
    fn data(&mut self) -> &Data {
        self.data.get_or_insert_with(|| {
            let start = Instant::now();
            let d = labelled(&GenConfig::default(), N_TRAIN + N_VAL);
            eprintln!(
                "generated and labelled {} traces in {:.1} s",
                N_TRAIN + N_VAL,
                start.elapsed().as_secs_f64()
            );
            d
        })
    }

    fn stage(&mut self, kind: StageKind) -> &(StageModel, TrainReport, f64) {
        if let Some(i) = self.models.iter().position(|m| m.0.kind == kind) {
            return &self.models[i];
        }
        let d = self.data();
        let items = d.traces.iter().map(|t| t.samples()).zip(&d.labels);
        let train_set = stage_dataset(kind, items.clone().take(N_TRAIN)).unwrap();
        let val_set = stage_dataset(kind, items.skip(N_TRAIN)).unwrap();
        let cfg = TrainConfig::default();
        let start = Instant::now();
        let (model, report) = train_stage(kind, &train_set, &val_set, &cfg, |e| {
            eprintln!(
                "  {kind} epoch {:>2}: train {:.4e} val {:.4e} ({:.1} s)",
                e.epoch, e.train_loss, e.val_loss, e.seconds
            );
        })
        .unwrap();
        let secs = start.elapsed().as_secs_f64();
        self.models.push((model, report, secs));
        self.models.last().unwrap()
    }

    fn val_metrics(&mut self, kind: StageKind) -> (tpcnet::models::EvalMetrics, f64, TrainReport) {
        let (model, report, secs) = self.stage(kind).clone();
        let d = self.data();
        let items = d.traces.iter().map(|t| t.samples()).zip(&d.labels).skip(N_TRAIN);
        let val_set = stage_dataset(kind, items).unwrap();
        (evaluate_stage(&model, &val_set, 0.5).unwrap(), secs, report)
    }

    fn chain(&mut self) -> Chain {
        let b = self.stage(StageKind::Baseline).0.clone();
        let d = self.stage(StageKind::Deconvolution).0.clone();
        let p = self.stage(StageKind::Peaks).0.clone();
        Chain::new(b, d, p).unwrap()
    }
}

fn protocol(report: &TrainReport, secs: f64) -> String {
    format!(
        "{} train / {} val, {} epochs, batch 8, lr 5e-4, best epoch {}, {:.0} s",
        report.train_samples,
        report.val_samples,
        report.epochs.len(),
        report.best_epoch,
        secs
    )
}

fn c6_baseline_stage(s: &mut Shared) -> Outcome {
    let (m, secs, report) = s.val_metrics(StageKind::Baseline);
    let rel = m.rel_error_median.unwrap_or(f64::INFINITY);
    let best = report.best();
    let gap = (best.train_loss - best.val_loss).abs() / best.train_loss.min(best.val_loss);
    outcome(
        rel < 0.05 && gap <= 0.2 && secs <= TRAINING_BUDGET_S,
        format!(
            "median relative error {:.2}% (< 5%), train/val loss gap at best epoch {:.1}% (<= 20%); {}",
            100.0 * rel,
            100.0 * gap,
            protocol(&report, secs)
        ),
    )
}

fn c7_deconv_stage(s: &mut Shared) -> Outcome {
    let (m, secs, report) = s.val_metrics(StageKind::Deconvolution);
    let rel = m.rel_error_median.unwrap_or(f64::INFINITY);
    outcome(
        rel < 0.10 && secs <= TRAINING_BUDGET_S,
        format!(
            "median relative error {:.2}% (< 10%), {} traces skipped; {}",
            100.0 * rel,
            m.rel_error_skipped,
            protocol(&report, secs)
        ),
    )
}

fn c8_peak_stage(s: &mut Shared) -> Outcome {
    let (m, secs, report) = s.val_metrics(StageKind::Peaks);
    let acc = m.detection_accuracy.unwrap_or(0.0);
    let rms = m.centroid_rms.unwrap_or(f64::INFINITY);
    let fp = m.false_positive_rate.unwrap_or(f64::INFINITY);
    outcome(
        acc >= 0.9 && rms <= 2.0 && fp <= 0.2 && secs <= TRAINING_BUDGET_S,
        format!(
            "detection accuracy {acc:.3} (>= 0.90) over {} windows, centroid RMS {rms:.2} buckets (<= 2), false positives {fp:.3}/trace (<= 0.2); {}",
            m.truth_windows,
            protocol(&report, secs)
        ),
    )
}

/// Greedy one-to-one matching of teacher hits to chain hits.
fn matched(teacher: &[Hit], chain: &[Hit], dt: f64, dq: f64) -> usize {
    let mut used = vec![false; chain.len()];
    let mut n = 0;
    for t in teacher {
        let best = chain
            .iter()
            .enumerate()
            .filter(|(j, c)| {
                !used[*j] && (c.time - t.time).abs() <= dt && (c.charge - t.charge).abs() <= dq * t.charge
            })
            .min_by(|a, b| (a.1.time - t.time).abs().total_cmp(&(b.1.time - t.time).abs()));
        if let Some((j, _)) = best {
            used[j] = true;
            n += 1;
        }
    }
    n
}

fn c9_chain(s: &mut Shared) -> Outcome {
    let chain = s.chain();
    let cfg = GenConfig {
        rng_seed: 909,
        ..GenConfig::default()
    };
    let held_out = labelled(&cfg, N_HELD_OUT);
    let teacher = Teacher::default();
    let outputs = chain.runner(32).run(&held_out.traces, 0.5).unwrap();
    let (mut teacher_hits, mut chain_hits, mut ok) = (0, 0, 0);
    for (t, o) in held_out.traces.iter().zip(&outputs) {
        let th = teacher.hits(t).unwrap();
        teacher_hits += th.len();
        chain_hits += o.hits.len();
        ok += matched(&th, &o.hits, 2.0, 0.15);
    }
    let frac = ok as f64 / teacher_hits.max(1) as f64;
    outcome(
        frac >= 0.9,
        format!(
            "{ok}/{teacher_hits} teacher hits matched within 2 buckets and 15% charge ({:.1}%, >= 90%); chain found {chain_hits} hits on {N_HELD_OUT} held-out traces",
            100.0 * frac
        ),
    )
}

fn c10_bench(s: &mut Shared) -> Outcome {
    let chain = s.chain();
    let bytes = std::mem::take(&mut s.data.as_mut().expect("data built for training").bytes);
    let cfg = BenchConfig {
        repeat: 1,
        warmup: 1,
        batch_size: 32,
    };
    let r = run_bench(&bytes, Pipeline::Both, &Teacher::default(), Some(&chain), 0.5, &cfg).unwrap();
    let (c, n) = (r.classical.as_ref().unwrap(), r.cnn.as_ref().unwrap());
    let stages = |p: &tpcnet::bench::PipelineReport| {
        p.stages
            .iter()
            .map(|s| format!("{} {:.1}", s.stage, s.seconds))
            .collect::<Vec<_>>()
            .join(", ")
    };
    outcome(
        r.traces >= 20_000 && n.traces_per_second > c.traces_per_second,
        format!(
            "{} traces, 1 thread: cnn {:.0} traces/s vs classical {:.0} traces/s, speedup {:.2}; classical s: {}; cnn s: {}",
            r.traces,
            n.traces_per_second,
            c.traces_per_second,
            r.speedup.unwrap(),
            stages(c),
            stages(n)
        ),
    )
}

// ---------------------------------------------------------------- 11

fn cli(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_tpcnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// Every file a gen/teach/train/infer sequence leaves behind, except the
/// JSON training reports, which carry wall times.
fn cli_run(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut stdout = Vec::new();
    stdout.push(cli(dir, &["gen", "--n", "300", "--out", "train_raw.tpcd", "--seed", "11"]));
    stdout.push(cli(dir, &["gen", "--n", "60", "--out", "val_raw.tpcd", "--seed", "12"]));
    stdout.push(cli(dir, &["teach", "--in", "train_raw.tpcd", "--out", "train.tpcd"]));
    stdout.push(cli(dir, &["teach", "--in", "val_raw.tpcd", "--out", "val.tpcd"]));
    std::fs::create_dir_all(dir.join("models")).unwrap();
    for stage in ["baseline", "deconv", "peaks"] {
        let out = format!("models/{stage}.tpnn");
        stdout.push(cli(
            dir,
            &["train", "--stage", stage, "--in", "train.tpcd", "--val", "val.tpcd", "--out", &out, "--epochs", "2", "--seed", "3"],
        ));
    }
    stdout.push(cli(dir, &["infer", "--models", "models", "--in", "val.tpcd", "--out", "cloud.csv"]));
    let mut files: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .filter(|(name, _)| !name.ends_with(".report.json"))
        .collect();
    files.push(("stdout".into(), stdout.concat()));
    files
}

fn walk(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c11_determinism(_: &mut Shared) -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = cli_run(a.path());
    let rb = cli_run(b.path());
    let differing: Vec<&str> = ra
        .iter()
        .zip(&rb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let same = ra.len() == rb.len() && differing.is_empty();
    outcome(
        same,
        format!(
            "{} outputs compared byte for byte across two runs{}",
            ra.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", differing.join(", "))
            }
        ),
    )
}
