use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use tpcnet::bench::{run_bench, Pipeline};
use tpcnet::config::Config;
use tpcnet::dataset::{create_dataset, open_dataset, Flags, Record, RecordLabels};
use tpcnet::models::{evaluate_stage, Chain, StageKind, StageLabels, INPUT_SCALE, STAGE_INPUT};
use tpcnet::nn::{train, Dataset};
use tpcnet::pointcloud::{assemble, export_cloud, CloudFormat, PadPlane, PointCloudEvent};
use tpcnet::synth::gen_batch;
use tpcnet::{Error, Hit, TRACE_LEN};

/// Pad plane used when `infer` is given none: 128 x 80 pads, 2.2 mm pitch.
const DEFAULT_GRID: (u32, u32, f64) = (128, 80, 2.2);
/// Traces handled per parallel batch when generating and labelling.
const CHUNK: usize = 1024;

#[derive(Parser)]
#[command(name = "tpcnet", version, about = "TPC pulse processing: classical and CNN pipelines")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic traces with truth.
    Gen {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Label a dataset with the classical pipeline.
    Teach {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network stage on labelled data.
    Train {
        #[arg(long)]
        stage: StageKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Model file; the report is written next to it as
        /// `<out>.report.json` and `<out>.loss.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the network chain and export point clouds.
    Infer {
        #[arg(long)]
        models: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Cloud file; `.json` selects JSON, anything else CSV.
        #[arg(long)]
        out: PathBuf,
        /// Pad geometry CSV (pad_id,x,y).
        #[arg(long)]
        padplane: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        score_cut: f64,
    },
    /// Score each stage against the teacher labels.
    Eval {
        #[arg(long)]
        models: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        score_cut: f64,
    },
    /// Time the classical and network pipelines, trace to hits.
    Bench {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "both")]
        pipeline: Pipeline,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        repeat: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        score_cut: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("config {}", p.display()))?,
        None => Config::default(),
    };
    match cli.cmd {
        Cmd::Gen { n, out, seed } => gen(cfg, n, &out, seed),
        Cmd::Teach { input, out } => teach(&cfg, &input, &out),
        Cmd::Train {
            stage,
            input,
            val,
            out,
            epochs,
            seed,
        } => train_cmd(cfg, stage, &input, &val, &out, epochs, seed),
        Cmd::Infer {
            models,
            input,
            out,
            padplane,
            score_cut,
        } => infer(&cfg, &models, &input, &out, padplane.as_deref(), score_cut),
        Cmd::Eval {
            models,
            input,
            out,
            score_cut,
        } => eval(&models, &input, out.as_deref(), score_cut),
        Cmd::Bench {
            input,
            pipeline,
            models,
            repeat,
            out,
            score_cut,
        } => bench(cfg, &input, pipeline, models.as_deref(), repeat, out.as_deref(), score_cut),
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn gen(mut cfg: Config, n: u64, out: &Path, seed: Option<u64>) -> Result<()> {
    if let Some(s) = seed {
        cfg.gen.rng_seed = s;
    }
    let flags = Flags {
        truth: true,
        labels: false,
    };
    let mut w = create_dataset(out, n, flags)?;
    let mut start = 0;
    while start < n {
        let count = (n - start).min(CHUNK as u64) as usize;
        for (trace, truth) in gen_batch(&cfg.gen, start, count)? {
            w.push(&Record {
                trace,
                truth: Some(truth),
                labels: None,
            })?;
        }
        start += count as u64;
    }
    w.finish()?;
    emit(&json!({ "records": n, "out": out }), None)
}

fn teach(cfg: &Config, input: &Path, out: &Path) -> Result<()> {
    let teacher = cfg.teacher()?;
    let mut reader = open_dataset(input)?;
    let header = reader.header();
    let flags = Flags {
        truth: header.flags.truth,
        labels: true,
    };
    let mut w = create_dataset(out, header.count, flags)?;
    let (mut records, mut hits) = (0u64, 0usize);
    loop {
        let chunk: Vec<Record> = reader.by_ref().take(CHUNK).collect::<Result<_, _>>()?;
        if chunk.is_empty() {
            break;
        }
        let traces: Vec<_> = chunk.iter().map(|r| r.trace.clone()).collect();
        let labels = teacher.teach_batch(&traces)?;
        for (mut rec, l) in chunk.into_iter().zip(&labels) {
            hits += l.hits.len();
            rec.labels = Some(RecordLabels::from(l));
            w.push(&rec)?;
            records += 1;
        }
    }
    w.finish()?;
    emit(&json!({ "records": records, "teacher_hits": hits, "out": out }), None)
}

/// Stage inputs and targets straight from a labelled file.
fn load_stage_set(kind: StageKind, path: &Path) -> Result<Dataset> {
    let reader = open_dataset(path)?;
    let header = reader.header();
    if !header.flags.labels {
        return Err(Error::MissingBlock("label")).with_context(|| path.display().to_string());
    }
    let mut set = Dataset::with_capacity(STAGE_INPUT, TRACE_LEN, header.count as usize);
    for rec in reader {
        let rec = rec?;
        let labels = StageLabels::from(rec.labels.as_ref().expect("label flag set"));
        let (x, y) = kind.example(rec.trace.samples(), &labels);
        set.push(&x, &y)?;
    }
    Ok(set)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train_cmd(
    mut cfg: Config,
    kind: StageKind,
    input: &Path,
    val: &Path,
    out: &Path,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let train_set = load_stage_set(kind, input)?;
    let val_set = load_stage_set(kind, val)?;
    let mut model = tpcnet::models::build_stage(kind, cfg.train.seed);
    let report = train(&mut model.network, &train_set, &val_set, kind.loss(), &cfg.train, |e| {
        eprintln!(
            "{kind} epoch {:>3}  train {:.4e}  val {:.4e}  {:.1}s",
            e.epoch, e.train_loss, e.val_loss, e.seconds
        );
    })
    .with_context(|| format!("training {kind}"))?;
    model.save(out)?;
    let report_json = serde_json::to_value(&report)?;
    emit(&report_json, Some(&with_suffix(out, ".report.json")))?;
    let csv = with_suffix(out, ".loss.csv");
    std::fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    let best = report.best();
    emit(
        &json!({
            "stage": kind,
            "model": out,
            "params": model.param_count(),
            "best_epoch": report.best_epoch,
            "train_loss": best.train_loss,
            "val_loss": best.val_loss,
        }),
        None,
    )
}

fn infer(
    cfg: &Config,
    models: &Path,
    input: &Path,
    out: &Path,
    padplane: Option<&Path>,
    score_cut: f64,
) -> Result<()> {
    let chain = Chain::load_dir(models)?.with_half_width(cfg.peaks.half_width);
    let plane = match padplane {
        Some(p) => PadPlane::load(p)?,
        None => PadPlane::grid(DEFAULT_GRID.0, DEFAULT_GRID.1, DEFAULT_GRID.2),
    };
    let mut reader = open_dataset(input)?;
    let mut runner = chain.runner(32);
    let mut events: BTreeMap<u32, Vec<Hit>> = BTreeMap::new();
    loop {
        let chunk: Vec<Record> = reader.by_ref().take(CHUNK).collect::<Result<_, _>>()?;
        if chunk.is_empty() {
            break;
        }
        let traces: Vec<_> = chunk.into_iter().map(|r| r.trace).collect();
        for (t, o) in traces.iter().zip(runner.run(&traces, score_cut)?) {
            events.entry(t.event_id()).or_default().extend(o.hits);
        }
    }
    let clouds: Vec<PointCloudEvent> = events
        .iter()
        .map(|(&id, hits)| assemble(id, hits, &plane))
        .collect::<Result<_, _>>()?;
    export_cloud(&clouds, out, CloudFormat::from_path(out))?;
    let points: usize = clouds.iter().map(|c| c.points.len()).sum();
    emit(&json!({ "events": clouds.len(), "points": points, "out": out }), None)
}

fn eval(models: &Path, input: &Path, out: Option<&Path>, score_cut: f64) -> Result<()> {
    let chain = Chain::load_dir(models)?;
    let mut metrics = Vec::new();
    for model in [&chain.baseline, &chain.deconv, &chain.peaks] {
        let set = load_stage_set(model.kind, input)?;
        metrics.push(evaluate_stage(model, &set, score_cut)?);
    }
    emit(&json!({ "input_scale": INPUT_SCALE, "stages": metrics }), out)
}

#[allow(clippy::too_many_arguments)]
fn bench(
    mut cfg: Config,
    input: &Path,
    pipeline: Pipeline,
    models: Option<&Path>,
    repeat: Option<usize>,
    out: Option<&Path>,
    score_cut: f64,
) -> Result<()> {
    if let Some(r) = repeat {
        if r == 0 {
            bail!("--repeat must be at least 1");
        }
        cfg.bench.repeat = r;
    }
    let chain = match (pipeline, models) {
        (Pipeline::Classical, _) => None,
        (_, Some(dir)) => Some(Chain::load_dir(dir)?.with_half_width(cfg.peaks.half_width)),
        (_, None) => bail!("--models is required unless --pipeline classical"),
    };
    let teacher = cfg.teacher()?;
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let report = run_bench(&bytes, pipeline, &teacher, chain.as_ref(), score_cut, &cfg.bench)?;
    emit(&serde_json::to_value(&report)?, out)
}
