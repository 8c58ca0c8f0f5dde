use tpcnet::bench::*;
use tpcnet::config::BenchConfig;
use tpcnet::dataset::{encode_dataset, Record};
use tpcnet::dsp::Teacher;
use tpcnet::models::{build_stage, Chain, StageKind};
use tpcnet::synth::{gen_batch, GenConfig};
use tpcnet::Error;

fn bytes(n: usize) -> Vec<u8> {
    let recs: Vec<Record> = gen_batch(&GenConfig::default(), 0, n)
        .unwrap()
        .into_iter()
        .map(|(t, _)| Record::new(t))
        .collect();
    encode_dataset(&recs).unwrap()
}

fn chain() -> Chain {
    Chain::new(
        build_stage(StageKind::Baseline, 1),
        build_stage(StageKind::Deconvolution, 2),
        build_stage(StageKind::Peaks, 3),
    )
    .unwrap()
}

#[test]
fn repeats_are_all_reported() {
    let cfg = BenchConfig {
        repeat: 5,
        warmup: 1,
        batch_size: 8,
    };
    let r = run_bench(&bytes(20), Pipeline::Classical, &Teacher::default(), None, 0.5, &cfg).unwrap();
    let c = r.classical.unwrap();
    assert_eq!(c.samples.len(), 5);
    let mut s = c.samples.clone();
    s.sort_by(f64::total_cmp);
    assert_eq!(c.wall_seconds, s[2]);
    assert_eq!(c.traces, 20);
    assert!(c.samples.iter().all(|&t| t > 0.0));
    assert!(r.cnn.is_none() && r.speedup.is_none());
}

#[test]
fn gold_dominates_the_classical_pipeline() {
    let cfg = BenchConfig {
        repeat: 3,
        ..BenchConfig::default()
    };
    let c = bench_classical(&bytes(50), &Teacher::default(), &cfg).unwrap();
    let gold = c.stage("gold").unwrap();
    for other in ["decode", "snip", "peaks"] {
        assert!(gold > c.stage(other).unwrap(), "{other}");
    }
}

#[test]
fn both_pipelines_run_on_the_same_bytes() {
    let cfg = BenchConfig {
        repeat: 1,
        warmup: 0,
        batch_size: 4,
    };
    let chain = chain();
    let data = bytes(10);
    let r = run_bench(&data, Pipeline::Both, &Teacher::default(), Some(&chain), 0.5, &cfg).unwrap();
    let (a, b) = (r.classical.as_ref().unwrap(), r.cnn.as_ref().unwrap());
    assert_eq!(a.traces, b.traces);
    assert_eq!(r.speedup.unwrap(), a.wall_seconds / b.wall_seconds);
    assert_eq!(b.stages.len(), 4);
}

#[test]
fn cnn_without_models_fails_before_timing() {
    let cfg = BenchConfig::default();
    let err = run_bench(&bytes(2), Pipeline::Cnn, &Teacher::default(), None, 0.5, &cfg).unwrap_err();
    assert!(matches!(err, Error::Param(_)));
    assert!("gpu".parse::<Pipeline>().is_err());
}
