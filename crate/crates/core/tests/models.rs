use tpcnet::dsp::Teacher;
use tpcnet::models::*;
use tpcnet::nn::{Shape, TrainConfig};
use tpcnet::synth::{gen_batch, GenConfig};
use tpcnet::{Error, Trace, TRACE_LEN};

fn labelled(n: usize) -> Vec<(Trace, StageLabels)> {
    let cfg = GenConfig::default();
    let teacher = Teacher::default();
    gen_batch(&cfg, 0, n)
        .unwrap()
        .into_iter()
        .map(|(t, _)| {
            let l = StageLabels::from(&teacher.teach(&t).unwrap());
            (t, l)
        })
        .collect()
}

#[test]
fn stage_shapes_and_sizes() {
    let mut total = 0;
    for kind in StageKind::ALL {
        let m = build_stage(kind, 3);
        assert_eq!(m.network.input_shape(), Shape::new(1, TRACE_LEN));
        assert_eq!(m.network.output_shape(), Shape::new(TRACE_LEN, 1));
        total += m.param_count();
    }
    assert!(total > 500_000, "{total}");
    let deconv = build_stage(StageKind::Deconvolution, 3);
    assert_eq!(deconv.network.shapes()[1], Shape::new(32, 494));
}

#[test]
fn stage_names_round_trip() {
    for kind in StageKind::ALL {
        assert_eq!(kind.name().parse::<StageKind>().unwrap(), kind);
    }
    assert!("segmentation".parse::<StageKind>().is_err());
}

#[test]
fn oracle_as_model_scores_perfectly() {
    let data = labelled(40);
    for kind in StageKind::ALL {
        let items = data.iter().map(|(_, l)| {
            let target = kind.teacher_target(l);
            EvalItem {
                prediction: target,
                teacher: target,
                signal: &l.deconvolved,
            }
        });
        let m = evaluate_items(kind, items, 0.5).unwrap();
        assert_eq!(m.traces, 40);
        match kind {
            StageKind::Peaks => {
                assert!(m.truth_windows > 0);
                assert_eq!(m.detection_accuracy, Some(1.0));
                assert_eq!(m.centroid_rms, Some(0.0));
                assert_eq!(m.false_positive_rate, Some(0.0));
            }
            _ => assert_eq!(m.rel_error_median, Some(0.0)),
        }
    }
}

#[test]
fn untrained_model_reports_metrics() {
    let data = labelled(12);
    for kind in StageKind::ALL {
        let set = stage_dataset(kind, data.iter().map(|(t, l)| (t.samples(), l))).unwrap();
        let m = evaluate_stage(&build_stage(kind, 5), &set, 0.5).unwrap();
        assert_eq!(m.traces, 12);
        match kind {
            StageKind::Peaks => {
                let acc = m.detection_accuracy.unwrap();
                assert!((0.0..=1.0).contains(&acc));
            }
            _ => assert!(m.rel_error_median.unwrap().is_finite()),
        }
    }
}

#[test]
fn empty_evaluation_is_an_error() {
    let set = stage_dataset(StageKind::Baseline, std::iter::empty()).unwrap();
    let m = build_stage(StageKind::Baseline, 1);
    assert!(matches!(evaluate_stage(&m, &set, 0.5), Err(Error::Empty(_))));
}

#[test]
fn chain_on_flat_trace_finds_nothing_with_low_scores() {
    let chain = Chain::new(
        build_stage(StageKind::Baseline, 1),
        build_stage(StageKind::Deconvolution, 2),
        build_stage(StageKind::Peaks, 3),
    )
    .unwrap();
    let flat = Trace::constant(0, 4, 250.0);
    let out = chain.runner(4).run(&[flat.clone(), flat], 1.0).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|o| o.hits.is_empty()));
    assert_eq!(out[0], out[1]);
}

#[test]
fn chain_rejects_misplaced_stage() {
    let err = Chain::new(
        build_stage(StageKind::Peaks, 1),
        build_stage(StageKind::Deconvolution, 2),
        build_stage(StageKind::Peaks, 3),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Param(_)));
}

#[test]
fn batched_chain_matches_single_traces() {
    let data = labelled(5);
    let chain = Chain::new(
        build_stage(StageKind::Baseline, 1),
        build_stage(StageKind::Deconvolution, 2),
        build_stage(StageKind::Peaks, 3),
    )
    .unwrap();
    let traces: Vec<Trace> = data.iter().map(|(t, _)| t.clone()).collect();
    let batched = chain.runner(3).run(&traces, 0.5).unwrap();
    for (t, b) in traces.iter().zip(&batched) {
        let single = chain.runner(1).run(std::slice::from_ref(t), 0.5).unwrap();
        for (x, y) in single[0].deconvolved.iter().zip(&b.deconvolved) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn stage_and_chain_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let chain = Chain::new(
        build_stage(StageKind::Baseline, 1),
        build_stage(StageKind::Deconvolution, 2),
        build_stage(StageKind::Peaks, 3),
    )
    .unwrap();
    chain.save_dir(dir.path()).unwrap();
    let back = Chain::load_dir(dir.path()).unwrap();
    assert_eq!(back.baseline, chain.baseline);
    assert_eq!(back.peaks, chain.peaks);
    assert_eq!(back.param_count(), chain.param_count());

    std::fs::remove_file(dir.path().join("peaks.tpnn")).unwrap();
    assert!(matches!(Chain::load_dir(dir.path()), Err(Error::File { .. })));
}

#[test]
fn short_training_is_deterministic() {
    let data = labelled(24);
    let kind = StageKind::Baseline;
    let train = stage_dataset(kind, data[..16].iter().map(|(t, l)| (t.samples(), l))).unwrap();
    let val = stage_dataset(kind, data[16..].iter().map(|(t, l)| (t.samples(), l))).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let (a, ra) = train_stage(kind, &train, &val, &cfg, |_| {}).unwrap();
    let (b, rb) = train_stage(kind, &train, &val, &cfg, |_| {}).unwrap();
    assert_eq!(a, b);
    assert!(ra.same_trajectory(&rb));
    assert_eq!(ra.epochs.len(), 2);
}
