use vidprop::eval::recall_at;
use vidprop::pipeline::{propose, Video};
use vidprop::synth::{render, SynthObject, SyntheticSpec};
use vidprop::PipelineConfig;

fn mover_video(clutter: bool) -> (Video, vidprop::eval::GroundTruth) {
    let mut objects = vec![SynthObject {
        class: "red".into(),
        size: [48, 40],
        start: [20.0, 40.0],
        velocity: [3.0, 1.0],
        enter: 0,
        exit: None,
    }];
    if clutter {
        for (class, start) in [("blue", [120.0, 20.0]), ("green", [110.0, 130.0])] {
            objects.push(SynthObject {
                class: class.into(),
                size: [44, 44],
                start,
                velocity: [0.0, 0.0],
                enter: 0,
                exit: None,
            });
        }
    }
    let spec = SyntheticSpec {
        frames: 9,
        width: 192,
        height: 192,
        background_seed: 11,
        objects,
    };
    let v = render(&spec).unwrap();
    let video = Video::from_frames(v.frames)
        .unwrap()
        .with_flows(v.flows)
        .unwrap();
    (video, v.truth)
}

fn demo_config(base: PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        lambda: 0.8,
        max_proposals: 50,
        ..base
    }
}

#[test]
fn single_mover_recall_at_native_size() {
    let (video, gt) = mover_video(false);
    let props = propose(&video, &demo_config(PipelineConfig::small_synthetic())).unwrap();
    for t in 0..video.len() {
        let n = props.iter().filter(|p| p.frame == t).count();
        assert!(n > 0 && n <= 50);
    }
    assert_eq!(recall_at(&props, &gt, 50).unwrap().recall, 1.0);
}

#[test]
fn single_mover_recall_after_default_resize() {
    let (video, gt) = mover_video(false);
    let cfg = demo_config(PipelineConfig::default());
    assert_eq!(cfg.resize, Some([500, 500]));
    let props = propose(&video, &cfg).unwrap();
    assert_eq!(recall_at(&props, &gt, 50).unwrap().recall, 1.0);
}

#[test]
fn high_lambda_prefers_the_mover() {
    let (video, gt) = mover_video(true);
    let props = propose(&video, &demo_config(PipelineConfig::small_synthetic())).unwrap();
    let report = recall_at(&props, &gt, 50).unwrap();
    let mover = report.per_object[&0];
    let still = (report.per_object[&1] + report.per_object[&2]) / 2.0;
    assert!(mover > still, "{report:?}");
}

#[test]
fn proposals_are_deterministic() {
    let (video, _) = mover_video(true);
    let cfg = PipelineConfig::small_synthetic();
    assert_eq!(
        propose(&video, &cfg).unwrap(),
        propose(&video, &cfg).unwrap()
    );
}
