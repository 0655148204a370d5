use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vidprop::pipeline::{cluster_stream, Video};
use vidprop::segmentation::{foreground_prior, mask_iou, prior_mask};
use vidprop::synth::{jitter_box, render, SynthObject, SyntheticSpec, SyntheticVideo};
use vidprop::{iou, BBox, PipelineConfig};

const SIZE: usize = 160;

fn one_object(velocity: [f64; 2]) -> SyntheticVideo {
    render(&SyntheticSpec {
        frames: 9,
        width: SIZE,
        height: SIZE,
        background_seed: 4,
        objects: vec![SynthObject {
            class: "cyan".into(),
            size: [50, 42],
            start: [30.0, 50.0],
            velocity,
            enter: 0,
            exit: None,
        }],
    })
    .unwrap()
}

fn mask_from(boxes: &[BBox]) -> vidprop::Field2D {
    let prior = foreground_prior(boxes, SIZE, SIZE).unwrap();
    prior_mask(&prior, 0.5, true).unwrap()
}

fn grow(b: &BBox, factor: f64) -> BBox {
    let (w, h) = (b.w as f64 * factor, b.h as f64 * factor);
    let cx = b.x as f64 + b.w as f64 / 2.0;
    let cy = b.y as f64 + b.h as f64 / 2.0;
    let x0 = (cx - w / 2.0).max(0.0);
    let y0 = (cy - h / 2.0).max(0.0);
    let x1 = (cx + w / 2.0).min(SIZE as f64);
    let y1 = (cy + h / 2.0).min(SIZE as f64);
    BBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32).unwrap()
}

#[test]
fn tight_boxes_recover_the_mask_and_loose_boxes_do_not() {
    let v = one_object([0.0, 0.0]);
    let gt = v.truth.frames[0].objects[0].bbox;
    let truth = &v.masks[0][0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tight: Vec<BBox> = (0..30)
        .map(|_| jitter_box(&gt, 0.1, SIZE, SIZE, &mut rng))
        .collect();
    let loose: Vec<BBox> = (0..30)
        .map(|_| grow(&jitter_box(&gt, 0.1, SIZE, SIZE, &mut rng), 1.8))
        .collect();
    let tight_iou = mask_iou(&mask_from(&tight), truth).unwrap();
    let loose_iou = mask_iou(&mask_from(&loose), truth).unwrap();
    assert!(tight_iou >= 0.5, "tight {tight_iou}");
    assert!(loose_iou < 0.5, "loose {loose_iou}");
}

#[test]
fn pipeline_clusters_give_usable_priors() {
    let v = one_object([3.0, 1.0]);
    let video = Video::from_frames(v.frames.clone())
        .unwrap()
        .with_flows(v.flows.clone())
        .unwrap();
    let run = cluster_stream(&video, &PipelineConfig::small_synthetic()).unwrap();
    let mut ious = Vec::new();
    for f in &v.truth.frames {
        let gt = f.objects[0].bbox;
        let in_frame: Vec<_> = run.records.iter().filter(|r| r.frame == f.frame).collect();
        // the cluster whose members best cover the object
        let best = in_frame
            .iter()
            .max_by(|a, b| iou(&a.bbox, &gt).total_cmp(&iou(&b.bbox, &gt)))
            .unwrap()
            .global_id;
        let members: Vec<BBox> = in_frame
            .iter()
            .filter(|r| r.global_id == best)
            .map(|r| r.bbox)
            .collect();
        ious.push(mask_iou(&mask_from(&members), &v.masks[f.frame][0]).unwrap());
    }
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    assert!(mean >= 0.5, "{ious:?}");
}
