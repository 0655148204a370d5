//! Cluster location models, stored offsets, detections and the classifier seam.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterRegistry;
use crate::error::{Error, Result};
use crate::geom::{BBox, Quad};
use crate::image::RgbImage;

/// Variance added to every diagonal entry of a fitted location covariance (1 px^2).
pub const LOCATION_REGULARIZER: f64 = 1.0;

/// Gaussian over `(center_x, center_y, h, w)` of a cluster's boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationModel {
    pub mean: Quad,
    pub covariance: Matrix4<f64>,
}

/// Sample mean and covariance of the boxes' quadruples, regularized by `+I`.
pub fn fit_location_gaussian(boxes: &[BBox]) -> Result<LocationModel> {
    if boxes.is_empty() {
        return Err(Error::param(
            "boxes",
            "a location model needs at least one box",
        ));
    }
    let quads: Vec<Vector4<f64>> = boxes.iter().map(|b| Vector4::from(b.quad())).collect();
    let n = quads.len() as f64;
    let mean = quads.iter().fold(Vector4::zeros(), |a, q| a + q) / n;
    let mut cov = Matrix4::zeros();
    if quads.len() > 1 {
        for q in &quads {
            let c = q - mean;
            cov += c * c.transpose();
        }
        cov /= n - 1.0;
    }
    cov += Matrix4::identity() * LOCATION_REGULARIZER;
    Ok(LocationModel {
        mean: mean.into(),
        covariance: cov,
    })
}

/// `d = quad(detected) - mean`.
pub fn location_offset(detected: &BBox, model: &LocationModel) -> [f64; 4] {
    let q = detected.quad();
    [
        q[0] - model.mean[0],
        q[1] - model.mean[1],
        q[2] - model.mean[2],
        q[3] - model.mean[3],
    ]
}

/// Stores the offset of `detected` from the model mean for cluster `id`.
pub fn record_offset(
    registry: &mut ClusterRegistry,
    id: u64,
    detected: &BBox,
    model: &LocationModel,
) -> Result<[f64; 4]> {
    let entry = registry.get_mut(id)?;
    let d = location_offset(detected, model);
    entry.offset = Some(d);
    Ok(d)
}

/// Box at `mean + d`, clamped to the frame. Also reports whether clamping
/// changed the box.
pub fn propagate_localization(
    model: &LocationModel,
    d: &[f64; 4],
    width: usize,
    height: usize,
) -> (BBox, bool) {
    let q = [
        model.mean[0] + d[0],
        model.mean[1] + d[1],
        model.mean[2] + d[2],
        model.mean[3] + d[3],
    ];
    BBox::from_quad_clamped(q, width, height)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Classified,
    Propagated,
}

/// One localized, labelled object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    #[serde(flatten)]
    pub bbox: BBox,
    pub class: String,
    pub confidence: f64,
    pub provenance: Provenance,
}

/// Window counts of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectStats {
    pub total_windows: usize,
    pub classified_windows: usize,
    pub fraction: f64,
    pub clusters_created: u64,
}

/// Classified windows over all windows.
pub fn classification_fraction(stats: &DetectStats) -> Result<f64> {
    if stats.total_windows == 0 {
        return Err(Error::NoProposals);
    }
    Ok(stats.classified_windows as f64 / stats.total_windows as f64)
}

/// A frame handed to a classifier.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    pub index: usize,
    /// The frame as processed (possibly resized); boxes refer to it.
    pub image: &'a RgbImage,
    /// Where the frame came from, if it was read from disk.
    pub path: Option<&'a std::path::Path>,
    /// Dimensions of the frame on disk.
    pub original_dims: (usize, usize),
}

/// Scores boxes of one frame over `classes()` labels, index 0 being background.
pub trait Classifier {
    fn classes(&self) -> &[String];

    /// One score vector of length `classes().len()` per box.
    fn classify(&mut self, frame: FrameRef<'_>, boxes: &[BBox]) -> Result<Vec<Vec<f64>>>;
}

impl<C: Classifier + ?Sized> Classifier for &mut C {
    fn classes(&self) -> &[String] {
        (**self).classes()
    }

    fn classify(&mut self, frame: FrameRef<'_>, boxes: &[BBox]) -> Result<Vec<Vec<f64>>> {
        (**self).classify(frame, boxes)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn classes(&self) -> &[String] {
        (**self).classes()
    }

    fn classify(&mut self, frame: FrameRef<'_>, boxes: &[BBox]) -> Result<Vec<Vec<f64>>> {
        (**self).classify(frame, boxes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{associate_clusters, ClusterDescriptor, DescriptorOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn identical_members() {
        let m = fit_location_gaussian(&[b(10, 20, 30, 40); 4]).unwrap();
        assert_eq!(m.mean, [25.0, 40.0, 40.0, 30.0]);
        assert_eq!(m.covariance, Matrix4::identity());
        assert!(fit_location_gaussian(&[]).is_err());
    }

    #[test]
    fn jittered_mean_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = b(50, 60, 40, 30);
        let boxes: Vec<BBox> = (0..400)
            .map(|_| {
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-5i32..=5);
                b(
                    (50 + j(&mut rng)) as u32,
                    (60 + j(&mut rng)) as u32,
                    (40 + j(&mut rng)) as u32,
                    (30 + j(&mut rng)) as u32,
                )
            })
            .collect();
        let m = fit_location_gaussian(&boxes).unwrap();
        let q = truth.quad();
        for (mean, want) in m.mean.iter().zip(q) {
            assert!((mean - want).abs() < 1.0);
        }
        let sym = m.covariance - m.covariance.transpose();
        assert_eq!(sym.norm(), 0.0);
        assert!(m.covariance.cholesky().is_some());
    }

    #[test]
    fn translation_equivariance() {
        let boxes = [b(10, 10, 20, 20), b(14, 12, 18, 24), b(8, 9, 25, 21)];
        let moved: Vec<BBox> = boxes
            .iter()
            .map(|x| b(x.x + 7, x.y + 3, x.w, x.h))
            .collect();
        let a = fit_location_gaussian(&boxes).unwrap();
        let m = fit_location_gaussian(&moved).unwrap();
        assert!((m.mean[0] - a.mean[0] - 7.0).abs() < 1e-12);
        assert!((m.mean[1] - a.mean[1] - 3.0).abs() < 1e-12);
        assert_eq!(m.mean[2], a.mean[2]);
        assert_eq!(m.covariance, a.covariance);
    }

    fn registry_with_one() -> (ClusterRegistry, u64) {
        let mut reg = ClusterRegistry::new();
        let d = ClusterDescriptor::fit(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            DescriptorOptions::default(),
        )
        .unwrap();
        let a = associate_clusters(vec![d], &mut reg, 0, 2.0).unwrap();
        (reg, a[0].global_id)
    }

    #[test]
    fn offset_round_trip() {
        let (mut reg, id) = registry_with_one();
        let boxes = [b(20, 30, 40, 50), b(22, 28, 36, 54), b(19, 33, 41, 47)];
        let model = fit_location_gaussian(&boxes).unwrap();
        let detected = b(25, 31, 38, 49);
        let d = record_offset(&mut reg, id, &detected, &model).unwrap();
        assert_eq!(reg.get(id).unwrap().offset, Some(d));
        let (back, clamped) = propagate_localization(&model, &d, 200, 200);
        assert_eq!(back, detected);
        assert!(!clamped);
        assert!(record_offset(&mut reg, id + 1, &detected, &model).is_err());

        let at_mean =
            BBox::from_quad_clamped(fit_location_gaussian(&[detected]).unwrap().mean, 200, 200).0;
        let single = fit_location_gaussian(&[detected]).unwrap();
        assert_eq!(location_offset(&at_mean, &single), [0.0; 4]);
        let shifted = b(28, 31, 38, 49);
        assert_eq!(location_offset(&shifted, &single), [3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn translated_cluster_moves_the_box() {
        let boxes = [b(20, 30, 40, 50), b(24, 28, 36, 52)];
        let model = fit_location_gaussian(&boxes).unwrap();
        let detected = b(21, 29, 39, 50);
        let d = location_offset(&detected, &model);
        let moved: Vec<BBox> = boxes.iter().map(|x| b(x.x + 5, x.y, x.w, x.h)).collect();
        let (out, _) =
            propagate_localization(&fit_location_gaussian(&moved).unwrap(), &d, 200, 200);
        assert_eq!(out, b(26, 29, 39, 50));
    }

    #[test]
    fn clamping_is_flagged() {
        let model = fit_location_gaussian(&[b(90, 90, 20, 20)]).unwrap();
        let (out, clamped) = propagate_localization(&model, &[0.0; 4], 100, 100);
        assert!(clamped);
        assert!(out.fits(100, 100));
    }

    #[test]
    fn fraction() {
        let s = DetectStats {
            total_windows: 10,
            classified_windows: 10,
            ..Default::default()
        };
        assert_eq!(classification_fraction(&s).unwrap(), 1.0);
        assert!(classification_fraction(&DetectStats::default()).is_err());
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection {
            frame: 3,
            bbox: b(1, 2, 3, 4),
            class: "red".into(),
            confidence: 0.75,
            provenance: Provenance::Propagated,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"frame":3,"x":1,"y":2,"w":3,"h":4,"class":"red","confidence":0.75,"provenance":"propagated"}"#
        );
        assert_eq!(serde_json::from_str::<Detection>(&s).unwrap(), d);
    }
}
