//! Ground truth and metrics: proposal recall, cluster purity, temporal
//! consistency, detection precision/recall and label agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::purity;
use crate::error::{Error, Result};
use crate::geom::{iou, BBox};
use crate::pipeline::ClusterRecord;
use crate::propagation::Detection;
use crate::proposals::Proposal;

/// IoU at which a prediction counts as matching a ground-truth box.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub id: usize,
    pub class: String,
    #[serde(flatten)]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtFrame {
    pub frame: usize,
    pub objects: Vec<GtObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<GtFrame>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn objects(&self, frame: usize) -> Result<&[GtObject]> {
        self.frames
            .iter()
            .find(|f| f.frame == frame)
            .map(|f| f.objects.as_slice())
            .ok_or_else(|| Error::EvalMismatch(format!("frame {frame} has no ground truth")))
    }

    /// Ground-truth object best matching `b` at IoU >= 0.5.
    fn match_box(&self, frame: usize, b: &BBox) -> Result<Option<usize>> {
        let mut best: Option<(f64, usize)> = None;
        for o in self.objects(frame)? {
            let v = iou(b, &o.bbox);
            if v >= MATCH_IOU && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, o.id));
            }
        }
        Ok(best.map(|(_, id)| id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub n: usize,
    pub recall: f64,
    pub hits: usize,
    pub total: usize,
    /// Recall per ground-truth object id.
    pub per_object: BTreeMap<usize, f64>,
}

/// Fraction of ground-truth (object, frame) pairs covered at IoU >= 0.5 by one
/// of the first `n` proposals of that frame, in input order.
pub fn recall_at(proposals: &[Proposal], gt: &GroundTruth, n: usize) -> Result<RecallReport> {
    let mut by_frame: HashMap<usize, Vec<&BBox>> = HashMap::new();
    for p in proposals {
        gt.objects(p.frame)?;
        let list = by_frame.entry(p.frame).or_default();
        if list.len() < n {
            list.push(&p.bbox);
        }
    }
    let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for f in &gt.frames {
        let boxes = by_frame.get(&f.frame).map(Vec::as_slice).unwrap_or(&[]);
        for o in &f.objects {
            let hit = boxes.iter().any(|b| iou(b, &o.bbox) >= MATCH_IOU);
            let e = per.entry(o.id).or_default();
            e.0 += hit as usize;
            e.1 += 1;
        }
    }
    let hits = per.values().map(|v| v.0).sum();
    let total = per.values().map(|v| v.1).sum();
    Ok(RecallReport {
        n,
        recall: ratio(hits, total),
        hits,
        total,
        per_object: per
            .into_iter()
            .map(|(k, (h, t))| (k, ratio(h, t)))
            .collect(),
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub purity: f64,
    pub clusters: usize,
    pub members: usize,
}

/// Fraction of records whose matched object (or "none") is their global
/// cluster's majority object.
pub fn cluster_purity(records: &[ClusterRecord], gt: &GroundTruth) -> Result<PurityReport> {
    let mut labels = Vec::with_capacity(records.len());
    let mut truth = Vec::with_capacity(records.len());
    for r in records {
        labels.push(r.global_id as usize);
        truth.push(gt.match_box(r.frame, &r.bbox)?.unwrap_or(usize::MAX));
    }
    Ok(PurityReport {
        purity: purity(&labels, &truth),
        clusters: labels.iter().collect::<BTreeSet<_>>().len(),
        members: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Pooled over all (object, visible frame) pairs.
    pub consistency: f64,
    pub per_object: BTreeMap<usize, f64>,
    /// Most frequent per-frame global id of each object.
    pub stable_ids: BTreeMap<usize, Option<u64>>,
}

/// For each object and visible frame, the dominant global id among records
/// matched to it; the fraction of frames agreeing with the object's most
/// frequent id. Frames with no matched record count as disagreeing.
pub fn temporal_consistency(
    records: &[ClusterRecord],
    gt: &GroundTruth,
) -> Result<ConsistencyReport> {
    let mut votes: BTreeMap<(usize, usize), BTreeMap<u64, usize>> = BTreeMap::new();
    for r in records {
        if let Some(obj) = gt.match_box(r.frame, &r.bbox)? {
            *votes
                .entry((obj, r.frame))
                .or_default()
                .entry(r.global_id)
                .or_default() += 1;
        }
    }
    let dominant = |obj: usize, frame: usize| -> Option<u64> {
        let v = votes.get(&(obj, frame))?;
        // ties go to the lower id
        v.iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&id, _)| id)
    };
    let mut frames_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in &gt.frames {
        for o in &f.objects {
            frames_of.entry(o.id).or_default().push(f.frame);
        }
    }
    let (mut agree, mut total) = (0, 0);
    let mut per_object = BTreeMap::new();
    let mut stable_ids = BTreeMap::new();
    for (&obj, frames) in &frames_of {
        let ids: Vec<Option<u64>> = frames.iter().map(|&f| dominant(obj, f)).collect();
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for id in ids.iter().flatten() {
            *counts.entry(*id).or_default() += 1;
        }
        let stable = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&id, _)| id);
        let ok = ids
            .iter()
            .filter(|id| id.is_some() && **id == stable)
            .count();
        per_object.insert(obj, ratio(ok, ids.len()));
        stable_ids.insert(obj, stable);
        agree += ok;
        total += ids.len();
    }
    Ok(ConsistencyReport {
        consistency: ratio(agree, total),
        per_object,
        stable_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

impl ClassMetrics {
    fn finish(&mut self) {
        let predicted = self.true_positives + self.false_positives;
        // no predictions means no false positives
        self.precision = if predicted == 0 {
            1.0
        } else {
            ratio(self.true_positives, predicted)
        };
        self.recall = ratio(
            self.true_positives,
            self.true_positives + self.false_negatives,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub overall: ClassMetrics,
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Fraction of frames whose set of detected classes equals the set of
    /// ground-truth classes.
    pub frame_label_accuracy: f64,
}

/// Greedy matching per frame and class: detections in descending confidence
/// take the unmatched ground-truth box of highest IoU >= 0.5.
pub fn detection_metrics(detections: &[Detection], gt: &GroundTruth) -> Result<DetectionReport> {
    let mut by_frame: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        gt.objects(d.frame)?;
        by_frame.entry(d.frame).or_default().push(d);
    }
    let mut per_class: BTreeMap<String, ClassMetrics> = BTreeMap::new();
    let mut frames_ok = 0;
    for f in &gt.frames {
        let mut dets = by_frame.remove(&f.frame).unwrap_or_default();
        dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        let mut used = vec![false; f.objects.len()];
        for d in &dets {
            let best = f
                .objects
                .iter()
                .enumerate()
                .filter(|(i, o)| !used[*i] && o.class == d.class)
                .map(|(i, o)| (i, iou(&d.bbox, &o.bbox)))
                .filter(|(_, v)| *v >= MATCH_IOU)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let m = per_class.entry(d.class.clone()).or_default();
            match best {
                Some((i, _)) => {
                    used[i] = true;
                    m.true_positives += 1;
                }
                None => m.false_positives += 1,
            }
        }
        for (o, _) in f.objects.iter().zip(&used).filter(|(_, u)| !**u) {
            per_class
                .entry(o.class.clone())
                .or_default()
                .false_negatives += 1;
        }
        let predicted: BTreeSet<&str> = dets.iter().map(|d| d.class.as_str()).collect();
        let truth: BTreeSet<&str> = f.objects.iter().map(|o| o.class.as_str()).collect();
        frames_ok += (predicted == truth) as usize;
    }
    let mut overall = ClassMetrics::default();
    for m in per_class.values_mut() {
        m.finish();
        overall.true_positives += m.true_positives;
        overall.false_positives += m.false_positives;
        overall.false_negatives += m.false_negatives;
    }
    overall.finish();
    Ok(DetectionReport {
        overall,
        per_class,
        frame_label_accuracy: ratio(frames_ok, gt.frames.len()),
    })
}

/// Fraction of frames `0..frames` on which both runs detect the same set of classes.
pub fn label_agreement(a: &[Detection], b: &[Detection], frames: usize) -> f64 {
    let sets = |ds: &[Detection]| {
        let mut v = vec![BTreeSet::new(); frames];
        for d in ds.iter().filter(|d| d.frame < frames) {
            v[d.frame].insert(d.class.clone());
        }
        v
    };
    let (sa, sb) = (sets(a), sets(b));
    ratio(sa.iter().zip(&sb).filter(|(x, y)| x == y).count(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::Provenance;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn gt() -> GroundTruth {
        GroundTruth {
            width: 100,
            height: 100,
            frames: (0..3)
                .map(|t| GtFrame {
                    frame: t,
                    objects: vec![
                        GtObject {
                            id: 0,
                            class: "red".into(),
                            bbox: b(10 + t as u32, 10, 20, 20),
                        },
                        GtObject {
                            id: 1,
                            class: "blue".into(),
                            bbox: b(60, 60, 30, 30),
                        },
                    ],
                })
                .collect(),
        }
    }

    fn perfect_detections(g: &GroundTruth) -> Vec<Detection> {
        g.frames
            .iter()
            .flat_map(|f| {
                f.objects.iter().map(move |o| Detection {
                    frame: f.frame,
                    bbox: o.bbox,
                    class: o.class.clone(),
                    confidence: 0.9,
                    provenance: Provenance::Classified,
                })
            })
            .collect()
    }

    #[test]
    fn recall_of_ground_truth_and_empty() {
        let g = gt();
        let props: Vec<Proposal> = g
            .frames
            .iter()
            .flat_map(|f| {
                f.objects.iter().map(move |o| Proposal {
                    frame: f.frame,
                    bbox: o.bbox,
                    score: 1.0,
                })
            })
            .collect();
        assert_eq!(recall_at(&props, &g, 10).unwrap().recall, 1.0);
        assert_eq!(recall_at(&[], &g, 10).unwrap().recall, 0.0);
        // only the first proposal per frame counts at n = 1
        let r = recall_at(&props, &g, 1).unwrap();
        assert_eq!(r.per_object[&0], 1.0);
        assert_eq!(r.per_object[&1], 0.0);
        let stray = Proposal {
            frame: 9,
            bbox: b(0, 0, 5, 5),
            score: 1.0,
        };
        assert!(recall_at(&[stray], &g, 1).is_err());
    }

    #[test]
    fn recall_grows_with_n() {
        let g = gt();
        let props: Vec<Proposal> = (0..3)
            .flat_map(|t| {
                [
                    b(0, 0, 5, 5),
                    b(60, 60, 30, 30),
                    b(40, 40, 5, 5),
                    b(10 + t, 10, 20, 20),
                ]
                .into_iter()
                .map(move |bb| Proposal {
                    frame: t as usize,
                    bbox: bb,
                    score: 0.0,
                })
            })
            .collect();
        let r: Vec<f64> = (1..=4)
            .map(|n| recall_at(&props, &g, n).unwrap().recall)
            .collect();
        assert_eq!(r, vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn detection_precision_recall() {
        let g = gt();
        let dets = perfect_detections(&g);
        let r = detection_metrics(&dets, &g).unwrap();
        assert_eq!(r.overall.precision, 1.0);
        assert_eq!(r.overall.recall, 1.0);
        assert_eq!(r.frame_label_accuracy, 1.0);

        let mut wrong = dets.clone();
        wrong[0].class = "green".into();
        let r = detection_metrics(&wrong, &g).unwrap();
        assert_eq!(r.per_class["green"].false_positives, 1);
        assert_eq!(r.per_class["red"].false_negatives, 1);
        assert!((r.frame_label_accuracy - 2.0 / 3.0).abs() < 1e-12);

        let r = detection_metrics(&[], &g).unwrap();
        assert_eq!(r.overall.recall, 0.0);
    }

    fn record(frame: usize, bbox: BBox, id: u64) -> ClusterRecord {
        ClusterRecord {
            frame,
            bbox,
            local_cluster: 0,
            global_id: id,
        }
    }

    #[test]
    fn purity_one_in_ten() {
        let g = gt();
        let mut recs: Vec<ClusterRecord> =
            (0..5).map(|_| record(0, b(10, 10, 20, 20), 1)).collect();
        recs.extend((0..5).map(|_| record(0, b(60, 60, 30, 30), 2)));
        recs[4].bbox = b(60, 60, 30, 30);
        let p = cluster_purity(&recs, &g).unwrap();
        assert!((p.purity - 0.9).abs() < 1e-12);
        assert_eq!(p.clusters, 2);
    }

    #[test]
    fn consistency_counts_switches_and_gaps() {
        let g = gt();
        let mut recs = Vec::new();
        for t in 0..3 {
            recs.push(record(t, b(10 + t as u32, 10, 20, 20), 7));
            recs.push(record(t, b(60, 60, 30, 30), if t == 2 { 9 } else { 8 }));
        }
        let c = temporal_consistency(&recs, &g).unwrap();
        assert_eq!(c.per_object[&0], 1.0);
        assert!((c.per_object[&1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.stable_ids[&1], Some(8));
        recs.retain(|r| !(r.frame == 1 && r.global_id == 7));
        let c = temporal_consistency(&recs, &g).unwrap();
        assert!((c.per_object[&0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn agreement() {
        let g = gt();
        let a = perfect_detections(&g);
        assert_eq!(label_agreement(&a, &a, 3), 1.0);
        let b: Vec<Detection> = a.iter().filter(|d| d.frame != 1).cloned().collect();
        assert!((label_agreement(&a, &b, 3) - 2.0 / 3.0).abs() < 1e-12);
    }
}
