//! The streaming driver: per-frame edges and motion masks, per-sub-sequence
//! proposals, clustering and association, and the classify-or-propagate loop.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::affinity::{
    affinity_matrix, collect_pairs, extract_features, fit_density, uniform_affinity, DensityOptions,
};
use crate::clustering::{
    associate_clusters, distances_from_affinity, make_subsequences, spectral_cluster_fixed,
    spectral_cluster_selftune, Association, ClusterDescriptor, ClusterLabel, ClusterRegistry,
    DescriptorOptions,
};
use crate::config::{ClassifierSpec, ClusterCount, PipelineConfig};
use crate::edges::{combine_edges, spatial_edge, EdgeMap, SPATIAL_SIGMA};
use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::geom::{iou, BBox};
use crate::image::{read_pgm, read_ppm, RgbImage};
use crate::motion::{
    accumulate_prior, block_matching_flow, inside_outside_map, load_flow, motion_boundary,
    temporal_edge, FlowField, LocationPrior,
};
use crate::par::{map_range, Execution};
use crate::propagation::{
    fit_location_gaussian, propagate_localization, record_offset, Classifier, DetectStats,
    Detection, FrameRef, Provenance,
};
use crate::proposals::{generate_proposals, Proposal, ScoringContext};
use crate::segmentation::connected_components;

/// Frames (already resized for processing) plus optional precomputed inputs.
#[derive(Debug, Clone)]
pub struct Video {
    pub frames: Vec<RgbImage>,
    pub paths: Vec<Option<PathBuf>>,
    /// Size of the frames before resizing; outputs are reported in it.
    pub original_dims: (usize, usize),
    /// Flow from frame `t` to `t + 1`, at processing size.
    pub flows: Option<Vec<FlowField>>,
    /// Spatial edge magnitudes replacing the built-in detector, at processing size.
    pub spatial_edges: Option<Vec<Field2D>>,
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn missing(dir: &Path, what: &str) -> Error {
    Error::io(
        dir,
        std::io::Error::new(std::io::ErrorKind::NotFound, what.to_string()),
    )
}

impl Video {
    /// Frames already at processing size.
    pub fn from_frames(frames: Vec<RgbImage>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::param("frames", "a video needs at least one frame"))?;
        let dims = first.dims();
        if let Some(f) = frames.iter().find(|f| f.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: f.dims(),
            });
        }
        Ok(Video {
            paths: vec![None; frames.len()],
            frames,
            original_dims: dims,
            flows: None,
            spatial_edges: None,
        })
    }

    /// Attaches `len - 1` flow fields of the frames' size.
    pub fn with_flows(mut self, flows: Vec<FlowField>) -> Result<Self> {
        if flows.len() + 1 != self.len() {
            return Err(Error::param(
                "flows",
                format!(
                    "{} fields for {} frames; need one per consecutive pair",
                    flows.len(),
                    self.len()
                ),
            ));
        }
        for f in &flows {
            if f.dims() != self.dims() {
                return Err(Error::DimensionMismatch {
                    expected: self.dims(),
                    actual: f.dims(),
                });
            }
        }
        self.flows = Some(flows);
        Ok(self)
    }

    /// Reads `*.ppm` frames (sorted by name) and optional `*.flo` flows and
    /// `*.pgm` edge maps, resizing everything to `resize`.
    pub fn load(
        frames_dir: &Path,
        flow_dir: Option<&Path>,
        edges_dir: Option<&Path>,
        resize: Option<[usize; 2]>,
    ) -> Result<Self> {
        let paths = list_files(frames_dir, "ppm")?;
        if paths.is_empty() {
            return Err(missing(frames_dir, "no .ppm frames"));
        }
        let raw: Vec<RgbImage> = paths.iter().map(|p| read_ppm(p)).collect::<Result<_>>()?;
        let original = raw[0].dims();
        if let Some(f) = raw.iter().find(|f| f.dims() != original) {
            return Err(Error::DimensionMismatch {
                expected: original,
                actual: f.dims(),
            });
        }
        let (w, h) = resize.map_or(original, |[w, h]| (w, h));
        let frames: Vec<RgbImage> = raw.iter().map(|f| f.resize_nearest(w, h)).collect();
        let n = frames.len();
        let flows = match flow_dir {
            None => None,
            Some(dir) => {
                let files = list_files(dir, "flo")?;
                if files.len() + 1 < n {
                    return Err(missing(
                        dir,
                        &format!("{} .flo files for {n} frames", files.len()),
                    ));
                }
                let flows = files
                    .iter()
                    .take(n - 1)
                    .map(|p| load_flow(p, Some(original)).map(|f| f.resize_nearest(w, h)))
                    .collect::<Result<Vec<_>>>()?;
                Some(flows)
            }
        };
        let spatial_edges = match edges_dir {
            None => None,
            Some(dir) => {
                let files = list_files(dir, "pgm")?;
                if files.len() < n {
                    return Err(missing(
                        dir,
                        &format!("{} .pgm edge maps for {n} frames", files.len()),
                    ));
                }
                let maps = files
                    .iter()
                    .take(n)
                    .map(|p| {
                        let m = read_pgm(p)?;
                        if m.dims() != original {
                            return Err(Error::DimensionMismatch {
                                expected: original,
                                actual: m.dims(),
                            });
                        }
                        Ok(m.resize_nearest(w, h))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(maps)
            }
        };
        Ok(Video {
            frames,
            paths: paths.into_iter().map(Some).collect(),
            original_dims: original,
            flows,
            spatial_edges,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Processing size.
    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// Maps a box at processing size back to the original frame size.
    pub fn to_original(&self, b: &BBox) -> BBox {
        let (w, h) = self.dims();
        if (w, h) == self.original_dims {
            return *b;
        }
        b.rescale(
            self.original_dims.0 as f64 / w as f64,
            self.original_dims.1 as f64 / h as f64,
        )
    }

    fn frame_ref(&self, t: usize) -> FrameRef<'_> {
        FrameRef {
            index: t,
            image: &self.frames[t],
            path: self.paths[t].as_deref(),
            original_dims: self.original_dims,
        }
    }
}

/// Cluster assignment of one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub frame: usize,
    #[serde(flatten)]
    pub bbox: BBox,
    pub local_cluster: usize,
    pub global_id: u64,
}

/// How a local cluster of one sub-sequence was matched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub step: usize,
    pub local_cluster: usize,
    pub global_id: u64,
    pub is_new: bool,
    pub kl: Option<f64>,
}

/// One classifier invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub step: usize,
    pub frame: usize,
    /// Global ids whose windows were in the batch.
    pub clusters: Vec<u64>,
    pub boxes: usize,
}

/// Everything computed for one sub-sequence, at processing size.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub step: usize,
    pub frames: Range<usize>,
    /// Frames reported by this step; the overlap frame belongs to the previous one.
    pub output_frames: Range<usize>,
    /// Proposals of every frame in `frames`, frame by frame.
    pub proposals: Vec<Proposal>,
    /// Local cluster per proposal.
    pub labels: Vec<usize>,
    /// Association per local cluster.
    pub associations: Vec<Association>,
}

impl StepResult {
    /// Proposal indices per local cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.associations.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    fn records(&self, video: &Video) -> Vec<ClusterRecord> {
        self.proposals
            .iter()
            .zip(&self.labels)
            .filter(|(p, _)| self.output_frames.contains(&p.frame))
            .map(|(p, &l)| ClusterRecord {
                frame: p.frame,
                bbox: video.to_original(&p.bbox),
                local_cluster: l,
                global_id: self.associations[l].global_id,
            })
            .collect()
    }

    fn association_records(&self) -> Vec<AssociationRecord> {
        self.associations
            .iter()
            .enumerate()
            .map(|(l, a)| AssociationRecord {
                step: self.step,
                local_cluster: l,
                global_id: a.global_id,
                is_new: a.is_new,
                kl: a.kl,
            })
            .collect()
    }
}

/// Per-frame inputs that do not depend on the sub-sequence.
struct FrameCache {
    spatial: Vec<EdgeMap>,
    masks: Vec<Field2D>,
}

fn frame_cache(video: &Video, cfg: &PipelineConfig) -> Result<FrameCache> {
    let n = video.len();
    let boundary = cfg.boundary_params();
    // frames fan out; work inside a frame stays sequential
    let per_frame: Vec<Result<(EdgeMap, Field2D)>> = map_range(cfg.execution, n, |t| {
        let mut es = spatial_edge(&video.frames[t], SPATIAL_SIGMA);
        if let Some(maps) = &video.spatial_edges {
            es = es.with_magnitude(maps[t].clone())?;
        }
        // the last frame reuses the flow into it
        let (a, b) = if t + 1 < n { (t, t + 1) } else { (t - 1, t) };
        let flow = match &video.flows {
            Some(f) => f[a].clone(),
            None => block_matching_flow(
                &video.frames[a],
                &video.frames[b],
                cfg.flow_radius,
                cfg.flow_block,
                Execution::Sequential,
            )?,
        };
        let mask = inside_outside_map(&motion_boundary(&flow, &boundary), boundary.threshold);
        Ok((es, mask))
    });
    let mut spatial = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for r in per_frame {
        let (e, m) = r?;
        spatial.push(e);
        masks.push(m);
    }
    Ok(FrameCache { spatial, masks })
}

/// Connected regions of a motion prior covering at least half of `min_area`
/// pixels; never fewer than one. Static objects add no region.
pub fn motion_regions(prior: &LocationPrior, min_area: u32) -> usize {
    let (_, sizes) = connected_components(&prior.field);
    let min = (min_area as usize).div_ceil(2);
    sizes.iter().filter(|&&s| s >= min).count().max(1)
}

/// Walks a video sub-sequence by sub-sequence, carrying the cluster registry.
pub struct Streamer<'a> {
    video: &'a Video,
    cfg: &'a PipelineConfig,
    cache: FrameCache,
    ranges: Vec<Range<usize>>,
    registry: ClusterRegistry,
    next: usize,
}

impl<'a> Streamer<'a> {
    pub fn new(video: &'a Video, cfg: &'a PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let ranges = make_subsequences(video.len(), cfg.subseq_len)?;
        let cache = frame_cache(video, cfg)?;
        Ok(Streamer {
            video,
            cfg,
            cache,
            ranges,
            registry: ClusterRegistry::new(),
            next: 0,
        })
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn registry(&self) -> &ClusterRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut ClusterRegistry {
        &mut self.registry
    }

    fn output_frames(&self, step: usize) -> Range<usize> {
        let r = &self.ranges[step];
        if step == 0 {
            r.clone()
        } else {
            r.start + 1..r.end
        }
    }

    /// Motion location prior of sub-sequence `step`.
    pub fn prior(&self, step: usize) -> Result<LocationPrior> {
        let range = self.ranges[step].clone();
        accumulate_prior(&self.cache.masks[range.clone()], range.start)
    }

    /// Ranked proposals for every frame of sub-sequence `step`.
    pub fn proposals(&self, step: usize) -> Result<Vec<Proposal>> {
        self.proposals_with(step, &self.prior(step)?)
    }

    fn proposals_with(&self, step: usize, prior: &LocationPrior) -> Result<Vec<Proposal>> {
        let range = self.ranges[step].clone();
        let temporal = temporal_edge(prior);
        let params = self.cfg.proposal_params();
        let mut out = Vec::new();
        for t in range {
            let e = combine_edges(&self.cache.spatial[t], &temporal, self.cfg.lambda)?;
            let ctx = ScoringContext::new(&e, params.magnitude_threshold, params.affinity_gamma)?;
            out.extend(generate_proposals(&ctx, &params, t, self.cfg.execution)?);
        }
        Ok(out)
    }

    fn affinity(&self, proposals: &[Proposal]) -> Result<(Vec<Vec<f64>>, DMatrix<f64>)> {
        let exec = self.cfg.execution;
        let features = map_range(exec, proposals.len(), |i| {
            extract_features(&self.video.frames[proposals[i].frame], &proposals[i].bbox)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let boxes: Vec<BBox> = proposals.iter().map(|p| p.bbox).collect();
        let pairs = collect_pairs(&boxes);
        let opts = DensityOptions {
            max_pairs: self.cfg.max_pairs,
            ..DensityOptions::default()
        };
        let w = match fit_density(&features, &pairs, &opts) {
            Ok(model) => affinity_matrix(&features, &boxes, &model, self.cfg.rho, exec)?,
            Err(Error::TooFewPairs(n)) => {
                log::warn!("{n} overlapping pairs; using uniform affinity");
                uniform_affinity(&boxes)
            }
            Err(e) => return Err(e),
        };
        Ok((features.iter().map(|f| f.scaled()).collect(), w))
    }

    fn cluster(&self, w: &DMatrix<f64>, prior: &LocationPrior, step: usize) -> Result<Vec<usize>> {
        let seed = self.cfg.seed.wrapping_add(step as u64);
        match self.cfg.k {
            ClusterCount::Fixed(k) => spectral_cluster_fixed(w, k, seed),
            ClusterCount::Auto => {
                Ok(spectral_cluster_selftune(&distances_from_affinity(w), seed)?.labels)
            }
            ClusterCount::Motion => {
                spectral_cluster_fixed(w, motion_regions(prior, self.cfg.min_box_area), seed)
            }
        }
    }

    /// Processes the next sub-sequence; `None` once the video is exhausted.
    pub fn step(&mut self) -> Option<Result<StepResult>> {
        let step = self.next;
        if step >= self.ranges.len() {
            return None;
        }
        self.next += 1;
        Some(self.run_step(step))
    }

    fn run_step(&mut self, step: usize) -> Result<StepResult> {
        let prior = self.prior(step)?;
        let proposals = self.proposals_with(step, &prior)?;
        let (labels, descriptors) = if proposals.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let (scaled, w) = self.affinity(&proposals)?;
            let labels = self.cluster(&w, &prior, step)?;
            let count = labels.iter().max().map_or(0, |m| m + 1);
            let mut members = vec![Vec::new(); count];
            for (f, &l) in scaled.into_iter().zip(&labels) {
                members[l].push(f);
            }
            let descriptors = map_range(self.cfg.execution, count, |c| {
                ClusterDescriptor::fit(members[c].clone(), DescriptorOptions::default())
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            (labels, descriptors)
        };
        let associations =
            associate_clusters(descriptors, &mut self.registry, step, self.cfg.tau_kl)?;
        Ok(StepResult {
            step,
            frames: self.ranges[step].clone(),
            output_frames: self.output_frames(step),
            proposals,
            labels,
            associations,
        })
    }
}

/// Ranked proposals per frame, each frame taken from the first sub-sequence
/// containing it, in original frame coordinates.
pub fn propose(video: &Video, cfg: &PipelineConfig) -> Result<Vec<Proposal>> {
    let s = Streamer::new(video, cfg)?;
    let mut out = Vec::new();
    for step in 0..s.ranges().len() {
        let frames = s.output_frames(step);
        out.extend(
            s.proposals(step)?
                .into_iter()
                .filter(|p| frames.contains(&p.frame))
                .map(|p| Proposal {
                    bbox: video.to_original(&p.bbox),
                    ..p
                }),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ClusterRun {
    pub records: Vec<ClusterRecord>,
    pub associations: Vec<AssociationRecord>,
    pub clusters_created: u64,
}

/// Streaming clustering without classification.
pub fn cluster_stream(video: &Video, cfg: &PipelineConfig) -> Result<ClusterRun> {
    let mut s = Streamer::new(video, cfg)?;
    let mut run = ClusterRun::default();
    while let Some(r) = s.step() {
        let r = r?;
        run.records.extend(r.records(video));
        run.associations.extend(r.association_records());
    }
    run.clusters_created = s.registry().created();
    Ok(run)
}

#[derive(Debug, Default)]
pub struct DetectRun {
    pub detections: Vec<Detection>,
    pub records: Vec<ClusterRecord>,
    pub associations: Vec<AssociationRecord>,
    pub calls: Vec<CallRecord>,
    pub stats: DetectStats,
    /// Set when processing stopped early; everything above covers the
    /// sub-sequences finished before it.
    pub aborted: Option<Error>,
}

/// Detection with classification only for clusters that are new (or for
/// every cluster when the configured classifier is `always`).
pub fn detect_stream(
    video: &Video,
    cfg: &PipelineConfig,
    classifier: &mut dyn Classifier,
) -> Result<DetectRun> {
    let mut s = Streamer::new(video, cfg)?;
    let classify_every = cfg.classifier == ClassifierSpec::Always;
    let mut run = DetectRun::default();
    while let Some(r) = s.step() {
        let outcome = r.and_then(|r| {
            detect_step(
                video,
                cfg,
                &r,
                s.registry_mut(),
                classifier,
                classify_every,
                &mut run,
            )
            .map(|()| r)
        });
        match outcome {
            Ok(r) => {
                run.records.extend(r.records(video));
                run.associations.extend(r.association_records());
            }
            Err(e) => {
                log::error!("stopping early: {e}");
                run.aborted = Some(e);
                break;
            }
        }
    }
    run.stats.clusters_created = s.registry().created();
    if run.stats.total_windows > 0 {
        run.stats.fraction = run.stats.classified_windows as f64 / run.stats.total_windows as f64;
    }
    Ok(run)
}

fn argmax_by(items: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    // first maximum wins
    items.fold(None, |best, (i, v)| match best {
        Some((_, bv)) if bv >= v => best,
        _ => Some((i, v)),
    })
}

fn detect_step(
    video: &Video,
    cfg: &PipelineConfig,
    r: &StepResult,
    registry: &mut ClusterRegistry,
    classifier: &mut dyn Classifier,
    classify_every: bool,
    run: &mut DetectRun,
) -> Result<()> {
    let (w, h) = video.dims();
    let members = r.members();
    let classify: Vec<bool> = r
        .associations
        .iter()
        .map(|a| a.is_new || classify_every)
        .collect();
    let n_classes = classifier.classes().len();

    let mut scores: Vec<Option<Vec<f64>>> = vec![None; r.proposals.len()];
    let mut calls = Vec::new();
    for t in r.frames.clone() {
        let idx: Vec<usize> = (0..r.proposals.len())
            .filter(|&i| r.proposals[i].frame == t && classify[r.labels[i]])
            .collect();
        if idx.is_empty() {
            continue;
        }
        let boxes: Vec<BBox> = idx.iter().map(|&i| r.proposals[i].bbox).collect();
        let out = classifier.classify(video.frame_ref(t), &boxes)?;
        if out.len() != boxes.len() || out.iter().any(|s| s.len() != n_classes) {
            return Err(Error::Classifier(format!(
                "frame {t}: expected {} score vectors of length {n_classes}",
                boxes.len()
            )));
        }
        for (&i, s) in idx.iter().zip(out) {
            scores[i] = Some(s);
        }
        let clusters: BTreeSet<u64> = idx
            .iter()
            .map(|&i| r.associations[r.labels[i]].global_id)
            .collect();
        calls.push(CallRecord {
            step: r.step,
            frame: t,
            clusters: clusters.into_iter().collect(),
            boxes: boxes.len(),
        });
    }

    let classes = classifier.classes().to_vec();
    let mut detections = Vec::new();
    let mut classified_windows = 0;
    for (c, assoc) in r.associations.iter().enumerate() {
        let m = &members[c];
        let gid = assoc.global_id;
        let frame_boxes = |t: usize| -> Vec<BBox> {
            m.iter()
                .filter(|&&i| r.proposals[i].frame == t)
                .map(|&i| r.proposals[i].bbox)
                .collect()
        };
        if classify[c] {
            classified_windows += m.len();
            let sc = |i: usize| scores[i].as_ref().expect("classified windows have scores");
            let pooled: Vec<f64> = (0..n_classes)
                .map(|k| m.iter().map(|&i| sc(i)[k]).fold(0.0, f64::max))
                .collect();
            let label = match argmax_by(pooled.iter().copied().enumerate().skip(1)) {
                Some((k, v)) if v >= cfg.confidence_threshold => ClusterLabel {
                    class: k,
                    confidence: v,
                },
                _ => ClusterLabel {
                    class: 0,
                    confidence: pooled.first().copied().unwrap_or(0.0),
                },
            };
            let top_of = |cands: &mut dyn Iterator<Item = usize>| {
                argmax_by(cands.map(|i| (i, sc(i)[label.class]))).map(|(i, _)| i)
            };
            let top = top_of(&mut m.iter().copied()).expect("clusters have members");
            let model = fit_location_gaussian(&frame_boxes(r.proposals[top].frame))?;
            record_offset(registry, gid, &r.proposals[top].bbox, &model)?;
            registry.get_mut(gid)?.label = Some(label);
            if label.class == 0 {
                continue;
            }
            for t in r.output_frames.clone() {
                if let Some(i) =
                    top_of(&mut m.iter().copied().filter(|&i| r.proposals[i].frame == t))
                {
                    detections.push(Detection {
                        frame: t,
                        bbox: r.proposals[i].bbox,
                        class: classes[label.class].clone(),
                        confidence: label.confidence,
                        provenance: Provenance::Classified,
                    });
                }
            }
        } else {
            let entry = registry.get_mut(gid)?;
            let (Some(label), Some(d)) = (entry.label, entry.offset) else {
                log::warn!("cluster {gid} was associated without a label");
                continue;
            };
            if label.class == 0 {
                continue;
            }
            for t in r.output_frames.clone() {
                let boxes = frame_boxes(t);
                if boxes.is_empty() {
                    continue;
                }
                let model = fit_location_gaussian(&boxes)?;
                let (bbox, _) = propagate_localization(&model, &d, w, h);
                detections.push(Detection {
                    frame: t,
                    bbox,
                    class: classes[label.class].clone(),
                    confidence: label.confidence,
                    provenance: Provenance::Propagated,
                });
            }
        }
    }

    run.stats.total_windows += r.proposals.len();
    run.stats.classified_windows += classified_windows;
    run.calls.extend(calls);
    for t in r.output_frames.clone() {
        let frame: Vec<Detection> = detections
            .iter()
            .filter(|d| d.frame == t)
            .cloned()
            .collect();
        run.detections.extend(
            detection_nms(frame, cfg.detection_nms_beta)
                .into_iter()
                .map(|d| Detection {
                    bbox: video.to_original(&d.bbox),
                    ..d
                }),
        );
    }
    Ok(())
}

/// Greedy NMS over one frame's detections in descending confidence (stable).
pub fn detection_nms(mut dets: Vec<Detection>, beta: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for d in dets {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= beta) {
            kept.push(d);
        }
    }
    kept
}
