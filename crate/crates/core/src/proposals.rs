//! Edge-group box scoring, sliding-window enumeration, refinement and NMS.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::edges::{edge_groups, EdgeGroup, EdgeMap, DEFAULT_MAGNITUDE_THRESHOLD};
use crate::error::{Error, Result};
use crate::field::{Field2D, IntegralImage};
use crate::geom::{iou, BBox};
use crate::par::{map_range, Execution};

/// A scored candidate box in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub frame: usize,
    #[serde(flatten)]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalParams {
    pub max_proposals: usize,
    /// Target IoU between neighbouring sliding-window candidates.
    pub step_iou: f64,
    /// NMS overlap: a box is dropped when its IoU with a kept box exceeds this.
    pub nms_beta: f64,
    /// Perimeter normalization exponent.
    pub kappa: f64,
    pub min_box_area: u32,
    pub max_aspect_ratio: f64,
    pub min_score: f64,
    pub magnitude_threshold: f32,
    /// Exponent on the pairwise group affinity.
    pub affinity_gamma: f64,
}

impl Default for ProposalParams {
    fn default() -> Self {
        ProposalParams {
            max_proposals: 500,
            step_iou: 0.65,
            nms_beta: 0.75,
            kappa: 1.5,
            min_box_area: 1000,
            max_aspect_ratio: 3.0,
            min_score: 0.01,
            magnitude_threshold: DEFAULT_MAGNITUDE_THRESHOLD,
            affinity_gamma: 2.0,
        }
    }
}

impl ProposalParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_proposals == 0 {
            return Err(Error::param("max_proposals", "must be at least 1"));
        }
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.step_iou) {
            return Err(Error::param(
                "step_iou",
                format!("{} is outside (0, 1)", self.step_iou),
            ));
        }
        if !open_unit(self.nms_beta) {
            return Err(Error::param(
                "nms_beta",
                format!("{} is outside (0, 1)", self.nms_beta),
            ));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::param("kappa", "must be finite and non-negative"));
        }
        if self.max_aspect_ratio.is_nan() || self.max_aspect_ratio < 1.0 {
            return Err(Error::param("max_aspect_ratio", "must be at least 1"));
        }
        if self.magnitude_threshold.is_nan() || self.magnitude_threshold < 0.0 {
            return Err(Error::param("magnitude_threshold", "must be non-negative"));
        }
        Ok(())
    }
}

const GRID_CELL: usize = 16;

/// Per-frame structures shared by every box scored on that frame.
#[derive(Debug, Clone)]
pub struct ScoringContext {
    width: usize,
    height: usize,
    groups: Vec<EdgeGroup>,
    /// Adjacent groups with their pairwise affinity.
    neighbours: Vec<Vec<(usize, f64)>>,
    /// Supra-threshold magnitudes, for the centre-box penalty.
    magnitude_ii: IntegralImage,
    grid_w: usize,
    grid: Vec<Vec<usize>>,
}

impl ScoringContext {
    /// Groups the edge map and precomputes adjacency and integral images.
    pub fn new(edges: &EdgeMap, threshold: f32, gamma: f64) -> Result<Self> {
        let groups = edge_groups(&edges.magnitude, &edges.orientation, threshold);
        Self::from_groups(&edges.magnitude, threshold, groups, gamma)
    }

    /// Builds the context around an existing grouping of `magnitude`.
    pub fn from_groups(
        magnitude: &Field2D,
        threshold: f32,
        groups: Vec<EdgeGroup>,
        gamma: f64,
    ) -> Result<Self> {
        let (w, h) = magnitude.dims();
        let kept = magnitude.map(|v| if v > threshold { v } else { 0.0 });
        let magnitude_ii = IntegralImage::new(&kept)?;

        let mut label = vec![usize::MAX; w * h];
        for (gi, g) in groups.iter().enumerate() {
            for &(x, y) in &g.pixels {
                label[y as usize * w + x as usize] = gi;
            }
        }
        let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
        for y in 0..h {
            for x in 0..w {
                let a = label[y * w + x];
                if a == usize::MAX {
                    continue;
                }
                // half of the 8-neighbourhood; the pair is recorded both ways
                for (dx, dy) in [(1isize, 0isize), (-1, 1), (0, 1), (1, 1)] {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let b = label[ny as usize * w + nx as usize];
                    if b != usize::MAX && b != a {
                        adjacent[a].push(b);
                        adjacent[b].push(a);
                    }
                }
            }
        }
        let neighbours = adjacent
            .into_iter()
            .enumerate()
            .map(|(i, mut adj)| {
                adj.sort_unstable();
                adj.dedup();
                adj.into_iter()
                    .map(|j| (j, group_affinity(&groups[i], &groups[j], gamma)))
                    .collect()
            })
            .collect();

        let grid_w = w.div_ceil(GRID_CELL);
        let grid_h = h.div_ceil(GRID_CELL);
        let mut grid = vec![Vec::new(); grid_w * grid_h];
        for (gi, g) in groups.iter().enumerate() {
            let b = &g.bbox;
            for cy in b.y as usize / GRID_CELL..=(b.y2() as usize - 1) / GRID_CELL {
                for cx in b.x as usize / GRID_CELL..=(b.x2() as usize - 1) / GRID_CELL {
                    grid[cy * grid_w + cx].push(gi);
                }
            }
        }
        Ok(ScoringContext {
            width: w,
            height: h,
            groups,
            neighbours,
            magnitude_ii,
            grid_w,
            grid,
        })
    }

    pub fn groups(&self) -> &[EdgeGroup] {
        &self.groups
    }

    /// Adjacent groups of group `i` with their affinities.
    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbours[i]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Sum of supra-threshold magnitudes over `b`.
    pub fn magnitude_sum(&self, b: &BBox) -> Result<f64> {
        self.magnitude_ii.box_sum(b)
    }

    fn groups_touching(&self, b: &BBox, out: &mut Vec<usize>) {
        out.clear();
        let x1 = (b.x2() as usize - 1) / GRID_CELL;
        let y1 = (b.y2() as usize - 1) / GRID_CELL;
        for cy in b.y as usize / GRID_CELL..=y1 {
            for cx in b.x as usize / GRID_CELL..=x1 {
                for &gi in &self.grid[cy * self.grid_w + cx] {
                    if self.groups[gi].bbox.intersection_area(b) > 0 {
                        out.push(gi);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Per-group weights for `b`: 0 outside or straddling, `1 - path affinity`
    /// inside. Returned as `(group, weight)` for groups touching the box.
    pub fn group_weights(&self, b: &BBox) -> Result<Vec<(usize, f64)>> {
        b.ensure_within(self.width, self.height)?;
        let mut touching = Vec::new();
        self.groups_touching(b, &mut touching);
        Ok(self.weights_for(b, &touching))
    }

    fn weights_for(&self, b: &BBox, touching: &[usize]) -> Vec<(usize, f64)> {
        // state: 0 = straddling, 1 = inside
        let inner = interior(b);
        let mut best: Vec<(usize, f64, bool)> = touching
            .iter()
            .map(|&gi| {
                let inside = inner.is_some_and(|ib| ib.contains(&self.groups[gi].bbox));
                (gi, if inside { 0.0 } else { 1.0 }, inside)
            })
            .collect();
        let pos = |gi: usize| touching.binary_search(&gi).ok();

        // max-product paths from straddling groups through inside groups
        let mut heap: BinaryHeap<Reach> = best
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.2)
            .map(|(slot, _)| Reach { value: 1.0, slot })
            .collect();
        let mut done = vec![false; best.len()];
        while let Some(Reach { value, slot }) = heap.pop() {
            if done[slot] {
                continue;
            }
            done[slot] = true;
            for &(nj, a) in &self.neighbours[best[slot].0] {
                let Some(ns) = pos(nj) else { continue };
                if !best[ns].2 || done[ns] {
                    continue;
                }
                let v = value * a;
                if v > best[ns].1 {
                    best[ns].1 = v;
                    heap.push(Reach { value: v, slot: ns });
                }
            }
        }
        best.into_iter()
            .map(|(gi, reach, inside)| (gi, if inside { 1.0 - reach } else { 0.0 }))
            .collect()
    }

    /// Weighted group mass minus the centre-box penalty, before normalization.
    pub fn box_numerator(&self, b: &BBox) -> Result<f64> {
        let weights = self.group_weights(b)?;
        Ok(self.numerator_from(b, &weights))
    }

    fn numerator_from(&self, b: &BBox, weights: &[(usize, f64)]) -> f64 {
        let mass: f64 = weights
            .iter()
            .map(|&(gi, wt)| wt * self.groups[gi].magnitude)
            .sum();
        let penalty = centre_box(b)
            .map(|c| {
                self.magnitude_ii.rect_sum(
                    c.x as usize,
                    c.y as usize,
                    c.x2() as usize,
                    c.y2() as usize,
                )
            })
            .unwrap_or(0.0);
        mass - penalty
    }

    fn score_with(&self, b: &BBox, kappa: f64, scratch: &mut Vec<usize>) -> f64 {
        self.groups_touching(b, scratch);
        let weights = self.weights_for(b, scratch);
        let num = self.numerator_from(b, &weights);
        num.max(0.0) / perimeter(b).powf(kappa)
    }
}

/// The box shrunk by one pixel on each side, if anything is left.
pub(crate) fn interior(b: &BBox) -> Option<BBox> {
    (b.w > 2 && b.h > 2).then(|| BBox {
        x: b.x + 1,
        y: b.y + 1,
        w: b.w - 2,
        h: b.h - 2,
    })
}

/// Centred box of half the width and height.
pub(crate) fn centre_box(b: &BBox) -> Option<BBox> {
    let (w, h) = (b.w / 2, b.h / 2);
    (w > 0 && h > 0).then(|| BBox {
        x: b.x + (b.w - w) / 2,
        y: b.y + (b.h - h) / 2,
        w,
        h,
    })
}

pub(crate) fn perimeter(b: &BBox) -> f64 {
    2.0 * (b.w as f64 + b.h as f64)
}

/// Affinity of two groups from their orientations and the direction between
/// their centroids: `|cos(t_i - t_ij) cos(t_j - t_ij)|^gamma` on edge tangents.
pub fn group_affinity(a: &EdgeGroup, b: &EdgeGroup, gamma: f64) -> f64 {
    let (dx, dy) = (b.centroid.0 - a.centroid.0, b.centroid.1 - a.centroid.1);
    let theta_ij = if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        dy.atan2(dx)
    };
    let ta = a.orientation + FRAC_PI_2;
    let tb = b.orientation + FRAC_PI_2;
    ((ta - theta_ij).cos() * (tb - theta_ij).cos())
        .abs()
        .powf(gamma)
}

#[derive(PartialEq)]
struct Reach {
    value: f64,
    slot: usize,
}

impl Eq for Reach {}

impl Ord for Reach {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for Reach {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Objectness of `b`: weighted enclosed group mass minus the centre-box
/// penalty, clamped at zero and divided by the perimeter raised to `kappa`.
pub fn score_box(ctx: &ScoringContext, b: &BBox, kappa: f64) -> Result<f64> {
    b.ensure_within(ctx.width, ctx.height)?;
    let mut scratch = Vec::new();
    Ok(ctx.score_with(b, kappa, &mut scratch))
}

/// Sliding-window candidates with neighbouring boxes at roughly `step_iou`.
pub fn candidate_boxes(width: usize, height: usize, params: &ProposalParams) -> Vec<BBox> {
    let alpha = params.step_iou;
    let sc_step = (1.0 / alpha).sqrt();
    let ar_step = (1.0 + alpha) / (2.0 * alpha);
    let rc_ratio = (1.0 - alpha) / (1.0 + alpha);
    let min_size = (params.min_box_area.max(1) as f64).sqrt();
    let ar_rad = (params.max_aspect_ratio.ln() / (ar_step * ar_step).ln()).floor() as i32;
    let sc_num = ((width.max(height) as f64 / min_size).ln() / sc_step.ln())
        .ceil()
        .max(0.0) as i32;

    let mut out = Vec::new();
    for s in 0..=sc_num {
        for a in -ar_rad..=ar_rad {
            let ar = ar_step.powi(a);
            let sc = min_size * sc_step.powi(s);
            let bh = (sc / ar).round() as usize;
            let bw = (sc * ar).round() as usize;
            if bw == 0 || bh == 0 || bw > width || bh > height {
                continue;
            }
            let kr = ((bh as f64 * rc_ratio).round() as usize).max(2);
            let kc = ((bw as f64 * rc_ratio).round() as usize).max(2);
            let mut y = 0;
            while y + bh <= height {
                let mut x = 0;
                while x + bw <= width {
                    out.push(BBox {
                        x: x as u32,
                        y: y as u32,
                        w: bw as u32,
                        h: bh as u32,
                    });
                    x += kc;
                }
                y += kr;
            }
        }
    }
    out
}

/// Coordinate-descent refinement of one box, accepting strict improvements.
fn refine(
    ctx: &ScoringContext,
    start: BBox,
    score: f64,
    params: &ProposalParams,
    scratch: &mut Vec<usize>,
) -> (BBox, f64) {
    let rc_ratio = (1.0 - params.step_iou) / (1.0 + params.step_iou);
    let mut step_r = (start.h as f64 * rc_ratio / 2.0).max(1.0);
    let mut step_c = (start.w as f64 * rc_ratio / 2.0).max(1.0);
    let (mut best, mut best_score) = (start, score);
    let (fw, fh) = (ctx.width as i64, ctx.height as i64);
    loop {
        step_r = (step_r / 2.0).max(1.0);
        step_c = (step_c / 2.0).max(1.0);
        let (sr, sc) = (step_r.round() as i64, step_c.round() as i64);
        for side in 0..4 {
            for dir in [-1i64, 1] {
                let (mut x0, mut y0) = (best.x as i64, best.y as i64);
                let (mut x1, mut y1) = (best.x2() as i64, best.y2() as i64);
                match side {
                    0 => y0 += dir * sr,
                    1 => y1 += dir * sr,
                    2 => x0 += dir * sc,
                    _ => x1 += dir * sc,
                }
                let (x0, y0, x1, y1) = (x0.max(0), y0.max(0), x1.min(fw), y1.min(fh));
                if x1 <= x0 || y1 <= y0 {
                    continue;
                }
                let cand = BBox {
                    x: x0 as u32,
                    y: y0 as u32,
                    w: (x1 - x0) as u32,
                    h: (y1 - y0) as u32,
                };
                if cand == best {
                    continue;
                }
                let s = ctx.score_with(&cand, params.kappa, scratch);
                if s > best_score {
                    best = cand;
                    best_score = s;
                }
            }
        }
        if sr <= 1 && sc <= 1 {
            break;
        }
    }
    (best, best_score)
}

/// Scores, refines, suppresses and ranks sliding-window candidates.
pub fn generate_proposals(
    ctx: &ScoringContext,
    params: &ProposalParams,
    frame: usize,
    exec: Execution,
) -> Result<Vec<Proposal>> {
    params.validate()?;
    let (w, h) = ctx.dims();
    let candidates = candidate_boxes(w, h, params);
    let scored: Vec<Option<Proposal>> = map_range(exec, candidates.len(), |i| {
        let mut scratch = Vec::new();
        let b = candidates[i];
        let s = ctx.score_with(&b, params.kappa, &mut scratch);
        if s <= params.min_score {
            return None;
        }
        let (bbox, score) = refine(ctx, b, s, params, &mut scratch);
        Some(Proposal { frame, bbox, score })
    });
    let mut props: Vec<Proposal> = scored.into_iter().flatten().collect();
    // refinement can land several candidates on the same box
    sort_by_score(&mut props);
    props.dedup_by(|a, b| a.bbox == b.bbox);
    let mut kept = nms(props, params.nms_beta);
    kept.truncate(params.max_proposals);
    Ok(kept)
}

/// Stable descending sort by score, ties broken by box geometry.
fn sort_by_score(props: &mut [Proposal]) {
    props.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| {
            (a.bbox.y, a.bbox.x, a.bbox.h, a.bbox.w).cmp(&(b.bbox.y, b.bbox.x, b.bbox.h, b.bbox.w))
        })
    });
}

/// Greedy non-maximum suppression: keeps the best box, drops any box whose
/// IoU with a kept box exceeds `beta`. Output is sorted by descending score.
pub fn nms(mut proposals: Vec<Proposal>, beta: f64) -> Vec<Proposal> {
    sort_by_score(&mut proposals);
    let mut kept: Vec<Proposal> = Vec::with_capacity(proposals.len());
    for p in proposals {
        if kept.iter().all(|k| iou(&k.bbox, &p.bbox) <= beta) {
            kept.push(p);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::{spatial_edge, SPATIAL_SIGMA};
    use crate::image::RgbImage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_outline(size: usize, x0: usize, side: usize) -> EdgeMap {
        let on = |x: usize, y: usize| {
            let inx = (x0..x0 + side).contains(&x);
            let iny = (x0..x0 + side).contains(&y);
            inx && iny && (x == x0 || y == x0 || x == x0 + side - 1 || y == x0 + side - 1)
        };
        let magnitude = Field2D::from_fn(size, size, |x, y| on(x, y) as u8 as f32);
        let orientation = Field2D::from_fn(size, size, |x, _| {
            if x == x0 || x == x0 + side - 1 {
                0.0
            } else {
                FRAC_PI_2 as f32
            }
        });
        EdgeMap {
            magnitude,
            orientation,
        }
    }

    #[test]
    fn empty_map_scores_zero() {
        let e = EdgeMap::zeros(40, 40);
        let ctx = ScoringContext::new(&e, 0.1, 2.0).unwrap();
        assert_eq!(
            score_box(&ctx, &BBox::new(3, 3, 20, 20).unwrap(), 1.5).unwrap(),
            0.0
        );
        assert!(score_box(&ctx, &BBox::new(30, 30, 20, 20).unwrap(), 1.5).is_err());
        let props =
            generate_proposals(&ctx, &ProposalParams::default(), 0, Execution::Sequential).unwrap();
        assert!(props.is_empty());
    }

    #[test]
    fn tight_box_beats_straddling_box() {
        let e = square_outline(64, 16, 30);
        let ctx = ScoringContext::new(&e, 0.1, 2.0).unwrap();
        let tight = score_box(&ctx, &BBox::new(14, 14, 34, 34).unwrap(), 1.5).unwrap();
        let straddle = score_box(&ctx, &BBox::new(30, 14, 30, 34).unwrap(), 1.5).unwrap();
        assert!(tight > 0.0);
        assert!(tight > straddle);
    }

    #[test]
    fn doubling_magnitudes_doubles_numerator() {
        let e = square_outline(64, 10, 25);
        let doubled = EdgeMap {
            magnitude: e.magnitude.map(|v| 2.0 * v),
            ..e.clone()
        };
        let a = ScoringContext::new(&e, 0.1, 2.0).unwrap();
        let b = ScoringContext::new(&doubled, 0.2, 2.0).unwrap();
        for bx in [
            BBox::new(8, 8, 30, 30).unwrap(),
            BBox::new(0, 0, 64, 64).unwrap(),
            BBox::new(20, 5, 40, 20).unwrap(),
        ] {
            let na = a.box_numerator(&bx).unwrap();
            let nb = b.box_numerator(&bx).unwrap();
            assert!((nb - 2.0 * na).abs() <= 1e-9 * na.abs().max(1.0));
        }
    }

    #[test]
    fn top_proposal_finds_square_object() {
        let img = RgbImage::from_fn(128, 128, |x, y| {
            if (40..90).contains(&x) && (30..80).contains(&y) {
                [230, 40, 40]
            } else {
                [30, 30, 30]
            }
        });
        let e = spatial_edge(&img, SPATIAL_SIGMA);
        let ctx = ScoringContext::new(&e, 0.1, 2.0).unwrap();
        let params = ProposalParams {
            max_proposals: 20,
            ..ProposalParams::default()
        };
        let props = generate_proposals(&ctx, &params, 3, Execution::Sequential).unwrap();
        assert!(!props.is_empty() && props.len() <= 20);
        assert_eq!(props[0].frame, 3);
        let truth = BBox::new(40, 30, 50, 50).unwrap();
        assert!(
            iou(&props[0].bbox, &truth) >= 0.7,
            "top box {:?}",
            props[0].bbox
        );
        assert!(props.windows(2).all(|w| w[0].score >= w[1].score));
        let par = generate_proposals(&ctx, &params, 3, Execution::Parallel).unwrap();
        assert_eq!(props, par);
    }

    #[test]
    fn candidates_respect_limits() {
        let p = ProposalParams::default();
        let c = candidate_boxes(120, 90, &p);
        assert!(!c.is_empty());
        for b in &c {
            assert!(b.fits(120, 90));
            let ar = b.w as f64 / b.h as f64;
            assert!((1.0 / 3.2..=3.2).contains(&ar));
        }
    }

    #[test]
    fn nms_examples() {
        let b = BBox::new(0, 0, 10, 10).unwrap();
        let one = vec![Proposal {
            frame: 0,
            bbox: b,
            score: 0.3,
        }];
        assert_eq!(nms(one.clone(), 0.5), one);
        let two = vec![
            Proposal {
                frame: 0,
                bbox: b,
                score: 0.8,
            },
            Proposal {
                frame: 0,
                bbox: b,
                score: 0.9,
            },
        ];
        let kept = nms(two, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn params_validation() {
        assert!(ProposalParams::default().validate().is_ok());
        let bad = ProposalParams {
            max_proposals: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProposalParams {
            nms_beta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn nms_postcondition(seed in 0u64..300, beta in 0.1f64..0.95) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let props: Vec<Proposal> = (0..40).map(|_| {
                let x = rng.random_range(0..50u32);
                let y = rng.random_range(0..50u32);
                Proposal {
                    frame: 0,
                    bbox: BBox::new(x, y, rng.random_range(1..30), rng.random_range(1..30)).unwrap(),
                    score: rng.random(),
                }
            }).collect();
            let kept = nms(props, beta);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox) <= beta);
                }
            }
        }
    }
}
