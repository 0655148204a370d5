//! Window features, the overlapping-pair density model, PMI and affinities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::{iou, BBox};
use crate::image::RgbImage;
use crate::kde::{plugin_bandwidths, Kde};
use crate::par::{map_range, Execution};
use crate::pca::Pca;

pub const HIST_BINS: usize = 15;
pub const HIST_DIM: usize = 3 * HIST_BINS;
pub const FEATURE_DIM: usize = HIST_DIM + 4;
/// Scale applied to histogram entries so one bin spans a range comparable to
/// the frame-normalized location coordinates.
pub const HIST_SCALE: f64 = HIST_BINS as f64;

/// Colour histogram and frame-normalized location of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// Three 15-bin channel histograms (R, G, B), each summing to one.
    pub hist: [f64; HIST_DIM],
    /// `(center_x / W, center_y / H, h / H, w / W)`.
    pub loc: [f64; 4],
}

impl FeatureVector {
    /// The 49 features with histograms scaled by [`HIST_SCALE`].
    pub fn scaled(&self) -> Vec<f64> {
        self.hist
            .iter()
            .map(|v| v * HIST_SCALE)
            .chain(self.loc.iter().copied())
            .collect()
    }

    pub fn scaled_hist(&self) -> Vec<f64> {
        self.hist.iter().map(|v| v * HIST_SCALE).collect()
    }
}

/// Histogram and location features for `b` in `frame`.
pub fn extract_features(frame: &RgbImage, b: &BBox) -> Result<FeatureVector> {
    let (fw, fh) = frame.dims();
    b.ensure_within(fw, fh)?;
    let mut counts = [0u64; HIST_DIM];
    for y in b.y as usize..b.y2() as usize {
        for x in b.x as usize..b.x2() as usize {
            let p = frame.get(x, y);
            for c in 0..3 {
                counts[c * HIST_BINS + p[c] as usize * HIST_BINS / 256] += 1;
            }
        }
    }
    let total = b.area() as f64;
    let mut hist = [0.0; HIST_DIM];
    for (h, c) in hist.iter_mut().zip(counts) {
        *h = c as f64 / total;
    }
    let q = b.quad();
    Ok(FeatureVector {
        hist,
        loc: [
            q[0] / fw as f64,
            q[1] / fh as f64,
            q[2] / fh as f64,
            q[3] / fw as f64,
        ],
    })
}

/// An unordered pair of overlapping windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    /// Overlap `u = IoU(a, b) > 0`.
    pub overlap: f64,
    /// Index of `u` among `bins` uniform bins over `(0, 1]`.
    pub bin: usize,
}

/// Number of overlap bins.
pub const OVERLAP_BINS: usize = 10;

/// Every unordered pair of windows with positive overlap.
pub fn collect_pairs(boxes: &[BBox]) -> Vec<PairSample> {
    let mut out = Vec::new();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let u = iou(&boxes[i], &boxes[j]);
            if u > 0.0 {
                let bin = ((u * OVERLAP_BINS as f64).ceil() as usize).clamp(1, OVERLAP_BINS) - 1;
                out.push(PairSample {
                    a: i,
                    b: j,
                    overlap: u,
                    bin,
                });
            }
        }
    }
    out
}

/// Maps 49-D features to the low-dimensional space the pair density lives in:
/// the four location coordinates plus the leading principal component of the
/// scaled colour histograms.
#[derive(Debug, Clone)]
pub struct PairProjector {
    colour: Pca,
}

/// Dimension of a projected window feature.
pub const PROJECTED_DIM: usize = 5;

impl PairProjector {
    pub fn fit(features: &[FeatureVector]) -> PairProjector {
        let rows: Vec<Vec<f64>> = features.iter().map(|f| f.scaled_hist()).collect();
        PairProjector {
            colour: Pca::fit(&rows, 1),
        }
    }

    pub fn project(&self, f: &FeatureVector) -> [f64; PROJECTED_DIM] {
        let c = self.colour.project(&f.scaled_hist());
        [
            f.loc[0],
            f.loc[1],
            f.loc[2],
            f.loc[3],
            c.first().copied().unwrap_or(0.0),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOptions {
    /// Lower bound on every bandwidth.
    pub bandwidth_floor: f64,
    /// Maximum number of unordered pairs fed to the estimator; larger sets are
    /// subsampled with a fixed stride.
    pub max_pairs: usize,
    /// Floor applied to densities before taking logs.
    pub epsilon: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions {
            bandwidth_floor: 1e-3,
            max_pairs: 2048,
            epsilon: 1e-12,
        }
    }
}

/// Joint density of overlapping window pairs and its marginal.
///
/// Every pair enters the joint sample set in both orders, so the joint is
/// symmetric and both marginals coincide. The marginal reuses the joint's
/// per-dimension bandwidths, which makes the joint of independent features
/// agree in expectation with the product of marginals.
#[derive(Debug, Clone)]
pub struct DensityModel {
    dim: usize,
    joint: Kde,
    marginal: Kde,
    epsilon: f64,
}

impl DensityModel {
    /// Fits to projected feature pairs with every pair weighted equally.
    pub fn fit_projected(pairs: &[(Vec<f64>, Vec<f64>)], opts: &DensityOptions) -> Result<Self> {
        Self::fit_binned(pairs, &vec![0; pairs.len()], opts)
    }

    /// Fits to projected feature pairs tagged with their overlap bin. Each
    /// occupied bin carries the same total weight, so the joint is the
    /// uniformly weighted sum of the per-bin densities.
    pub fn fit_binned(
        pairs: &[(Vec<f64>, Vec<f64>)],
        bins: &[usize],
        opts: &DensityOptions,
    ) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::TooFewPairs(pairs.len()));
        }
        let dim = pairs[0].0.len();
        if dim == 0
            || bins.len() != pairs.len()
            || pairs.iter().any(|(a, b)| a.len() != dim || b.len() != dim)
        {
            return Err(Error::DimensionMismatch {
                expected: (dim, pairs.len()),
                actual: (0, bins.len()),
            });
        }
        let stride = pairs.len().div_ceil(opts.max_pairs.max(2));
        let used: Vec<_> = pairs
            .iter()
            .zip(bins.iter().copied())
            .step_by(stride)
            .collect();
        let mut per_bin = std::collections::BTreeMap::new();
        for &(_, bin) in &used {
            *per_bin.entry(bin).or_insert(0usize) += 1;
        }
        let pair_weight: Vec<f64> = used
            .iter()
            .map(|(_, bin)| 1.0 / per_bin[bin] as f64)
            .collect();
        let mut half = Vec::with_capacity(used.len() * 2 * dim);
        let mut half_weights = Vec::with_capacity(used.len() * 2);
        for ((p, _), &w) in used.iter().zip(&pair_weight) {
            half.extend_from_slice(&p.0);
            half.extend_from_slice(&p.1);
            half_weights.extend([w, w]);
        }
        // the symmetrized set has identical spread in both halves, so one set
        // of bandwidths serves both
        let n_joint = 2 * used.len();
        let joint_bw = {
            let bw = plugin_bandwidths(&half, dim, opts.bandwidth_floor);
            let shrink_m = (half.len() as f64 / dim as f64).powf(-1.0 / (4.0 + dim as f64));
            let shrink_j = (n_joint as f64).powf(-1.0 / (4.0 + 2.0 * dim as f64));
            bw.into_iter()
                .map(|h| (h / shrink_m * shrink_j).max(opts.bandwidth_floor))
                .collect::<Vec<f64>>()
        };
        let mut joint_samples = Vec::with_capacity(n_joint * 2 * dim);
        for ((p, _), _) in used.iter().zip(&pair_weight) {
            joint_samples.extend_from_slice(&p.0);
            joint_samples.extend_from_slice(&p.1);
            joint_samples.extend_from_slice(&p.1);
            joint_samples.extend_from_slice(&p.0);
        }
        let full_bw: Vec<f64> = joint_bw.iter().chain(joint_bw.iter()).copied().collect();
        let joint = Kde::weighted(&joint_samples, 2 * dim, full_bw, &half_weights)?;
        let marginal = Kde::weighted(&half, dim, joint_bw, &half_weights)?;
        Ok(DensityModel {
            dim,
            joint,
            marginal,
            epsilon: opts.epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn joint_density(&self, a: &[f64], b: &[f64]) -> f64 {
        let (a, b) = canonical(a, b);
        let x: Vec<f64> = a.iter().chain(b).copied().collect();
        self.joint.density(&x)
    }

    pub fn marginal_density(&self, a: &[f64]) -> f64 {
        self.marginal.density(a)
    }

    pub fn pmi_projected(&self, a: &[f64], b: &[f64], rho: f64) -> f64 {
        let j = self.joint_density(a, b);
        pmi_from(
            j,
            self.marginal_density(a),
            self.marginal_density(b),
            rho,
            self.epsilon,
        )
    }

    pub fn bandwidth(&self) -> &[f64] {
        self.marginal.bandwidth()
    }
}

fn canonical<'a>(a: &'a [f64], b: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let order = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal);
    if order.is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

fn pmi_from(joint: f64, pa: f64, pb: f64, rho: f64, eps: f64) -> f64 {
    // the marginal logs are added before subtracting so swapping a and b is exact
    rho * joint.max(eps).ln() - (pa.max(eps).ln() + pb.max(eps).ln())
}

/// Feature projection plus pair density for one sub-sequence.
#[derive(Debug, Clone)]
pub struct PairModel {
    pub projector: PairProjector,
    pub density: DensityModel,
}

/// Fits the pair density over overlapping windows.
pub fn fit_density(
    features: &[FeatureVector],
    pairs: &[PairSample],
    opts: &DensityOptions,
) -> Result<PairModel> {
    if pairs.len() < 2 {
        return Err(Error::TooFewPairs(pairs.len()));
    }
    let projector = PairProjector::fit(features);
    let projected: Vec<[f64; PROJECTED_DIM]> =
        features.iter().map(|f| projector.project(f)).collect();
    let samples: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|p| (projected[p.a].to_vec(), projected[p.b].to_vec()))
        .collect();
    let bins: Vec<usize> = pairs.iter().map(|p| p.bin).collect();
    let density = DensityModel::fit_binned(&samples, &bins, opts)?;
    Ok(PairModel { projector, density })
}

/// `log(P(A,B)^rho / (P(A) P(B)))` with densities floored at epsilon.
pub fn pmi(model: &PairModel, a: &FeatureVector, b: &FeatureVector, rho: f64) -> f64 {
    let pa = model.projector.project(a);
    let pb = model.projector.project(b);
    model.density.pmi_projected(&pa, &pb, rho)
}

/// Largest PMI magnitude passed to `exp`.
const PMI_CLAMP: f64 = 700.0;

/// `W_ij = exp(PMI(f_i, f_j))` for overlapping windows, zero otherwise; the
/// diagonal holds the row maximum (1 for windows without any overlap).
pub fn affinity_matrix(
    features: &[FeatureVector],
    boxes: &[BBox],
    model: &PairModel,
    rho: f64,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    if features.len() != boxes.len() {
        return Err(Error::DimensionMismatch {
            expected: (features.len(), 1),
            actual: (boxes.len(), 1),
        });
    }
    let n = features.len();
    let projected: Vec<[f64; PROJECTED_DIM]> = features
        .iter()
        .map(|f| model.projector.project(f))
        .collect();
    let marg: Vec<f64> = map_range(exec, n, |i| model.density.marginal_density(&projected[i]));
    let eps = model.density.epsilon;
    let rows: Vec<Vec<(usize, f64)>> = map_range(exec, n, |i| {
        (i + 1..n)
            .filter(|&j| boxes[i].intersection_area(&boxes[j]) > 0)
            .map(|j| {
                let jd = model.density.joint_density(&projected[i], &projected[j]);
                let p = pmi_from(jd, marg[i], marg[j], rho, eps);
                (j, p.clamp(-PMI_CLAMP, PMI_CLAMP).exp())
            })
            .collect()
    });
    Ok(assemble(n, rows))
}

/// Affinity 1 between every overlapping pair; used when too few pairs exist
/// to fit a density.
pub fn uniform_affinity(boxes: &[BBox]) -> DMatrix<f64> {
    let n = boxes.len();
    let rows = (0..n)
        .map(|i| {
            (i + 1..n)
                .filter(|&j| boxes[i].intersection_area(&boxes[j]) > 0)
                .map(|j| (j, 1.0))
                .collect()
        })
        .collect();
    assemble(n, rows)
}

fn assemble(n: usize, upper: Vec<Vec<(usize, f64)>>) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for (i, row) in upper.into_iter().enumerate() {
        for (j, v) in row {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    for i in 0..n {
        let m = (0..n)
            .filter(|&j| j != i)
            .map(|j| w[(i, j)])
            .fold(0.0, f64::max);
        w[(i, i)] = if m > 0.0 { m } else { 1.0 };
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn uniform_red_patch() {
        let img = RgbImage::from_fn(20, 10, |_, _| [255, 0, 0]);
        let f = extract_features(&img, &b(2, 2, 10, 6)).unwrap();
        assert_eq!(f.hist[HIST_BINS - 1], 1.0);
        assert_eq!(f.hist[HIST_BINS], 1.0);
        assert_eq!(f.hist[2 * HIST_BINS], 1.0);
        assert_eq!(f.loc, [7.0 / 20.0, 5.0 / 10.0, 0.6, 0.5]);
        assert!(extract_features(&img, &b(15, 0, 10, 5)).is_err());
    }

    #[test]
    fn half_red_half_blue() {
        let img = RgbImage::from_fn(10, 10, |x, _| if x < 5 { [255, 0, 0] } else { [0, 0, 255] });
        let f = extract_features(&img, &b(0, 0, 10, 10)).unwrap();
        assert_eq!(f.hist[HIST_BINS - 1], 0.5);
        assert_eq!(f.hist[0], 0.5);
        assert_eq!(f.hist[HIST_BINS], 1.0);
        assert_eq!(f.hist[2 * HIST_BINS], 0.5);
        assert_eq!(f.hist[3 * HIST_BINS - 1], 0.5);
    }

    #[test]
    fn pair_collection() {
        assert!(collect_pairs(&[b(0, 0, 5, 5), b(10, 10, 5, 5)]).is_empty());
        let same = collect_pairs(&[b(0, 0, 5, 5), b(0, 0, 5, 5)]);
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].overlap, 1.0);
        assert_eq!(same[0].bin, OVERLAP_BINS - 1);
        let boxes: Vec<BBox> = (0..7).map(|i| b(i, i, 20, 20)).collect();
        assert_eq!(collect_pairs(&boxes).len(), 21);
    }

    fn random_features(rng: &mut ChaCha8Rng, n: usize) -> (Vec<FeatureVector>, Vec<BBox>) {
        let img = RgbImage::from_fn(64, 64, |x, y| {
            [(x * 4) as u8, (y * 4) as u8, ((x * y) % 256) as u8]
        });
        let boxes: Vec<BBox> = (0..n)
            .map(|_| {
                b(
                    rng.random_range(0..32),
                    rng.random_range(0..32),
                    rng.random_range(8..32),
                    rng.random_range(8..32),
                )
            })
            .collect();
        let feats = boxes
            .iter()
            .map(|bb| extract_features(&img, bb).unwrap())
            .collect();
        (feats, boxes)
    }

    #[test]
    fn too_few_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (f, _) = random_features(&mut rng, 3);
        let pairs = vec![PairSample {
            a: 0,
            b: 1,
            overlap: 0.5,
            bin: 4,
        }];
        assert!(matches!(
            fit_density(&f, &pairs, &DensityOptions::default()),
            Err(Error::TooFewPairs(1))
        ));
    }

    #[test]
    fn separated_blobs_have_low_cross_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pairs = Vec::new();
        for _ in 0..5000 {
            let c = if rng.random::<bool>() { 0.0 } else { 5.0 };
            let a: Vec<f64> = (0..2).map(|_| c + rng.random::<f64>()).collect();
            let bb: Vec<f64> = (0..2).map(|_| c + rng.random::<f64>()).collect();
            pairs.push((a, bb));
        }
        let m = DensityModel::fit_projected(&pairs, &DensityOptions::default()).unwrap();
        let intra = m.joint_density(&[0.5, 0.5], &[0.5, 0.5]);
        let inter = m.joint_density(&[0.5, 0.5], &[5.5, 5.5]);
        assert!(intra > inter);
        assert_eq!(inter, 0.0);
    }

    #[test]
    fn affinity_is_symmetric_and_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, boxes) = random_features(&mut rng, 40);
        let pairs = collect_pairs(&boxes);
        let model = fit_density(&f, &pairs, &DensityOptions::default()).unwrap();
        let w = affinity_matrix(&f, &boxes, &model, 1.2, Execution::Sequential).unwrap();
        assert_eq!(w, w.transpose());
        assert!(w.iter().all(|&v| v >= 0.0 && v.is_finite()));
        for i in 0..40 {
            for j in 0..40 {
                if i != j && boxes[i].intersection_area(&boxes[j]) == 0 {
                    assert_eq!(w[(i, j)], 0.0);
                }
                assert!(w[(i, i)] >= w[(i, j)]);
            }
        }
        let wp = affinity_matrix(&f, &boxes, &model, 1.2, Execution::Parallel).unwrap();
        assert_eq!(w, wp);
        assert_eq!(
            pmi(&model, &f[0], &f[1], 1.2),
            pmi(&model, &f[1], &f[0], 1.2)
        );
    }

    proptest! {
        #[test]
        fn histograms_normalized(x in 0u32..40, y in 0u32..40, w in 1u32..24, h in 1u32..24, seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let px: Vec<[u8; 3]> = (0..64 * 64).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let img = RgbImage::from_pixels(64, 64, px).unwrap();
            let f = extract_features(&img, &b(x, y, w, h)).unwrap();
            for c in 0..3 {
                let s: f64 = f.hist[c * HIST_BINS..(c + 1) * HIST_BINS].iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn pmi_exchange_symmetric(seed in 0u64..40, i in 0usize..30, j in 0usize..30, rho in 0.5f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (f, boxes) = random_features(&mut rng, 30);
            let pairs = collect_pairs(&boxes);
            let model = fit_density(&f, &pairs, &DensityOptions::default()).unwrap();
            prop_assert_eq!(pmi(&model, &f[i], &f[j], rho), pmi(&model, &f[j], &f[i], rho));
        }
    }
}
