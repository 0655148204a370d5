//! Product-Epanechnikov kernel density estimates with per-dimension bandwidths.
//!
//! Samples are stored pre-scaled by their bandwidths so a kernel's support is
//! the unit cube around the query; a small k-d tree answers those box queries.

use crate::error::{Error, Result};

/// Bandwidth multiplier of the plug-in rule `h = 2.34 sigma n^(-1/(4+d))`.
pub const BANDWIDTH_FACTOR: f64 = 2.34;

/// Per-dimension plug-in bandwidths for `n` samples in `dim` dimensions,
/// never smaller than `floor`.
pub fn plugin_bandwidths(samples: &[f64], dim: usize, floor: f64) -> Vec<f64> {
    let n = samples.len() / dim.max(1);
    let shrink = (n.max(1) as f64).powf(-1.0 / (4.0 + dim as f64));
    (0..dim)
        .map(|d| {
            let sd = std_dev(samples.iter().skip(d).step_by(dim).copied(), n);
            (BANDWIDTH_FACTOR * sd * shrink).max(floor)
        })
        .collect()
}

fn std_dev(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

/// Kernel density estimate normalized to integrate to one.
#[derive(Debug, Clone)]
pub struct Kde {
    dim: usize,
    n: usize,
    bandwidth: Vec<f64>,
    // scaled samples, row-major, in tree order
    scaled: Vec<f64>,
    // per-sample weights in tree order; `None` when all are equal
    weights: Option<Vec<f64>>,
    tree: Vec<Node>,
    norm: f64,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

const LEAF: usize = 16;

impl Kde {
    /// Fits a density to `samples` (row-major, `dim` columns).
    pub fn new(samples: &[f64], dim: usize, bandwidth: Vec<f64>) -> Result<Kde> {
        Self::build_with(samples, dim, bandwidth, None)
    }

    /// Fits a density whose kernels carry the given non-negative weights.
    pub fn weighted(
        samples: &[f64],
        dim: usize,
        bandwidth: Vec<f64>,
        weights: &[f64],
    ) -> Result<Kde> {
        if dim > 0 && weights.len() != samples.len() / dim {
            return Err(Error::DimensionMismatch {
                expected: (samples.len() / dim, 1),
                actual: (weights.len(), 1),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::param(
                "weights",
                "must be non-negative with a positive sum",
            ));
        }
        Self::build_with(samples, dim, bandwidth, Some(weights))
    }

    fn build_with(
        samples: &[f64],
        dim: usize,
        bandwidth: Vec<f64>,
        weights: Option<&[f64]>,
    ) -> Result<Kde> {
        if dim == 0 || samples.is_empty() {
            return Err(Error::EmptyDescriptor);
        }
        if !samples.len().is_multiple_of(dim) || bandwidth.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: (dim, samples.len() / dim),
                actual: (bandwidth.len(), samples.len() % dim),
            });
        }
        if bandwidth.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::param("bandwidth", "must be positive and finite"));
        }
        let n = samples.len() / dim;
        // the weight rides along as an extra trailing column while the tree is built
        let mut rows: Vec<Vec<f64>> = samples
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, r)| {
                let w = weights.map_or(1.0, |w| w[i]);
                r.iter()
                    .zip(&bandwidth)
                    .map(|(v, h)| v / h)
                    .chain([w])
                    .collect()
            })
            .collect();
        let mut tree = Vec::new();
        build(&mut rows, 0, n, dim, &mut tree);
        let total = weights.map_or(n as f64, |w| w.iter().sum());
        let weights = weights.map(|_| rows.iter().map(|r| r[dim]).collect());
        let scaled = rows.into_iter().flat_map(|mut r| {
            r.truncate(dim);
            r
        });
        let norm = 1.0 / (total * bandwidth.iter().product::<f64>());
        Ok(Kde {
            dim,
            n,
            bandwidth,
            scaled: scaled.collect(),
            weights,
            tree,
            norm,
        })
    }

    /// Fits with plug-in bandwidths floored at `floor`.
    pub fn with_plugin_bandwidth(samples: &[f64], dim: usize, floor: f64) -> Result<Kde> {
        let bw = plugin_bandwidths(samples, dim, floor);
        Kde::new(samples, dim, bw)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    /// Density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let q: Vec<f64> = x.iter().zip(&self.bandwidth).map(|(v, h)| v / h).collect();
        let mut acc = 0.0;
        self.visit(0, &q, &mut acc);
        acc * self.norm
    }

    /// Leave-one-out density at `x`, which must be one of the samples of an
    /// unweighted estimate.
    pub fn density_without_sample(&self, x: &[f64]) -> f64 {
        debug_assert!(self.weights.is_none());
        if self.n < 2 {
            return self.density(x);
        }
        let own = 0.75f64.powi(self.dim as i32) * self.norm;
        ((self.density(x) - own) * self.n as f64 / (self.n - 1) as f64).max(0.0)
    }

    fn visit(&self, node: usize, q: &[f64], acc: &mut f64) {
        let nd = &self.tree[node];
        let outside = q
            .iter()
            .zip(nd.lo.iter().zip(&nd.hi))
            .any(|(&v, (&lo, &hi))| v <= lo - 1.0 || v >= hi + 1.0);
        if outside {
            return;
        }
        match nd.children {
            Some((a, b)) => {
                self.visit(a, q, acc);
                self.visit(b, q, acc);
            }
            None => {
                let rows =
                    self.scaled[nd.start * self.dim..nd.end * self.dim].chunks_exact(self.dim);
                for (i, row) in (nd.start..).zip(rows) {
                    let mut k = 1.0;
                    for (s, v) in row.iter().zip(q) {
                        let u = s - v;
                        let t = 1.0 - u * u;
                        if t <= 0.0 {
                            k = 0.0;
                            break;
                        }
                        k *= 0.75 * t;
                    }
                    *acc += self.weights.as_ref().map_or(k, |w| k * w[i]);
                }
            }
        }
    }
}

fn build(
    rows: &mut [Vec<f64>],
    start: usize,
    end: usize,
    dim: usize,
    tree: &mut Vec<Node>,
) -> usize {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for r in &rows[start..end] {
        for d in 0..dim {
            lo[d] = lo[d].min(r[d]);
            hi[d] = hi[d].max(r[d]);
        }
    }
    let idx = tree.len();
    tree.push(Node {
        lo: lo.clone(),
        hi: hi.clone(),
        start,
        end,
        children: None,
    });
    if end - start > LEAF {
        let split = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[split] > lo[split] {
            let mid = start + (end - start) / 2;
            rows[start..end]
                .select_nth_unstable_by(mid - start, |a, b| a[split].total_cmp(&b[split]));
            let a = build(rows, start, mid, dim, tree);
            let b = build(rows, mid, end, dim, tree);
            tree[idx].children = Some((a, b));
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(samples: &[f64], dim: usize, bw: &[f64], x: &[f64]) -> f64 {
        let n = samples.len() / dim;
        let mut acc = 0.0;
        for r in samples.chunks_exact(dim) {
            let mut k = 1.0;
            for d in 0..dim {
                let u = (x[d] - r[d]) / bw[d];
                k *= if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u) / bw[d]
                } else {
                    0.0
                };
            }
            acc += k;
        }
        acc / n as f64
    }

    #[test]
    fn tree_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 4;
        let samples: Vec<f64> = (0..2000 * dim).map(|_| rng.random::<f64>()).collect();
        let kde = Kde::with_plugin_bandwidth(&samples, dim, 1e-3).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 1.4 - 0.2).collect();
            let want = brute(&samples, dim, kde.bandwidth(), &x);
            let got = kde.density(&x);
            assert!(
                (got - want).abs() <= 1e-9 * want.max(1e-12),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn identical_samples_peak_at_the_point() {
        let samples = [0.3, -1.0].repeat(50);
        let kde = Kde::with_plugin_bandwidth(&samples, 2, 0.1).unwrap();
        assert_eq!(kde.bandwidth(), &[0.1, 0.1]);
        let at = kde.density(&[0.3, -1.0]);
        assert!((at - 0.75 * 0.75 / 0.01).abs() < 1e-9);
        assert!(kde.density(&[0.35, -1.0]) < at);
        assert_eq!(kde.density(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn integrates_to_one_in_1d() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let kde = Kde::with_plugin_bandwidth(&samples, 1, 1e-3).unwrap();
        let steps = 20000;
        let (a, b) = (-1.0, 2.0);
        let dx = (b - a) / steps as f64;
        let total: f64 = (0..steps)
            .map(|i| kde.density(&[a + (i as f64 + 0.5) * dx]) * dx)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Kde::new(&[], 2, vec![1.0, 1.0]).is_err());
        assert!(Kde::new(&[1.0, 2.0, 3.0], 2, vec![1.0, 1.0]).is_err());
        assert!(Kde::new(&[1.0, 2.0], 2, vec![1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn density_non_negative(seed in 0u64..200, x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
            let kde = Kde::with_plugin_bandwidth(&samples, 2, 1e-3).unwrap();
            prop_assert!(kde.density(&[x, y]) >= 0.0);
        }
    }
}
