//! Normalized spectral clustering, with a fixed or self-tuned cluster count.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::kmeans;
use crate::error::{Error, Result};

/// Neighbour rank used for local scaling.
pub const SELF_TUNE_NEIGHBOUR: usize = 10;
/// Largest cluster count the eigengap search considers.
pub const SELF_TUNE_MAX_CLUSTERS: usize = 5;

const KMEANS_RESTARTS: usize = 8;
const KMEANS_ITERS: usize = 100;

fn check_affinity(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: (w.nrows(), w.nrows()),
            actual: (w.nrows(), w.ncols()),
        });
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param(
            "affinity",
            "entries must be finite and non-negative",
        ));
    }
    Ok(())
}

/// `D^-1/2 W D^-1/2`; rows with zero degree are left at zero.
fn normalize(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let inv: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        // average the two triangles so the result is exactly symmetric
        0.5 * (w[(i, j)] + w[(j, i)]) * inv[i] * inv[j]
    })
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Rows of the leading `k` eigenvectors, each scaled to unit length.
fn embedding(vectors: &DMatrix<f64>, k: usize) -> Vec<Vec<f64>> {
    (0..vectors.nrows())
        .map(|r| {
            let row: Vec<f64> = (0..k).map(|c| vectors[(r, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.into_iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect()
}

/// Renumbers labels in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn cluster_embedding(vectors: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let points = embedding(vectors, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = kmeans(&points, k, KMEANS_RESTARTS, KMEANS_ITERS, &mut rng);
    canonical_labels(&km.labels)
}

/// Spectral clustering into `k` groups.
///
/// Labels are numbered by first appearance. With fewer points than `k`, each
/// point becomes its own cluster.
pub fn spectral_cluster_fixed(w: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_affinity(w)?;
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let n = w.nrows();
    if n < k {
        log::warn!("{n} points for {k} clusters; every point becomes its own cluster");
        return Ok((0..n).collect());
    }
    let (_, vectors) = sorted_eigen(normalize(w));
    Ok(cluster_embedding(&vectors, k, seed))
}

/// Result of self-tuned clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTuned {
    pub labels: Vec<usize>,
    pub clusters: usize,
    /// Ascending eigenvalues of the normalized Laplacian of the rescaled affinity.
    pub laplacian_eigenvalues: Vec<f64>,
}

/// Pairwise distances implied by an affinity: `sqrt(-ln(W_ij / max W))`.
pub fn distances_from_affinity(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let max = w.iter().copied().fold(0.0, f64::max);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if max <= 0.0 || w[(i, j)] <= 0.0 {
            f64::INFINITY
        } else {
            (-(w[(i, j)] / max).ln()).max(0.0).sqrt()
        }
    })
}

/// Pairwise Euclidean distances between points.
pub fn euclidean_distances(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}

/// Self-tuning spectral clustering from pairwise distances.
///
/// Each point's scale is its distance to the 10th nearest neighbour, the
/// affinity is `exp(-d_ij^2 / (s_i s_j))`, and the cluster count in `1..=5`
/// maximizes the shifted ratio `(e_(c+1) + eps) / (e_c + eps)` between
/// consecutive ascending Laplacian eigenvalues, with `eps` the mean of the
/// five eigenvalues after the first.
pub fn spectral_cluster_selftune(dist: &DMatrix<f64>, seed: u64) -> Result<SelfTuned> {
    if !dist.is_square() {
        return Err(Error::DimensionMismatch {
            expected: (dist.nrows(), dist.nrows()),
            actual: (dist.nrows(), dist.ncols()),
        });
    }
    if dist.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::param("distances", "entries must be non-negative"));
    }
    let n = dist.nrows();
    if n < 2 {
        return Ok(SelfTuned {
            labels: vec![0; n],
            clusters: n,
            laplacian_eigenvalues: vec![0.0; n],
        });
    }
    let rank = SELF_TUNE_NEIGHBOUR.min(n - 1);
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[(i, j)]).collect();
            d.sort_by(f64::total_cmp);
            // unreachable neighbours fall back to the farthest finite one
            let s = d[rank - 1];
            if s.is_finite() {
                s
            } else {
                d.iter()
                    .copied()
                    .filter(|v| v.is_finite())
                    .fold(0.0, f64::max)
            }
        })
        .collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let d = dist[(i, j)];
        if i == j || !d.is_finite() {
            0.0
        } else if d == 0.0 {
            1.0
        } else {
            let s = scale[i] * scale[j];
            if s > 0.0 {
                (-d * d / s).exp()
            } else {
                0.0
            }
        }
    });
    let (values, vectors) = sorted_eigen(normalize(&a));
    // Laplacian eigenvalues ascend as the normalized affinity's descend
    let lap: Vec<f64> = values.iter().map(|v| (1.0 - v).max(0.0)).collect();
    let cmax = SELF_TUNE_MAX_CLUSTERS.min(n - 1);
    let eps = (lap.iter().skip(1).take(SELF_TUNE_MAX_CLUSTERS).sum::<f64>()
        / lap.len().saturating_sub(1).clamp(1, SELF_TUNE_MAX_CLUSTERS) as f64)
        .max(1e-9);
    let clusters = (1..=cmax)
        .max_by(|&a, &b| {
            let ga = (lap[a] + eps) / (lap[a - 1] + eps);
            let gb = (lap[b] + eps) / (lap[b - 1] + eps);
            // prefer fewer clusters on ties
            ga.total_cmp(&gb).then(b.cmp(&a))
        })
        .unwrap_or(1);
    let labels = if clusters == 1 {
        vec![0; n]
    } else {
        cluster_embedding(&vectors, clusters, seed)
    };
    Ok(SelfTuned {
        labels,
        clusters,
        laplacian_eigenvalues: lap,
    })
}

/// Fraction of points whose cluster's majority truth label matches their own.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    use std::collections::HashMap;
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&l, &t) in labels.iter().zip(truth) {
        *counts.entry(l).or_default().entry(t).or_default() += 1;
    }
    let agree: usize = counts
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    agree as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn block_diagonal(sizes: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        let truth: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect();
        let n = truth.len();
        (
            DMatrix::from_fn(n, n, |i, j| (truth[i] == truth[j]) as u8 as f64),
            truth,
        )
    }

    fn blobs(
        seed: u64,
        centres: &[(f64, f64)],
        per: usize,
        spread: f64,
    ) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, &(x, y)) in centres.iter().enumerate() {
            for _ in 0..per {
                pts.push(vec![
                    x + spread * (rng.random::<f64>() - 0.5),
                    y + spread * (rng.random::<f64>() - 0.5),
                ]);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn block_diagonal_recovered() {
        let (w, truth) = block_diagonal(&[7, 5]);
        let labels = spectral_cluster_fixed(&w, 2, 0).unwrap();
        assert_eq!(purity(&labels, &truth), 1.0);
        assert_eq!(labels, canonical_labels(&truth));
    }

    #[test]
    fn permutation_gives_same_partition() {
        let (w, _) = block_diagonal(&[6, 4, 5]);
        let n = w.nrows();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7) % n).collect();
        let wp = DMatrix::from_fn(n, n, |i, j| w[(perm[i], perm[j])]);
        let a = spectral_cluster_fixed(&w, 3, 1).unwrap();
        let b = spectral_cluster_fixed(&wp, 3, 1).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(a[perm[i]] == a[perm[j]], b[i] == b[j]);
            }
        }
    }

    #[test]
    fn rbf_blobs_fixed_k() {
        let (pts, truth) = blobs(3, &[(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)], 30, 1.5);
        let d = euclidean_distances(&pts);
        let w = d.map(|v| (-v * v / 2.0).exp());
        let labels = spectral_cluster_fixed(&w, 3, 9).unwrap();
        assert!(purity(&labels, &truth) >= 0.95);
    }

    #[test]
    fn fewer_points_than_clusters() {
        let w = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(spectral_cluster_fixed(&w, 5, 0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_affinity() {
        let w = DMatrix::from_element(3, 3, -1.0);
        assert!(spectral_cluster_fixed(&w, 2, 0).is_err());
        assert!(spectral_cluster_fixed(&DMatrix::zeros(2, 3), 1, 0).is_err());
    }

    #[test]
    fn self_tune_counts() {
        let (pts, truth) = blobs(5, &[(0.0, 0.0), (20.0, 0.0)], 25, 2.0);
        let st = spectral_cluster_selftune(&euclidean_distances(&pts), 0).unwrap();
        assert_eq!(st.clusters, 2);
        assert_eq!(purity(&st.labels, &truth), 1.0);

        let (pts, _) = blobs(6, &[(0.0, 0.0)], 40, 2.0);
        let st = spectral_cluster_selftune(&euclidean_distances(&pts), 0).unwrap();
        assert_eq!(st.clusters, 1);

        let same = euclidean_distances(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(spectral_cluster_selftune(&same, 0).unwrap().clusters, 1);
    }

    #[test]
    fn self_tune_from_affinity() {
        let (pts, truth) = blobs(8, &[(0.0, 0.0), (10.0, 10.0), (20.0, 0.0)], 20, 2.0);
        let w = euclidean_distances(&pts).map(|v| (-v * v / 4.0).exp());
        let st = spectral_cluster_selftune(&distances_from_affinity(&w), 2).unwrap();
        assert_eq!(st.clusters, 3);
        assert!(purity(&st.labels, &truth) >= 0.95);
    }

    #[test]
    fn purity_counting() {
        let mut labels = vec![0; 10];
        labels.extend(vec![1; 10]);
        let mut truth = vec![0; 10];
        truth.extend(vec![1; 10]);
        truth[3] = 1;
        assert!((purity(&labels, &truth) - 0.95).abs() < 1e-12);
    }
}
