//! Principal component analysis over small row sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Leading principal axes of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// `k` unit-length axes, each of the input dimension, strongest first.
    axes: Vec<Vec<f64>>,
    /// Variance captured by each axis.
    variances: Vec<f64>,
}

impl Pca {
    /// Fits `k` axes to `rows` (all of equal length). `k` is capped at the
    /// input dimension. With fewer than two rows every axis is still returned
    /// but carries zero variance.
    pub fn fit(rows: &[Vec<f64>], k: usize) -> Pca {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len();
        let k = k.min(dim);
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        if n > 0 {
            mean.iter_mut().for_each(|m| *m /= n as f64);
        }
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for r in rows {
            let c = DVector::from_iterator(dim, r.iter().zip(&mean).map(|(v, m)| v - m));
            cov.ger(1.0, &c, &c, 1.0);
        }
        if n > 1 {
            cov /= (n - 1) as f64;
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut axes = Vec::with_capacity(k);
        let mut variances = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // fix the sign so the largest-magnitude entry is positive
            let pivot = axis
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if pivot < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            axes.push(axis);
            variances.push(eig.eigenvalues[i].max(0.0));
        }
        Pca {
            mean,
            axes,
            variances,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.mean.len()
    }

    pub fn dim_out(&self) -> usize {
        self.axes.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Coordinates of `x` along each axis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| {
                a.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((a, v), m)| a * (v - m))
                    .sum()
            })
            .collect()
    }

    /// Distance from `x` to the affine subspace spanned by the axes.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let total: f64 = centred.iter().map(|v| v * v).sum();
        let kept: f64 = self.project(x).iter().map(|c| c * c).sum();
        (total - kept).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_dominant_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let t: f64 = rng.random::<f64>() * 10.0;
                let e: f64 = rng.random::<f64>() * 0.1;
                vec![t, 2.0 * t + e, 5.0]
            })
            .collect();
        let p = Pca::fit(&rows, 2);
        assert_eq!(p.dim_out(), 2);
        let a = &p.axes[0];
        let s = 5f64.sqrt();
        assert!((a[0] - 1.0 / s).abs() < 1e-2 && (a[1] - 2.0 / s).abs() < 1e-2);
        assert!(p.variances[0] > 100.0 * p.variances[1]);
        // points on the line have no residual beyond the noise
        assert!(p.residual(&[1.0, 2.0, 5.0]) < 0.1);
        assert!(p.residual(&[1.0, 2.0, 8.0]) > 2.9);
    }

    #[test]
    fn degenerate_inputs() {
        let p = Pca::fit(&[vec![1.0, 2.0]], 3);
        assert_eq!(p.dim_out(), 2);
        assert!(p.variances().iter().all(|&v| v == 0.0));
        assert_eq!(p.project(&[1.0, 2.0]), vec![0.0, 0.0]);
    }
}
