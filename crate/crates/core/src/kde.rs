//! Gaussian kernel density estimates in one and two dimensions, and
//! Kolmogorov–Smirnov distances.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;
pub const QUERY_POINTS_1D: usize = 1024;
pub const QUERY_POINTS_2D: usize = 128;
/// Query grids extend this many bandwidths past the sample range.
pub const QUERY_MARGIN: f64 = 6.0;

const MAX_QUERY_POINTS_1D: usize = 16_384;
const MAX_QUERY_POINTS_2D: usize = 512;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Silverman's rule `h_k = (4 / (d + 2))^{1/(d+4)} σ_k n^{-1/(d+4)}` per
/// coordinate. A zero spread falls back to `1e-3 · max(1, |mean_k|)`.
pub fn silverman_bandwidth(samples: &[DVector<f64>]) -> Result<Vec<f64>> {
    let dim = check_samples(samples)?;
    let n = samples.len() as f64;
    let d = dim as f64;
    let factor = (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * n.powf(-1.0 / (d + 4.0));
    Ok((0..dim)
        .map(|k| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if sd > 0.0 {
                factor * sd
            } else {
                1e-3 * mean.abs().max(1.0)
            }
        })
        .collect())
}

fn check_samples(samples: &[DVector<f64>]) -> Result<usize> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Density(format!("need at least {MIN_SAMPLES} samples, got {}", samples.len())));
    }
    let dim = samples[0].len();
    if !(1..=2).contains(&dim) {
        return Err(Error::Density(format!("density estimates are limited to 1 or 2 dimensions, got {dim}")));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
    }
    if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::Density("non-finite sample".into()));
    }
    Ok(dim)
}

/// Density values on a tensor grid; `density[i + j * axes[0].len()]` is the
/// value at `(axes[0][i], axes[1][j])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeEstimate {
    pub axes: Vec<Vec<f64>>,
    pub density: Vec<f64>,
    pub bandwidth: Vec<f64>,
    /// Trapezoid-rule mass on the query grid.
    pub mass: f64,
}

impl KdeEstimate {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }
}

/// Evenly spaced query axes covering the samples plus six bandwidths; the
/// point count is raised (up to a cap) so the spacing stays below `h / 2`.
pub fn auto_axes(samples: &[DVector<f64>], bandwidth: &[f64]) -> Vec<Vec<f64>> {
    let dim = bandwidth.len();
    let (base, cap) = if dim == 1 { (QUERY_POINTS_1D, MAX_QUERY_POINTS_1D) } else { (QUERY_POINTS_2D, MAX_QUERY_POINTS_2D) };
    (0..dim)
        .map(|k| {
            let (lo, hi) = samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[k]), hi.max(s[k])));
            let h = bandwidth[k];
            let (a, b) = (lo - QUERY_MARGIN * h, hi + QUERY_MARGIN * h);
            let wanted = ((b - a) / (0.5 * h)).ceil() as usize + 1;
            let m = wanted.clamp(base, cap);
            (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect()
        })
        .collect()
}

/// Kernel weights `φ_h(q_i - x_s)` as a `queries × samples` matrix.
fn kernel_matrix(axis: &[f64], samples: &[DVector<f64>], k: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(axis.len(), samples.len(), |i, s| {
        let z = (axis[i] - samples[s][k]) / h;
        FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / h
    })
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let m = axis.len();
    (0..m)
        .map(|i| {
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < m { axis[i + 1] - axis[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Product-kernel Gaussian KDE with Silverman bandwidths on the given axes
/// (one per coordinate).
pub fn kde_density(samples: &[DVector<f64>], axes: &[Vec<f64>]) -> Result<KdeEstimate> {
    let dim = check_samples(samples)?;
    if axes.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: axes.len() });
    }
    if axes.iter().any(|a| a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0]))) {
        return Err(Error::Density("query axes must be strictly increasing with at least two points".into()));
    }
    let bandwidth = silverman_bandwidth(samples)?;
    let n = samples.len() as f64;
    let k0 = kernel_matrix(&axes[0], samples, 0, bandwidth[0]);
    let w0 = trapezoid_weights(&axes[0]);
    let (density, mass) = if dim == 1 {
        let density: Vec<f64> = k0.row_iter().map(|r| r.sum() / n).collect();
        let mass = density.iter().zip(&w0).map(|(f, w)| f * w).sum();
        (density, mass)
    } else {
        let k1 = kernel_matrix(&axes[1], samples, 1, bandwidth[1]);
        let grid = (&k0 * k1.transpose()) / n;
        let w1 = trapezoid_weights(&axes[1]);
        let mut mass = 0.0;
        for j in 0..grid.ncols() {
            for i in 0..grid.nrows() {
                mass += grid[(i, j)] * w0[i] * w1[j];
            }
        }
        (grid.as_slice().to_vec(), mass)
    };
    Ok(KdeEstimate { axes: axes.to_vec(), density, bandwidth, mass })
}

/// KDE on [`auto_axes`].
pub fn kde_auto(samples: &[DVector<f64>]) -> Result<KdeEstimate> {
    let bandwidth = silverman_bandwidth(samples)?;
    kde_density(samples, &auto_axes(samples, &bandwidth))
}

/// CDF of a one-dimensional Gaussian KDE.
pub fn kde_cdf(samples: &[f64], bandwidth: f64, x: f64) -> f64 {
    let std = Normal::standard();
    samples.iter().map(|s| std.cdf((x - s) / bandwidth)).sum::<f64>() / samples.len() as f64
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            f64::max((i + 1) as f64 / n - f, f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

pub fn ks_distance_normal(samples: &[f64], mean: f64, sd: f64) -> Result<f64> {
    let dist = Normal::new(mean, sd).map_err(|e| Error::Density(e.to_string()))?;
    Ok(ks_distance(samples, |x| dist.cdf(x)))
}

/// `sup_q |F_kde(q) - F(q)|` over the query points of a 1D estimate.
pub fn kde_ks_distance(samples: &[f64], est: &KdeEstimate, cdf: impl Fn(f64) -> f64) -> f64 {
    est.axes[0]
        .iter()
        .map(|&q| (kde_cdf(samples, est.bandwidth[0], q) - cdf(q)).abs())
        .fold(0.0, f64::max)
}

/// `sup_q |f_kde(q) - f(q)|` over the query grid.
pub fn kde_sup_distance(est: &KdeEstimate, density: impl Fn(&[f64]) -> f64) -> f64 {
    let m0 = est.axes[0].len();
    est.density
        .iter()
        .enumerate()
        .map(|(idx, f)| {
            let point: Vec<f64> = if est.dim() == 1 {
                vec![est.axes[0][idx]]
            } else {
                vec![est.axes[0][idx % m0], est.axes[1][idx / m0]]
            };
            (f - density(&point)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng))).collect()
    }

    #[test]
    fn standard_normal_ks() {
        let s = normals(10_000, 1, 1);
        let est = kde_auto(&s).unwrap();
        assert!((est.mass - 1.0).abs() < 1e-3);
        let flat: Vec<f64> = s.iter().map(|v| v[0]).collect();
        let phi = Normal::standard();
        assert!(kde_ks_distance(&flat, &est, |x| phi.cdf(x)) < 0.02);
        assert!(ks_distance_normal(&flat, 0.0, 1.0).unwrap() < 0.02);
        let gauss = |p: &[f64]| FRAC_1_SQRT_2PI * (-0.5 * p[0] * p[0]).exp();
        assert!(kde_sup_distance(&est, gauss) < 0.03);
    }

    #[test]
    fn two_dimensional_mass() {
        let s = normals(2_000, 2, 2);
        let est = kde_auto(&s).unwrap();
        assert_eq!(est.density.len(), est.axes[0].len() * est.axes[1].len());
        assert!((est.mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn identical_samples_give_a_narrow_bump() {
        for dim in [1, 2] {
            let s = vec![DVector::from_element(dim, 2.5); 200];
            let est = kde_auto(&s).unwrap();
            assert!((est.mass - 1.0).abs() < 1e-3);
            assert!(est.bandwidth.iter().all(|&h| (h - 2.5e-3).abs() < 1e-15));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(kde_auto(&normals(50, 1, 0)), Err(Error::Density(_))));
        assert!(matches!(kde_auto(&normals(200, 3, 0)), Err(Error::Density(_))));
        let s = normals(200, 1, 0);
        assert!(kde_density(&s, &[vec![0.0, 0.0]]).is_err());
        assert!(kde_density(&s, &[vec![0.0, 1.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[0.5], |x| x), 0.5);
        let u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&u, |x| x) - 0.005).abs() < 1e-12);
        let shifted: Vec<f64> = normals(5_000, 1, 3).iter().map(|v| v[0] + 0.5).collect();
        assert!(ks_distance_normal(&shifted, 0.0, 1.0).unwrap() > 0.15);
    }
}
