//! Young-type integration on grids and variation norms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{same_grid, GridFunction1D, GridFunction2D};

/// Largest grid for which [`RhoMode::Exact`] enumerates all partitions.
pub const EXACT_RHO_MAX_POINTS: usize = 14;

/// Left-point Riemann–Stieltjes sum `Σ_i f(t_i) ⊗ (g(t_{i+1}) - g(t_i))`.
///
/// Returns an `m×k` matrix for `f: ℝ^m`, `g: ℝ^k`; scalar integrals are `1×1`.
pub fn young_integral_1d(f: &GridFunction1D, g: &GridFunction1D) -> Result<DMatrix<f64>> {
    same_grid(f.grid(), g.grid())?;
    let n = f.len();
    let fv = f.values().rows(0, n - 1);
    let dg = g.values().rows(1, n - 1) - g.values().rows(0, n - 1);
    Ok(fv.transpose() * dg)
}

/// `Σ_{i,j} f(s_i) ⊗ g(t_j) □_{ij}R` with left-point evaluation.
pub fn young_integral_2d(
    f: &GridFunction1D,
    g: &GridFunction1D,
    r: &GridFunction2D,
) -> Result<DMatrix<f64>> {
    same_grid(f.grid(), r.grid_s())?;
    same_grid(g.grid(), r.grid_t())?;
    let q = r.rectangle_increments();
    Ok(young_integral_2d_increments(f.values(), g.values(), &q))
}

/// Same as [`young_integral_2d`] with precomputed rectangle increments `q`;
/// `f` and `g` may have more rows than `q` covers, extra rows are ignored.
pub(crate) fn young_integral_2d_increments(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> DMatrix<f64> {
    let fl = f.rows(0, q.nrows());
    let gl = g.rows(0, q.ncols());
    fl.transpose() * (q * gl)
}

/// Exact p-variation over all sub-partitions of the index set `0..n`, where
/// `dist(i, j)` is the size of the increment between points `i < j`.
///
/// `dp[j] = max_{i<j} dp[i] + dist(i,j)^p`; O(n²) distance evaluations.
pub fn p_variation_by(n: usize, p: f64, mut dist: impl FnMut(usize, usize) -> f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::ExponentRange(p));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let mut best = vec![0.0f64; n];
    for j in 1..n {
        let mut m = 0.0f64;
        for i in 0..j {
            let v = best[i] + dist(i, j).powf(p);
            if v > m {
                m = v;
            }
        }
        best[j] = m;
    }
    Ok(best[n - 1].powf(1.0 / p))
}

/// p-variation of a grid path with Euclidean increments.
pub fn p_variation(path: &GridFunction1D, p: f64) -> Result<f64> {
    let v = path.values();
    let n = path.len();
    p_variation_by(n, p, |i, j| (v.row(j) - v.row(i)).norm())
}

/// Max over the given partitions (index lists) of `(Σ dist^p)^{1/p}`.
pub fn p_variation_over_partitions(
    partitions: &[Vec<usize>],
    p: f64,
    mut dist: impl FnMut(usize, usize) -> f64,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::ExponentRange(p));
    }
    let mut best = 0.0f64;
    for part in partitions {
        let s: f64 = part.windows(2).map(|w| dist(w[0], w[1]).powf(p)).sum();
        best = best.max(s);
    }
    Ok(best.powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    /// All sub-partitions; at most [`EXACT_RHO_MAX_POINTS`] grid points.
    Exact,
    /// Full grid and its dyadic coarsenings; a lower bound of the supremum.
    DiagonalRefinement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoVariation {
    /// `(sup_D Σ_{i,j} |□R|^ρ)^{1/ρ}` over the searched partitions.
    pub value: f64,
    pub rho: f64,
    pub exact: bool,
    /// True when `value` may underestimate the supremum over all partitions.
    pub lower_bound: bool,
    pub partitions_evaluated: usize,
}

/// `Σ_{a,b} |R(t_{a+1},t_{b+1}) - R(t_a,t_{b+1}) - R(t_{a+1},t_b) + R(t_a,t_b)|^ρ`
/// over the intervals of one partition (indices into the grid).
pub fn rho_sum_on_partition(r: &DMatrix<f64>, partition: &[usize], rho: f64) -> f64 {
    let mut s = 0.0;
    for a in partition.windows(2) {
        for b in partition.windows(2) {
            let q = r[(a[1], b[1])] - r[(a[0], b[1])] - r[(a[1], b[0])] + r[(a[0], b[0])];
            s += q.abs().powf(rho);
        }
    }
    s
}

/// All sub-partitions of `0..n` keeping both endpoints.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    if n < 2 {
        return vec![];
    }
    let interior = n - 2;
    (0u64..(1u64 << interior))
        .map(|mask| {
            let mut part = Vec::with_capacity(n);
            part.push(0);
            for k in 0..interior {
                if mask & (1 << k) != 0 {
                    part.push(k + 1);
                }
            }
            part.push(n - 1);
            part
        })
        .collect()
}

/// The full partition `0..n` and its dyadic coarsenings (every `2^k`-th
/// point, last point always kept).
pub fn dyadic_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut step = 1usize;
    loop {
        let mut part: Vec<usize> = (0..n).step_by(step).collect();
        if *part.last().unwrap() != n - 1 {
            part.push(n - 1);
        }
        let intervals = part.len() - 1;
        out.push(part);
        if intervals <= 1 {
            break;
        }
        step *= 2;
    }
    out
}

/// ρ-variation of a covariance over a common partition of both axes.
pub fn rho_variation_2d(r: &GridFunction2D, rho: f64, mode: RhoMode) -> Result<RhoVariation> {
    if !(rho >= 1.0) {
        return Err(Error::ExponentRange(rho));
    }
    same_grid(r.grid_s(), r.grid_t())?;
    let n = r.grid_s().len();
    let partitions = match mode {
        RhoMode::Exact => {
            if n > EXACT_RHO_MAX_POINTS {
                return Err(Error::TooManyPoints { max: EXACT_RHO_MAX_POINTS, found: n });
            }
            all_partitions(n)
        }
        RhoMode::DiagonalRefinement => dyadic_partitions(n),
    };
    let sup = partitions
        .iter()
        .map(|p| rho_sum_on_partition(r.values(), p, rho))
        .fold(0.0, f64::max);
    Ok(RhoVariation {
        value: sup.powf(1.0 / rho),
        rho,
        exact: mode == RhoMode::Exact,
        lower_bound: mode == RhoMode::DiagonalRefinement,
        partitions_evaluated: partitions.len(),
    })
}
