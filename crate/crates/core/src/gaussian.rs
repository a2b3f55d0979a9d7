//! Gaussian driving processes: covariance kernels, exact grid sampling,
//! grid Cameron–Martin bases and non-degeneracy checks.
//!
//! All processes are centered, start at zero and have independent
//! components, so the covariance is `diag(R^(1), ..., R^(d))`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction1D, GridFunction2D, TimeGrid};
use crate::young::{
    all_partitions, dyadic_partitions, p_variation_over_partitions, rho_sum_on_partition,
    young_integral_2d, EXACT_RHO_MAX_POINTS,
};

/// Relative threshold `λ_min > NONDEG_TOL · trace / n` for grid covariances.
pub const NONDEG_TOL: f64 = 1e-10;
/// Relative eigenvalue cutoff for Cameron–Martin bases.
pub const BASIS_CUTOFF: f64 = 1e-12;
/// Diagonal jitter (relative to `trace / n`) tried when Cholesky fails.
pub const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    /// `min(s, t)`.
    Brownian,
    /// `(t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
    Fractional { hurst: f64 },
    /// Brownian bridge returning to zero at `pin`: `min(s,t) - st/pin`.
    Bridge { pin: f64 },
    /// The zero process.
    Zero,
    /// `scale² · inner`, the kernel of `scale · X`.
    Scaled { scale: f64, inner: Box<Kernel> },
}

impl Kernel {
    pub fn fractional(hurst: f64) -> Result<Kernel> {
        let k = Kernel::Fractional { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn bridge(pin: f64) -> Result<Kernel> {
        let k = Kernel::Bridge { pin };
        k.validate()?;
        Ok(k)
    }

    pub fn scaled(scale: f64, inner: Kernel) -> Kernel {
        Kernel::Scaled { scale, inner: Box::new(inner) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Fractional { hurst } if !(*hurst > 0.0 && *hurst < 1.0) => {
                Err(Error::InvalidKernel(format!("Hurst index must lie in (0,1), got {hurst}")))
            }
            Kernel::Bridge { pin } if !(*pin > 0.0) => {
                Err(Error::InvalidKernel(format!("bridge pin time must be > 0, got {pin}")))
            }
            Kernel::Scaled { scale, inner } => {
                if !scale.is_finite() {
                    return Err(Error::InvalidKernel(format!("non-finite scale {scale}")));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            Kernel::Brownian => s.min(t),
            Kernel::Fractional { hurst } => {
                let h2 = 2.0 * hurst;
                0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
            }
            Kernel::Bridge { pin } => s.min(t) - s * t / pin,
            Kernel::Zero => 0.0,
            Kernel::Scaled { scale, inner } => scale * scale * inner.eval(s, t),
        }
    }

    /// Known ρ for which the covariance has finite ρ-variation, floored at 1.
    pub fn analytic_rho(&self) -> Option<f64> {
        match self {
            Kernel::Brownian | Kernel::Bridge { .. } | Kernel::Zero => Some(1.0),
            Kernel::Fractional { hurst } => Some(f64::max(1.0, 1.0 / (2.0 * hurst))),
            Kernel::Scaled { inner, .. } => inner.analytic_rho(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Kernel::Brownian => "bm".into(),
            Kernel::Fractional { hurst } => format!("fbm(H={hurst})"),
            Kernel::Bridge { pin } => format!("bridge(pin={pin})"),
            Kernel::Zero => "zero".into(),
            Kernel::Scaled { scale, inner } => format!("{scale}*{}", inner.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    components: Vec<Kernel>,
    labels: Vec<String>,
    horizon: f64,
}

impl CovarianceModel {
    pub fn new(components: Vec<Kernel>, horizon: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidKernel("model needs at least one component".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidKernel(format!("horizon must be > 0, got {horizon}")));
        }
        for k in &components {
            k.validate()?;
        }
        let labels = components.iter().map(Kernel::label).collect();
        Ok(Self { components, labels, horizon })
    }

    /// `d` independent copies of one kernel.
    pub fn iid(kernel: Kernel, d: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![kernel; d], horizon)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn components(&self) -> &[Kernel] {
        &self.components
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn analytic_rho(&self) -> Vec<Option<f64>> {
        self.components.iter().map(Kernel::analytic_rho).collect()
    }

    pub fn kernel_eval(&self, k: usize, s: f64, t: f64) -> Result<f64> {
        let kernel = self
            .components
            .get(k)
            .ok_or(Error::DimensionMismatch { expected: self.dim(), found: k + 1 })?;
        let tol = 1e-12 * self.horizon;
        if s < -tol || t < -tol || s > self.horizon + tol || t > self.horizon + tol {
            return Err(Error::InvalidKernel(format!(
                "({s}, {t}) outside [0, {}]²",
                self.horizon
            )));
        }
        Ok(kernel.eval(s, t))
    }

    /// `R^(k)(t_i, t_j)` on the full grid, `t = 0` included.
    pub fn covariance_on(&self, grid: &TimeGrid, k: usize) -> GridFunction2D {
        let kernel = &self.components[k];
        GridFunction2D::from_fn(grid, grid, |s, t| kernel.eval(s, t))
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if grid.horizon() > self.horizon * (1.0 + 1e-12) {
            return Err(Error::GridMismatch(format!(
                "grid ends at {} beyond model horizon {}",
                grid.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Covariance of the grid values `X_{t_1}, ..., X_{t_n}` (excluding `t_0 = 0`).
fn interior_covariance(kernel: &Kernel, grid: &TimeGrid) -> DMatrix<f64> {
    let pts = &grid.points()[1..];
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| kernel.eval(pts[i], pts[j]))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// One grid path `X_{t_i}`, `values[(i, k)]` for component `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub grid: TimeGrid,
    pub values: DMatrix<f64>,
    pub seed: u64,
    pub sample_index: u64,
}

impl PathSample {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>, seed: u64, sample_index: u64) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} rows for {} grid points",
                values.nrows(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, seed, sample_index })
    }

    /// A deterministic path given by `f(t)`.
    pub fn from_fn(grid: &TimeGrid, dim: usize, f: impl Fn(f64) -> DVector<f64>) -> Self {
        let values = GridFunction1D::from_fn(grid, dim, f).values().clone();
        Self { grid: grid.clone(), values, seed: 0, sample_index: 0 }
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn as_grid_function(&self) -> GridFunction1D {
        GridFunction1D::new(self.grid.clone(), self.values.clone()).expect("validated shape")
    }

    /// The same piecewise-linear path sampled on `grid.refine(factor)`.
    pub fn refine(&self, factor: usize) -> PathSample {
        let factor = factor.max(1);
        let grid = self.grid.refine(factor);
        let d = self.dim();
        let n = self.grid.intervals();
        let mut values = DMatrix::zeros(n * factor + 1, d);
        for i in 0..n {
            for k in 0..factor {
                let w = k as f64 / factor as f64;
                let row = self.values.row(i) * (1.0 - w) + self.values.row(i + 1) * w;
                values.row_mut(i * factor + k).copy_from(&row);
            }
        }
        values.row_mut(n * factor).copy_from(&self.values.row(n));
        PathSample { grid, values, seed: self.seed, sample_index: self.sample_index }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorEvent {
    /// Cholesky succeeded only after adding `jitter` on the diagonal.
    Jittered { component: usize, jitter: f64 },
}

/// Square-root factors of the per-component grid covariances.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    grid: TimeGrid,
    factors: Vec<DMatrix<f64>>,
    events: Vec<FactorEvent>,
}

impl GaussianSampler {
    pub fn new(model: &CovarianceModel, grid: &TimeGrid) -> Result<Self> {
        model.check_grid(grid)?;
        let mut factors = Vec::with_capacity(model.dim());
        let mut events = Vec::new();
        for (k, kernel) in model.components().iter().enumerate() {
            let cov = interior_covariance(kernel, grid);
            let n = cov.nrows();
            if cov.iter().all(|&v| v == 0.0) {
                factors.push(DMatrix::zeros(n, n));
                continue;
            }
            if let Some(ch) = Cholesky::new(cov.clone()) {
                factors.push(ch.l());
                continue;
            }
            let jitter = JITTER * cov.trace().abs() / n as f64;
            let mut jittered = cov.clone();
            for i in 0..n {
                jittered[(i, i)] += jitter;
            }
            match Cholesky::new(jittered) {
                Some(ch) => {
                    events.push(FactorEvent::Jittered { component: k, jitter });
                    factors.push(ch.l());
                }
                None => {
                    return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min_eigenvalue(&cov) })
                }
            }
        }
        Ok(Self { grid: grid.clone(), factors, events })
    }

    pub fn events(&self) -> &[FactorEvent] {
        &self.events
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Sample number `sample_index` of the stream keyed by `seed`.
    ///
    /// Each `(seed, sample_index)` pair has its own ChaCha stream, so the
    /// result does not depend on which samples were drawn before.
    pub fn sample(&self, seed: u64, sample_index: u64) -> PathSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample_index);
        let n = self.grid.len();
        let d = self.factors.len();
        let mut values = DMatrix::zeros(n, d);
        for (k, l) in self.factors.iter().enumerate() {
            let z = DVector::from_fn(n - 1, |_, _| StandardNormal.sample(&mut rng));
            let x = l * z;
            for i in 1..n {
                values[(i, k)] = x[i - 1];
            }
        }
        PathSample { grid: self.grid.clone(), values, seed, sample_index }
    }
}

pub fn sample_paths(
    model: &CovarianceModel,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let sampler = GaussianSampler::new(model, grid)?;
    Ok((0..count as u64).map(|i| sampler.sample(seed, i)).collect())
}

/// Orthonormal basis of the grid Cameron–Martin space of one component.
///
/// The grid space is the column space of `R = [R(t_i, t_j)]_{i,j≥1}` with
/// `⟨R a, R b⟩_H = aᵀ R b`. With `R = Σ λ_n v_n v_nᵀ` the basis paths are
/// `h_n(t_i) = √λ_n v_n(i)` and `h_n(0) = 0`.
#[derive(Debug, Clone)]
pub struct CameronMartinBasis {
    pub component: usize,
    pub grid: TimeGrid,
    pub basis_paths: Vec<GridFunction1D>,
    pub eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl CameronMartinBasis {
    pub fn new(model: &CovarianceModel, grid: &TimeGrid, component: usize) -> Result<Self> {
        model.check_grid(grid)?;
        let kernel = model
            .components()
            .get(component)
            .ok_or(Error::DimensionMismatch { expected: model.dim(), found: component + 1 })?;
        let cov = interior_covariance(kernel, grid);
        let m = cov.nrows();
        let empty = || CameronMartinBasis {
            component,
            grid: grid.clone(),
            basis_paths: Vec::new(),
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(m, 0),
        };
        if cov.iter().all(|&v| v == 0.0) {
            return Ok(empty());
        }
        let eig = SymmetricEigen::new(cov);
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        if lambda_max <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        if lambda_min < -1e-8 * lambda_max {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: lambda_min });
        }
        let mut order: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > BASIS_CUTOFF * lambda_max).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(m, order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        let basis_paths = (0..order.len())
            .map(|c| {
                let scale = eigenvalues[c].sqrt();
                let mut v = vec![0.0; m + 1];
                for r in 0..m {
                    v[r + 1] = scale * eigenvectors[(r, c)];
                }
                GridFunction1D::scalar(grid.clone(), &v).expect("grid length")
            })
            .collect();
        Ok(CameronMartinBasis { component, grid: grid.clone(), basis_paths, eigenvalues, eigenvectors })
    }

    pub fn len(&self) -> usize {
        self.basis_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis_paths.is_empty()
    }

    /// Grid inner product `⟨u, w⟩_H = uᵀ R⁺ w` on the interior grid values.
    /// Exact for elements of the grid Cameron–Martin space.
    pub fn inner_product(&self, u: &GridFunction1D, w: &GridFunction1D) -> Result<f64> {
        crate::grid::same_grid(u.grid(), &self.grid)?;
        crate::grid::same_grid(w.grid(), &self.grid)?;
        let m = self.grid.len() - 1;
        let uv = u.values().column(0).rows(1, m).into_owned();
        let wv = w.values().column(0).rows(1, m).into_owned();
        let pu = self.eigenvectors.transpose() * uv;
        let pw = self.eigenvectors.transpose() * wv;
        Ok((0..self.eigenvalues.len()).map(|n| pu[n] * pw[n] / self.eigenvalues[n]).sum())
    }
}

/// One basis per component.
pub fn cameron_martin_basis(model: &CovarianceModel, grid: &TimeGrid) -> Result<Vec<CameronMartinBasis>> {
    (0..model.dim()).map(|k| CameronMartinBasis::new(model, grid, k)).collect()
}

/// The grid Cameron–Martin element `h = R a` of component `k` and its norm
/// `√(aᵀ R a)`.
pub fn cm_element(model: &CovarianceModel, k: usize, grid: &TimeGrid, coeffs: &[f64]) -> Result<(GridFunction1D, f64)> {
    let kernel = model
        .components()
        .get(k)
        .ok_or(Error::DimensionMismatch { expected: model.dim(), found: k + 1 })?;
    let cov = interior_covariance(kernel, grid);
    if coeffs.len() != cov.nrows() {
        return Err(Error::DimensionMismatch { expected: cov.nrows(), found: coeffs.len() });
    }
    let a = DVector::from_column_slice(coeffs);
    let h = &cov * &a;
    let norm_sq = a.dot(&h).max(0.0);
    let mut v = vec![0.0; grid.len()];
    v[1..].copy_from_slice(h.as_slice());
    Ok((GridFunction1D::scalar(grid.clone(), &v)?, norm_sq.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    /// Smallest eigenvalue of `[R^(k)(t_i, t_j)]` per component.
    pub lambda_min: Vec<f64>,
    pub determinant: Vec<f64>,
    pub threshold: Vec<f64>,
    pub nondegenerate: bool,
}

pub fn nondegeneracy_check(model: &CovarianceModel, times: &[f64]) -> Result<NondegeneracyReport> {
    if times.is_empty()
        || times[0] <= 0.0
        || times.windows(2).any(|w| w[1] <= w[0])
        || *times.last().unwrap() > model.horizon() * (1.0 + 1e-12)
    {
        return Err(Error::UnorderedTimes);
    }
    let n = times.len();
    let mut report = NondegeneracyReport {
        lambda_min: Vec::new(),
        determinant: Vec::new(),
        threshold: Vec::new(),
        nondegenerate: true,
    };
    for kernel in model.components() {
        let cov = DMatrix::from_fn(n, n, |i, j| kernel.eval(times[i], times[j]));
        let lmin = min_eigenvalue(&cov);
        let threshold = NONDEG_TOL * cov.trace() / n as f64;
        report.determinant.push(cov.determinant());
        report.lambda_min.push(lmin);
        report.threshold.push(threshold);
        if !(lmin > threshold) {
            report.nondegenerate = false;
        }
    }
    Ok(report)
}

/// `Var[∫ f dX] = Σ_k ∫∫ f_k(s) f_k(t) dR^(k)(s,t)`.
pub fn variance_of_linear_functional(model: &CovarianceModel, f: &GridFunction1D) -> Result<f64> {
    if f.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: f.dim() });
    }
    model.check_grid(f.grid())?;
    let mut total = 0.0;
    for k in 0..model.dim() {
        let fk = f.component(k);
        let r = model.covariance_on(f.grid(), k);
        total += young_integral_2d(&fk, &fk, &r)?[(0, 0)];
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmEmbedding {
    /// ρ-variation of `h` over the partition family.
    pub lhs: f64,
    /// `|h|_H · √(R_{ρ-var})` over the same family.
    pub rhs: f64,
    pub holds: bool,
    /// All sub-partitions were searched (small grids).
    pub exact: bool,
}

/// Checks `|h|_{ρ-var} ≤ |h|_H √(|R|_{ρ-var})` on the grid of `h`, with
/// `h_norm = |h|_H`.
///
/// The inequality holds partition by partition, so both sides are taken over
/// the same family: every sub-partition when the grid has at most 14 points,
/// otherwise the full grid and its dyadic coarsenings.
pub fn cm_embedding_check(
    model: &CovarianceModel,
    component: usize,
    h: &GridFunction1D,
    h_norm: f64,
    rho: f64,
) -> Result<CmEmbedding> {
    if !(rho >= 1.0) {
        return Err(Error::ExponentRange(rho));
    }
    if component >= model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: component + 1 });
    }
    let grid = h.grid();
    model.check_grid(grid)?;
    let n = grid.len();
    let exact = n <= EXACT_RHO_MAX_POINTS;
    let partitions = if exact { all_partitions(n) } else { dyadic_partitions(n) };
    let vals = h.values();
    let lhs = p_variation_over_partitions(&partitions, rho, |i, j| (vals[(j, 0)] - vals[(i, 0)]).abs())?;
    let r = model.covariance_on(grid, component);
    let rvar = partitions
        .iter()
        .map(|p| rho_sum_on_partition(r.values(), p, rho))
        .fold(0.0, f64::max)
        .powf(1.0 / rho);
    let rhs = h_norm * rvar.sqrt();
    Ok(CmEmbedding { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-9), exact })
}
