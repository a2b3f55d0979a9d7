//! End-to-end Monte Carlo runs: sample, lift, solve, Malliavin matrix,
//! spectrum and density estimate.
//!
//! Sample `i` draws from the ChaCha stream `(seed, i)`, so results do not
//! depend on the number of worker threads. Rows are emitted in sample order.

use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, LogNormal};
use statrs::statistics::{Data, OrderStatistics};

use crate::artifacts::{write_samples_csv, SampleRow};
use crate::config::{ExperimentConfig, Oracle};
use crate::error::{Error, Result};
use crate::fields::VectorFieldSystem;
use crate::gaussian::{
    cameron_martin_basis, nondegeneracy_check, CameronMartinBasis, CovarianceModel, FactorEvent, GaussianSampler,
    Kernel, NondegeneracyReport,
};
use crate::grid::TimeGrid;
use crate::kde::{kde_auto, kde_ks_distance, kde_sup_distance, ks_distance_normal, KdeEstimate, MIN_SAMPLES};
use crate::lift::lift_piecewise_linear;
use crate::malliavin::{
    malliavin_matrix_2d_with, malliavin_matrix_parseval, relative_frobenius, spectrum_with_tau, GridCovariance,
};
use crate::rde::solve_flow_jacobian;
use crate::young::{rho_variation_2d, RhoMode};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Samples cross-checked against the Parseval route.
pub const ROUTE_CHECK_SAMPLES: usize = 10;
/// Lowest Hurst index covered by the theory.
pub const MIN_HURST: f64 = 1.0 / 3.0;
/// Covariance ρ at or above which Cameron–Martin translations are no longer
/// controlled.
pub const RHO_WARNING: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoReport {
    pub component: usize,
    pub kernel: String,
    pub analytic_rho: Option<f64>,
    /// Diagonal-refinement estimate of `|R|_{ρ-var}`, a lower bound.
    pub estimate: f64,
    pub partitions_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub ellipticity: bool,
    /// Singular values of `[V_1(y0) ... V_d(y0)]`, descending.
    pub singular_values: Vec<f64>,
    pub gaussian_nondeg: bool,
    pub nondegeneracy: NondegeneracyReport,
    pub rho: Vec<RhoReport>,
    pub warnings: Vec<String>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.ellipticity && self.gaussian_nondeg
    }
}

fn hurst_of(kernel: &Kernel) -> Option<f64> {
    match kernel {
        Kernel::Fractional { hurst } => Some(*hurst),
        Kernel::Scaled { inner, .. } => hurst_of(inner),
        _ => None,
    }
}

/// Ellipticity at `y0`, Gaussian non-degeneracy at the evaluation times and
/// a covariance ρ-variation report. Fractional drivers with `H ≤ 1/3` are
/// rejected outright.
pub fn check_conditions(config: &ExperimentConfig) -> Result<ConditionReport> {
    let model = config.build_model()?;
    let vf = config.build_fields()?;
    let grid = config.grid()?;
    let mut warnings = Vec::new();
    let mut rho = Vec::new();
    for (k, kernel) in model.components().iter().enumerate() {
        if let Some(h) = hurst_of(kernel) {
            if h <= MIN_HURST {
                return Err(Error::Condition(format!(
                    "fractional driver with H = {h} is outside the supported range H > 1/3"
                )));
            }
        }
        let analytic = kernel.analytic_rho();
        let r = rho_variation_2d(&model.covariance_on(&grid, k), analytic.unwrap_or(1.0), RhoMode::DiagonalRefinement)?;
        if let Some(a) = analytic.filter(|&a| a >= RHO_WARNING) {
            warnings.push(format!("component {k}: covariance rho = {a} >= 3/2"));
        }
        rho.push(RhoReport {
            component: k,
            kernel: kernel.label(),
            analytic_rho: analytic,
            estimate: r.value,
            partitions_evaluated: r.partitions_evaluated,
        });
    }
    let (ellipticity, singular_values) = vf.ellipticity(&config.y0());
    if !ellipticity {
        warnings.push("vector fields do not span the tangent space at y0".into());
    }
    let nondegeneracy = nondegeneracy_check(&model, &config.times)?;
    if !nondegeneracy.nondegenerate {
        warnings.push("driver covariance is degenerate at the evaluation times".into());
    }
    Ok(ConditionReport {
        ellipticity,
        singular_values,
        gaussian_nondeg: nondegeneracy.nondegenerate,
        nondegeneracy,
        rho,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut data = Data::new(values.to_vec());
        Some(Self {
            min: data.quantile(0.0),
            q05: data.quantile(0.05),
            q25: data.quantile(0.25),
            median: data.quantile(0.5),
            q75: data.quantile(0.75),
            q95: data.quantile(0.95),
            max: data.quantile(1.0),
        })
    }
}

/// Comparison of the samples with a closed-form law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticComparison {
    pub law: String,
    /// KS distance of `log Y_t` to its normal law.
    pub ks_log: f64,
    /// `sup |F_kde - F|` on the query grid.
    pub kde_ks: Option<f64>,
    /// `sup |f_kde - f|` on the query grid.
    pub kde_sup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSummary {
    pub t: f64,
    pub samples: usize,
    pub fraction_degenerate: f64,
    pub lambda_min: Option<Quantiles>,
    pub max_abs_det_degenerate: Option<f64>,
    pub density: Option<KdeEstimate>,
    pub density_note: Option<String>,
    pub analytic: Option<AnalyticComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteCheck {
    pub samples_checked: usize,
    pub max_relative_frobenius: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleFailure {
    pub sample_index: u64,
    pub reason: String,
}

/// Aggregate results; serialized as the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub conditions: ConditionReport,
    pub sampler_events: Vec<String>,
    pub requested: usize,
    pub completed: usize,
    pub failures: Vec<SampleFailure>,
    /// Largest `max |σ - σᵀ| / 2` before symmetrization.
    pub max_asymmetry: f64,
    pub route_check: RouteCheck,
    pub times: Vec<TimeSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: DensityReport,
    pub rows: Vec<SampleRow>,
    pub state_dim: usize,
}

impl ExperimentRun {
    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_samples_csv(self.state_dim, &self.rows, &mut buf)?;
        Ok(buf)
    }

    pub fn json_string(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// Writes the CSV and JSON artifacts into `dir`, returning their paths.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let outputs = &self.report.config.outputs;
        let csv_path = dir.join(&outputs.csv);
        let json_path = dir.join(&outputs.json);
        std::fs::write(&csv_path, self.csv_bytes()?)?;
        std::fs::write(&json_path, self.json_string() + "\n")?;
        Ok((csv_path, json_path))
    }

    /// Rows at evaluation time `t`.
    pub fn rows_at(&self, t: f64) -> impl Iterator<Item = &SampleRow> {
        self.rows.iter().filter(move |r| r.t == t)
    }
}

struct Pipeline<'a> {
    config: &'a ExperimentConfig,
    vf: VectorFieldSystem,
    sampler: GaussianSampler,
    cov: GridCovariance,
    basis: Option<Vec<CameronMartinBasis>>,
    y0: DVector<f64>,
}

struct SampleOutcome {
    rows: Vec<SampleRow>,
    route_residual: Option<f64>,
    asymmetry: f64,
}

impl Pipeline<'_> {
    fn run_sample(&self, index: u64) -> Result<SampleOutcome> {
        let c = self.config;
        let path = self.sampler.sample(c.seed, index);
        let x = lift_piecewise_linear(&path)?;
        let flow = solve_flow_jacobian(&x, &self.vf, &self.y0)?;
        let pvar = x.p_variation(c.pvar_p)?;
        let jac = flow.jacobian()?;
        let check_route = (index as usize) < ROUTE_CHECK_SAMPLES;
        let mut rows = Vec::with_capacity(c.times.len());
        let mut route_residual: Option<f64> = None;
        let mut asymmetry = 0.0f64;
        for &t in &c.times {
            let ti = flow.grid.index_of(t)?;
            let sigma = malliavin_matrix_2d_with(&flow, &self.vf, &self.cov, t)?;
            asymmetry = asymmetry.max(sigma.asymmetry);
            let spec = spectrum_with_tau(&sigma, c.thresholds.tau);
            if check_route {
                if let Some(basis) = &self.basis {
                    let other = malliavin_matrix_parseval(&flow, &self.vf, basis, t)?;
                    let r = relative_frobenius(&sigma.sigma, &other.sigma);
                    route_residual = Some(route_residual.map_or(r, |m| m.max(r)));
                }
            }
            rows.push(SampleRow {
                sample_index: index,
                t,
                y: flow.y[ti].clone(),
                lambda_min: spec.lambda_min,
                det: spec.det,
                nondegenerate: spec.nondegenerate,
                pvar_driver: pvar,
                log_norm_j: jac.j[ti].singular_values().max().ln(),
            });
        }
        Ok(SampleOutcome { rows, route_residual, asymmetry })
    }
}

fn lognormal_comparison(
    config: &ExperimentConfig,
    model: &CovarianceModel,
    t: f64,
    ys: &[f64],
    density: Option<&KdeEstimate>,
) -> Result<Option<AnalyticComparison>> {
    let a = config.lognormal_rate()?;
    let var = a * a * model.kernel_eval(0, t, t)?;
    if !(var > 0.0) || ys.iter().any(|&y| !(y > 0.0)) {
        return Ok(None);
    }
    let mu = config.fields.y0[0].ln();
    let sd = var.sqrt();
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let ks_log = ks_distance_normal(&logs, mu, sd)?;
    let law = LogNormal::new(mu, sd).map_err(|e| Error::Density(e.to_string()))?;
    let pdf = |x: f64| {
        if x > 0.0 {
            (-(x.ln() - mu).powi(2) / (2.0 * var)).exp() / (x * sd * (2.0 * std::f64::consts::PI).sqrt())
        } else {
            0.0
        }
    };
    Ok(Some(AnalyticComparison {
        law: format!("lognormal(mu={mu}, sigma={sd})"),
        ks_log,
        kde_ks: density.map(|d| kde_ks_distance(ys, d, |x| if x > 0.0 { law.cdf(x) } else { 0.0 })),
        kde_sup: density.map(|d| kde_sup_distance(d, |p| pdf(p[0]))),
    }))
}

fn summarize_time(
    config: &ExperimentConfig,
    model: &CovarianceModel,
    t: f64,
    rows: &[&SampleRow],
) -> Result<TimeSummary> {
    let n = rows.len();
    let degenerate = rows.iter().filter(|r| !r.nondegenerate).count();
    let lambdas: Vec<f64> = rows.iter().map(|r| r.lambda_min).collect();
    let max_abs_det_degenerate =
        rows.iter().filter(|r| !r.nondegenerate).map(|r| r.det.abs()).reduce(f64::max);
    let e = config.fields.y0.len();
    let points: Vec<DVector<f64>> = rows.iter().map(|r| r.y.clone()).collect();
    let (density, density_note) = if e > 2 {
        (None, Some("state dimension > 2: see the raw samples in the CSV".to_string()))
    } else if n < MIN_SAMPLES {
        (None, Some(format!("fewer than {MIN_SAMPLES} samples")))
    } else {
        match kde_auto(&points) {
            Ok(d) => (Some(d), None),
            Err(err) => (None, Some(err.to_string())),
        }
    };
    let analytic = match config.oracle {
        Some(Oracle::Lognormal) if n > 0 => {
            let ys: Vec<f64> = rows.iter().map(|r| r.y[0]).collect();
            lognormal_comparison(config, model, t, &ys, density.as_ref())?
        }
        _ => None,
    };
    Ok(TimeSummary {
        t,
        samples: n,
        fraction_degenerate: if n == 0 { 0.0 } else { degenerate as f64 / n as f64 },
        lambda_min: Quantiles::of(&lambdas),
        max_abs_det_degenerate,
        density,
        density_note,
        analytic,
    })
}

/// Runs the configured experiment on the current rayon pool.
///
/// Conditions are checked first; a failed condition is an error unless the
/// configuration sets `expect_degenerate`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let conditions = check_conditions(config)?;
    if !conditions.passed() && !config.expect_degenerate {
        return Err(Error::Condition(conditions.warnings.join("; ")));
    }
    let model = config.build_model()?;
    let grid: TimeGrid = config.grid()?;
    let vf = config.build_fields()?;
    let sampler = GaussianSampler::new(&model, &grid)?;
    let sampler_events = sampler
        .events()
        .iter()
        .map(|FactorEvent::Jittered { component, jitter }| format!("component {component}: diagonal jitter {jitter:e}"))
        .collect();
    let cov = GridCovariance::new(&model, &grid)?;
    let (basis, basis_note) = match cameron_martin_basis(&model, &grid) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(format!("Parseval route unavailable: {e}"))),
    };
    let pipeline = Pipeline { config, vf, sampler, cov, basis, y0: config.y0() };

    let outcomes: Vec<(u64, Result<SampleOutcome>)> =
        (0..config.count as u64).into_par_iter().map(|i| (i, pipeline.run_sample(i))).collect();

    let mut rows = Vec::with_capacity(config.count * config.times.len());
    let mut failures = Vec::new();
    let mut route_max = 0.0f64;
    let mut route_checked = 0;
    let mut max_asymmetry = 0.0f64;
    for (i, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                if let Some(r) = o.route_residual {
                    route_max = route_max.max(r);
                    route_checked += 1;
                }
                max_asymmetry = max_asymmetry.max(o.asymmetry);
                rows.extend(o.rows);
            }
            Err(e) => {
                warn!("sample {i} aborted: {e}");
                failures.push(SampleFailure { sample_index: i, reason: e.to_string() });
            }
        }
    }
    if failures.len() as f64 > config.thresholds.max_failure_fraction * config.count as f64 {
        return Err(Error::Aborted { failed: failures.len(), total: config.count });
    }

    let mut times = Vec::with_capacity(config.times.len());
    for &t in &config.times {
        let at: Vec<&SampleRow> = rows.iter().filter(|r| r.t == t).collect();
        times.push(summarize_time(config, &model, t, &at)?);
    }
    let tolerance = config.thresholds.route_tolerance;
    let report = DensityReport {
        tool: "rdens".into(),
        version: VERSION.into(),
        config_hash: config.hash(),
        seed: config.seed,
        config: config.clone(),
        conditions,
        sampler_events,
        requested: config.count,
        completed: config.count - failures.len(),
        failures,
        max_asymmetry,
        route_check: RouteCheck {
            samples_checked: route_checked,
            max_relative_frobenius: route_max,
            tolerance,
            passed: route_max <= tolerance,
            note: basis_note,
        },
        times,
    };
    Ok(ExperimentRun { report, rows, state_dim: config.fields.y0.len() })
}
