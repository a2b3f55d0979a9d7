//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! count = 1000
//! times = [0.5, 1.0]
//!
//! [model]
//! kernel = "fbm"      # bm | fbm | bridge | zero
//! hurst = 0.4
//! n = 128
//! dim = 2
//!
//! [fields]
//! family = "cubic"    # linear | affine-rotation | polynomial | cubic
//! y0 = [0.1, 0.2]
//! ```
//!
//! Every key is documented in the README.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{AffineField, DerivativeSource, PolyTerm, VectorFieldSystem};
use crate::gaussian::{CovarianceModel, Kernel};
use crate::grid::TimeGrid;
use crate::malliavin::TAU;

pub const MIN_GRID_INTERVALS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub count: usize,
    /// Evaluation times; grid points in `(0, T]`, increasing.
    pub times: Vec<f64>,
    /// Exponent for the driver's p-variation column.
    #[serde(default = "default_pvar_p")]
    pub pvar_p: f64,
    /// Run even when the driver or the fields fail their conditions.
    #[serde(default)]
    pub expect_degenerate: bool,
    /// Closed-form law to compare the samples against.
    #[serde(default)]
    pub oracle: Option<Oracle>,
    pub model: ModelSpec,
    pub fields: FieldSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Oracle {
    /// `V(y) = a y` in one dimension: `log Y_t ~ N(log y0, a² R(t,t))`.
    Lognormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Bm,
    Fbm,
    Bridge,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kernel: KernelName,
    #[serde(default)]
    pub hurst: Option<f64>,
    /// Bridge pin time; defaults to the horizon.
    #[serde(default)]
    pub pin: Option<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Number of grid intervals.
    pub n: usize,
    /// Driver dimension `d`; components are i.i.d.
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Linear,
    AffineRotation,
    Polynomial,
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub family: FamilyName,
    pub y0: Vec<f64>,
    /// linear: one row-major `e×e` matrix per driven field.
    #[serde(default)]
    pub matrices: Vec<Vec<f64>>,
    /// linear / affine-rotation: one offset per driven field.
    #[serde(default)]
    pub offsets: Vec<Vec<f64>>,
    #[serde(default)]
    pub drift_matrix: Option<Vec<f64>>,
    #[serde(default)]
    pub drift_offset: Option<Vec<f64>>,
    /// affine-rotation: rotation rate per driven field.
    #[serde(default)]
    pub rates: Vec<f64>,
    #[serde(default)]
    pub drift_rate: f64,
    /// polynomial: number of driven fields.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub terms: Vec<PolyTerm>,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default = "analytic")]
    pub derivatives: DerivativeSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "dot")]
    pub dir: PathBuf,
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_json")]
    pub json: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: dot(), csv: default_csv(), json: default_json() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Relative Frobenius tolerance between the two σ routes.
    #[serde(default = "default_route_tol")]
    pub route_tolerance: f64,
    /// Largest tolerated fraction of failed samples.
    #[serde(default = "default_failure")]
    pub max_failure_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tau: default_tau(), route_tolerance: default_route_tol(), max_failure_fraction: default_failure() }
    }
}

fn default_pvar_p() -> f64 {
    2.5
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn analytic() -> DerivativeSource {
    DerivativeSource::Analytic
}
fn dot() -> PathBuf {
    PathBuf::from(".")
}
fn default_csv() -> String {
    "samples.csv".into()
}
fn default_json() -> String {
    "summary.json".into()
}
fn default_tau() -> f64 {
    TAU
}
fn default_route_tol() -> f64 {
    1e-6
}
fn default_failure() -> f64 {
    0.01
}

fn flat_matrix(e: usize, v: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if v.len() != e * e {
        return Err(Error::Config(format!("{what} needs {} entries, got {}", e * e, v.len())));
    }
    Ok(DMatrix::from_row_slice(e, e, v))
}

fn vector(e: usize, v: &[f64], what: &str) -> Result<DVector<f64>> {
    if v.len() != e {
        return Err(Error::Config(format!("{what} needs {e} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in the
    /// source file do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.n < MIN_GRID_INTERVALS {
            return Err(Error::Config(format!("model.n must be >= {MIN_GRID_INTERVALS}, got {}", self.model.n)));
        }
        if self.count == 0 {
            return Err(Error::Config("count must be >= 1".into()));
        }
        if !(self.pvar_p >= 1.0) {
            return Err(Error::Config(format!("pvar_p must be >= 1, got {}", self.pvar_p)));
        }
        if !(self.thresholds.tau >= 0.0) || !(self.thresholds.max_failure_fraction >= 0.0) {
            return Err(Error::Config("thresholds must be non-negative".into()));
        }
        let grid = self.grid()?;
        if self.times.is_empty() || self.times.windows(2).any(|w| w[1] <= w[0]) || self.times[0] <= 0.0 {
            return Err(Error::Config("times must be non-empty, positive and strictly increasing".into()));
        }
        for &t in &self.times {
            grid.index_of(t).map_err(|_| Error::Config(format!("time {t} is not a point of the uniform grid")))?;
        }
        let model = self.build_model()?;
        let vf = self.build_fields()?;
        if vf.driver_dim() != model.dim() {
            return Err(Error::Config(format!(
                "fields are driven by {} components but model.dim = {}",
                vf.driver_dim(),
                model.dim()
            )));
        }
        if vf.state_dim() != self.fields.y0.len() {
            return Err(Error::Config(format!("y0 has {} entries, fields act on R^{}", self.fields.y0.len(), vf.state_dim())));
        }
        if self.oracle == Some(Oracle::Lognormal) {
            self.lognormal_rate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.model.horizon, self.model.n).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_kernel(&self) -> Result<Kernel> {
        let m = &self.model;
        let base = match m.kernel {
            KernelName::Bm => Kernel::Brownian,
            KernelName::Fbm => {
                let h = m.hurst.ok_or_else(|| Error::Config("model.hurst is required for fbm".into()))?;
                Kernel::fractional(h)?
            }
            KernelName::Bridge => Kernel::bridge(m.pin.unwrap_or(m.horizon))?,
            KernelName::Zero => Kernel::Zero,
        };
        Ok(if m.scale == 1.0 { base } else { Kernel::scaled(m.scale, base) })
    }

    pub fn build_model(&self) -> Result<CovarianceModel> {
        CovarianceModel::iid(self.build_kernel()?, self.model.dim, self.model.horizon)
    }

    pub fn y0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.fields.y0)
    }

    pub fn build_fields(&self) -> Result<VectorFieldSystem> {
        let f = &self.fields;
        let e = f.y0.len();
        if e == 0 {
            return Err(Error::Config("fields.y0 must not be empty".into()));
        }
        let vf = match f.family {
            FamilyName::Linear => {
                if f.matrices.is_empty() {
                    return Err(Error::Config("linear fields need at least one matrix".into()));
                }
                if !f.offsets.is_empty() && f.offsets.len() != f.matrices.len() {
                    return Err(Error::Config("need one offset per matrix".into()));
                }
                let drift = AffineField {
                    matrix: match &f.drift_matrix {
                        Some(m) => flat_matrix(e, m, "fields.drift_matrix")?,
                        None => DMatrix::zeros(e, e),
                    },
                    offset: match &f.drift_offset {
                        Some(v) => vector(e, v, "fields.drift_offset")?,
                        None => DVector::zeros(e),
                    },
                };
                let mut fields = vec![drift];
                for (i, m) in f.matrices.iter().enumerate() {
                    let offset = match f.offsets.get(i) {
                        Some(v) => vector(e, v, "fields.offsets entry")?,
                        None => DVector::zeros(e),
                    };
                    fields.push(AffineField { matrix: flat_matrix(e, m, "fields.matrices entry")?, offset });
                }
                VectorFieldSystem::linear(fields)?
            }
            FamilyName::AffineRotation => {
                if e != 2 {
                    return Err(Error::Config("affine-rotation fields live in R^2".into()));
                }
                let offsets: Vec<[f64; 2]> = if f.offsets.is_empty() {
                    vec![[0.0, 0.0]; f.rates.len()]
                } else {
                    f.offsets
                        .iter()
                        .map(|o| <[f64; 2]>::try_from(o.as_slice()))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Config("affine-rotation offsets must have 2 entries".into()))?
                };
                VectorFieldSystem::affine_rotation(&f.rates, &offsets, f.drift_rate)?
            }
            FamilyName::Polynomial => {
                let d = f.d.ok_or_else(|| Error::Config("polynomial fields need fields.d".into()))?;
                VectorFieldSystem::polynomial(e, d, f.terms.clone(), f.cutoff)?
            }
            FamilyName::Cubic => {
                if e != 2 {
                    return Err(Error::Config("the cubic example lives in R^2".into()));
                }
                VectorFieldSystem::example_cubic()
            }
        };
        Ok(vf.with_derivatives(f.derivatives))
    }

    /// `a` for the scalar linear system `V(y) = a y` without drift.
    pub fn lognormal_rate(&self) -> Result<f64> {
        let f = &self.fields;
        let fits = f.family == FamilyName::Linear
            && f.y0.len() == 1
            && f.y0[0] > 0.0
            && f.matrices.len() == 1
            && f.offsets.iter().flatten().all(|&c| c == 0.0)
            && f.drift_matrix.iter().flatten().all(|&c| c == 0.0)
            && f.drift_offset.iter().flatten().all(|&c| c == 0.0);
        if !fits {
            return Err(Error::Config("the lognormal oracle needs a driftless scalar field V(y) = a y and y0 > 0".into()));
        }
        Ok(f.matrices[0][0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
count = 10
times = [0.5, 1.0]

[model]
kernel = "fbm"
hurst = 0.4
n = 16
dim = 2

[fields]
family = "cubic"
y0 = [0.1, 0.2]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.pvar_p, 2.5);
        assert_eq!(c.thresholds.tau, TAU);
        assert_eq!(c.outputs.csv, "samples.csv");
        assert_eq!(c.build_model().unwrap().dim(), 2);
        assert_eq!(c.build_fields().unwrap().state_dim(), 2);
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = [
            BASE.replace("n = 16", "n = 4"),
            BASE.replace("count = 10", "count = 0"),
            BASE.replace("times = [0.5, 1.0]", "times = [0.3]"),
            BASE.replace("times = [0.5, 1.0]", "times = [1.0, 0.5]"),
            BASE.replace("dim = 2", "dim = 1"),
            BASE.replace("y0 = [0.1, 0.2]", "y0 = [0.1]"),
            BASE.replace("kernel = \"fbm\"", "kernel = \"ou\""),
            BASE.replace("hurst = 0.4\n", ""),
            BASE.replace("seed = 7", "seed = 7\nbogus = 1"),
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_)) | Err(Error::InvalidKernel(_))), "{text}");
        }
    }

    #[test]
    fn linear_family_and_lognormal_oracle() {
        let text = r#"
seed = 1
count = 1
times = [1.0]
oracle = "lognormal"
[model]
kernel = "bm"
n = 8
[fields]
family = "linear"
y0 = [1.0]
matrices = [[1.0]]
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.lognormal_rate().unwrap(), 1.0);
        let vf = c.build_fields().unwrap();
        assert!(!vf.has_drift());
        let shifted = text.replace("y0 = [1.0]", "y0 = [-1.0]");
        assert!(ExperimentConfig::from_toml_str(&shifted).is_err());
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::from_toml_str(BASE).unwrap();
        let b = ExperimentConfig::from_toml_str(&BASE.replace("seed = 7", "seed=7   # comment")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml_str(&BASE.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
