//! Malliavin covariance matrices of RDE solutions.
//!
//! Two independent routes are provided. The 2D Young route evaluates
//! `σ_t = Σ_k ∫∫ Z_k(s) ⊗ Z_k(s') dR^(k)(s,s')` with `Z_k(s) = J_{t←s} V_k(Y_s)`;
//! the Parseval route sums `(D_h Y_t) ⊗ (D_h Y_t)` over an orthonormal grid
//! Cameron–Martin basis. On a grid the two agree up to rounding.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::VectorFieldSystem;
use crate::gaussian::{CameronMartinBasis, CovarianceModel};
use crate::grid::{same_grid, GridFunction1D, TimeGrid};
use crate::rde::FlowResult;
use crate::young::young_integral_1d;

/// Degeneracy threshold: non-degenerate iff `λ_min > TAU · scale / e`.
pub const TAU: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TwoDimYoung,
    ParsevalBasis,
    BrownianDiagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinMatrix {
    pub sigma: DMatrix<f64>,
    pub t: f64,
    pub method: Method,
    /// `max |σ - σᵀ| / 2` before symmetrization.
    pub asymmetry: f64,
    /// Size reference for the degeneracy verdict. For the 2D Young route this
    /// is `Σ_k Σ_{ij} |Z_k(s_i)| |Z_k(s_j)| |□_{ij}R^(k)|`, an upper bound of
    /// `trace σ` that does not collapse when `σ` itself does; otherwise the
    /// trace.
    pub reference_scale: f64,
}

impl MalliavinMatrix {
    pub fn from_matrix(sigma: DMatrix<f64>, t: f64, method: Method) -> Self {
        let asymmetry = 0.5 * (&sigma - sigma.transpose()).amax();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let reference_scale = sigma.trace().abs();
        Self { sigma, t, method, asymmetry, reference_scale }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn spectrum(&self) -> Spectrum {
        spectrum(self)
    }
}

/// Per-component rectangle increments of the covariance on a fixed grid.
#[derive(Debug, Clone)]
pub struct GridCovariance {
    grid: TimeGrid,
    increments: Vec<DMatrix<f64>>,
}

impl GridCovariance {
    pub fn new(model: &CovarianceModel, grid: &TimeGrid) -> Result<Self> {
        model.check_grid(grid)?;
        let increments = (0..model.dim()).map(|k| model.covariance_on(grid, k).rectangle_increments()).collect();
        Ok(Self { grid: grid.clone(), increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.increments.len()
    }
}

fn check_flow(flow: &FlowResult, vf: &VectorFieldSystem, grid: &TimeGrid, t: f64) -> Result<usize> {
    same_grid(&flow.grid, grid)?;
    if flow.state_dim() != vf.state_dim() {
        return Err(Error::DimensionMismatch { expected: vf.state_dim(), found: flow.state_dim() });
    }
    flow.jacobian()?;
    flow.grid.index_of(t)
}

/// 2D Young route with a precomputed grid covariance.
pub fn malliavin_matrix_2d_with(
    flow: &FlowResult,
    vf: &VectorFieldSystem,
    cov: &GridCovariance,
    t: f64,
) -> Result<MalliavinMatrix> {
    let ti = check_flow(flow, vf, &cov.grid, t)?;
    if cov.dim() != vf.driver_dim() {
        return Err(Error::DimensionMismatch { expected: vf.driver_dim(), found: cov.dim() });
    }
    let e = vf.state_dim();
    let mut sigma = DMatrix::zeros(e, e);
    let mut scale = 0.0;
    if ti == 0 {
        return Ok(MalliavinMatrix { sigma, t, method: Method::TwoDimYoung, asymmetry: 0.0, reference_scale: 0.0 });
    }
    for k in 1..=vf.driver_dim() {
        let z = flow.duhamel_integrand(vf, k, ti)?;
        let f = z.values().rows(0, ti);
        let q = cov.increments[k - 1].view((0, 0), (ti, ti));
        sigma += f.transpose() * (q * f);
        let norms: Vec<f64> = (0..ti).map(|i| f.row(i).norm()).collect();
        for i in 0..ti {
            for j in 0..ti {
                scale += norms[i] * norms[j] * q[(i, j)].abs();
            }
        }
    }
    let mut m = MalliavinMatrix::from_matrix(sigma, t, Method::TwoDimYoung);
    m.reference_scale = scale;
    Ok(m)
}

pub fn malliavin_matrix_2d(
    flow: &FlowResult,
    vf: &VectorFieldSystem,
    model: &CovarianceModel,
    t: f64,
) -> Result<MalliavinMatrix> {
    let cov = GridCovariance::new(model, &flow.grid)?;
    malliavin_matrix_2d_with(flow, vf, &cov, t)
}

/// `Σ_k ∫_0^t Z_k(s) ⊗ Z_k(s) ds` with `Z_k` at interval midpoints taken as
/// the average of the endpoint values. Valid for a standard Brownian driver.
pub fn malliavin_matrix_bm_reduction(flow: &FlowResult, vf: &VectorFieldSystem, t: f64) -> Result<MalliavinMatrix> {
    let ti = check_flow(flow, vf, &flow.grid, t)?;
    let e = vf.state_dim();
    let pts = flow.grid.points();
    let mut sigma = DMatrix::zeros(e, e);
    if ti > 0 {
        for k in 1..=vf.driver_dim() {
            let z = flow.duhamel_integrand(vf, k, ti)?;
            for i in 0..ti {
                let mid = (z.at(i) + z.at(i + 1)) * 0.5;
                sigma += &mid * mid.transpose() * (pts[i + 1] - pts[i]);
            }
        }
    }
    Ok(MalliavinMatrix::from_matrix(sigma, t, Method::BrownianDiagonal))
}

/// Parseval route: `Σ_{k,n} (D_{h_n^(k)} Y_t) ⊗ (D_{h_n^(k)} Y_t)` with `h_n^(k)`
/// placed in driver component `k`.
pub fn malliavin_matrix_parseval(
    flow: &FlowResult,
    vf: &VectorFieldSystem,
    basis: &[CameronMartinBasis],
    t: f64,
) -> Result<MalliavinMatrix> {
    if basis.len() != vf.driver_dim() {
        return Err(Error::DimensionMismatch { expected: vf.driver_dim(), found: basis.len() });
    }
    let grid = &basis[0].grid;
    let ti = check_flow(flow, vf, grid, t)?;
    let e = vf.state_dim();
    let mut sigma = DMatrix::zeros(e, e);
    if ti > 0 {
        for (k, b) in basis.iter().enumerate() {
            same_grid(&b.grid, grid)?;
            if b.is_empty() {
                continue;
            }
            let z = flow.duhamel_integrand(vf, k + 1, ti)?;
            // all basis paths of the component as columns, restricted to [0, t]
            let mut h = DMatrix::zeros(ti + 1, b.len());
            for (n, path) in b.basis_paths.iter().enumerate() {
                h.column_mut(n).copy_from(&path.values().column(0).rows(0, ti + 1));
            }
            let h = GridFunction1D::new(z.grid().clone(), h)?;
            let derivs = young_integral_1d(&z, &h)?;
            sigma += &derivs * derivs.transpose();
        }
    }
    Ok(MalliavinMatrix::from_matrix(sigma, t, Method::ParsevalBasis))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub det: f64,
    pub tau: f64,
    pub threshold: f64,
    pub nondegenerate: bool,
}

/// Eigen-decomposition and weak non-degeneracy verdict
/// `λ_min > τ · scale / e`, with `scale` the matrix's reference scale.
pub fn spectrum(m: &MalliavinMatrix) -> Spectrum {
    spectrum_with_tau(m, TAU)
}

pub fn spectrum_with_tau(m: &MalliavinMatrix, tau: f64) -> Spectrum {
    let e = m.dim();
    let eig = SymmetricEigen::new(m.sigma.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let lambda_min = eigenvalues.first().copied().unwrap_or(0.0);
    let det = m.sigma.determinant();
    let threshold = tau * m.reference_scale.max(m.sigma.trace().abs()) / e.max(1) as f64;
    Spectrum { eigenvalues, lambda_min, det, tau, threshold, nondegenerate: lambda_min > threshold }
}

/// `‖a - b‖_F / max(‖a‖_F, ‖b‖_F)`, zero when both vanish.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AffineField, VectorFieldSystem};
    use crate::gaussian::{cameron_martin_basis, sample_paths, Kernel, PathSample};
    use crate::lift::lift_piecewise_linear;
    use crate::rde::{directional_derivative, solve_flow_jacobian};
    use nalgebra::DVector;

    fn flow_for(vf: &VectorFieldSystem, model: &CovarianceModel, n: usize, seed: u64, y0: &[f64]) -> FlowResult {
        let grid = TimeGrid::uniform(model.horizon(), n).unwrap();
        let path = sample_paths(model, &grid, 1, seed).unwrap().remove(0);
        let x = lift_piecewise_linear(&path).unwrap();
        solve_flow_jacobian(&x, vf, &DVector::from_column_slice(y0)).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let zero = MalliavinMatrix::from_matrix(DMatrix::zeros(2, 2), 1.0, Method::TwoDimYoung);
        assert!(!spectrum(&zero).nondegenerate);
        let id = MalliavinMatrix::from_matrix(DMatrix::identity(3, 3), 1.0, Method::TwoDimYoung);
        let s = spectrum(&id);
        assert_eq!(s.lambda_min, 1.0);
        assert!(s.nondegenerate);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let rank1 = MalliavinMatrix::from_matrix(&v * v.transpose(), 1.0, Method::TwoDimYoung);
        let s = spectrum(&rank1);
        assert!(s.lambda_min.abs() < 1e-14);
        assert!(!s.nondegenerate);
    }

    #[test]
    fn asymmetry_is_recorded() {
        let m = MalliavinMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]), 1.0, Method::TwoDimYoung);
        assert!((m.asymmetry - 0.1).abs() < 1e-15);
        assert_eq!(m.sigma, m.sigma.transpose());
    }

    #[test]
    fn constant_field_is_degenerate() {
        let vf = VectorFieldSystem::linear(vec![
            AffineField { matrix: DMatrix::zeros(2, 2), offset: DVector::zeros(2) },
            AffineField { matrix: DMatrix::zeros(2, 2), offset: DVector::from_vec(vec![1.0, 0.0]) },
        ])
        .unwrap();
        for kernel in [Kernel::Brownian, Kernel::fractional(0.4).unwrap()] {
            let model = CovarianceModel::iid(kernel, 1, 1.0).unwrap();
            for seed in 0..5 {
                let flow = flow_for(&vf, &model, 64, seed, &[0.3, 0.3]);
                let m = malliavin_matrix_2d(&flow, &vf, &model, 1.0).unwrap();
                let s = spectrum(&m);
                assert!(s.det.abs() <= 1e-12);
                assert!(!s.nondegenerate);
            }
        }
    }

    #[test]
    fn commuting_linear_closed_form() {
        let a = DMatrix::from_row_slice(2, 2, &[0.2, 1.0, -1.0, 0.1]);
        let vf = VectorFieldSystem::linear_homogeneous(vec![a.clone()]).unwrap();
        let y0 = DVector::from_vec(vec![1.0, 0.5]);
        let model = CovarianceModel::iid(Kernel::fractional(0.7).unwrap(), 1, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2048).unwrap();
        let path = PathSample::from_fn(&grid, 1, |t| DVector::from_vec(vec![(3.0 * t).sin()]));
        let flow = solve_flow_jacobian(&lift_piecewise_linear(&path).unwrap(), &vf, &y0).unwrap();
        let t: f64 = 0.75;
        let sigma = malliavin_matrix_2d(&flow, &vf, &model, t).unwrap().sigma;
        let eig = (&a * (3.0 * t).sin()).exp();
        let v = eig * &a * &y0;
        let want = &v * v.transpose() * model.kernel_eval(0, t, t).unwrap();
        assert!((sigma - want).amax() < 1e-6);
    }

    #[test]
    fn routes_agree() {
        let vf = VectorFieldSystem::example_cubic();
        for kernel in [Kernel::Brownian, Kernel::fractional(0.4).unwrap(), Kernel::fractional(0.75).unwrap()] {
            let model = CovarianceModel::iid(kernel, 2, 1.0).unwrap();
            let flow = flow_for(&vf, &model, 96, 3, &[0.1, 0.2]);
            let basis = cameron_martin_basis(&model, &flow.grid).unwrap();
            for t in [0.5, 1.0] {
                let two_d = malliavin_matrix_2d(&flow, &vf, &model, t).unwrap();
                let pars = malliavin_matrix_parseval(&flow, &vf, &basis, t).unwrap();
                assert!(relative_frobenius(&two_d.sigma, &pars.sigma) < 1e-6);
                assert!(two_d.asymmetry < 1e-10 * two_d.sigma.norm());
                let s = spectrum(&two_d);
                assert!(s.lambda_min >= -1e-9 * two_d.sigma.trace());
                assert!(s.nondegenerate);
            }
        }
    }

    #[test]
    fn parseval_terms_are_directional_derivatives() {
        let vf = VectorFieldSystem::example_cubic();
        let model = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).unwrap();
        let flow = flow_for(&vf, &model, 32, 1, &[0.1, 0.2]);
        let basis = cameron_martin_basis(&model, &flow.grid).unwrap();
        let mut sigma = DMatrix::zeros(2, 2);
        for (k, b) in basis.iter().enumerate() {
            for h in &b.basis_paths {
                let dy = directional_derivative(&flow, &vf, &h.embed(k, 2), 1.0).unwrap();
                sigma += &dy * dy.transpose();
            }
        }
        let pars = malliavin_matrix_parseval(&flow, &vf, &basis, 1.0).unwrap();
        assert!(relative_frobenius(&sigma, &pars.sigma) < 1e-12);
        let rank_bound = 2usize.min(2 * basis[0].len());
        assert!(pars.sigma.rank(1e-12) <= rank_bound);
    }

    #[test]
    fn zero_basis_gives_zero_matrix() {
        let vf = VectorFieldSystem::example_cubic();
        let bm = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).unwrap();
        let flow = flow_for(&vf, &bm, 16, 1, &[0.1, 0.2]);
        let zero = CovarianceModel::iid(Kernel::Zero, 2, 1.0).unwrap();
        let basis = cameron_martin_basis(&zero, &flow.grid).unwrap();
        let m = malliavin_matrix_parseval(&flow, &vf, &basis, 1.0).unwrap();
        assert_eq!(m.sigma, DMatrix::zeros(2, 2));
    }

    #[test]
    fn bm_reduction_examples() {
        let zero = VectorFieldSystem::linear_homogeneous(vec![DMatrix::zeros(2, 2)]).unwrap();
        let bm1 = CovarianceModel::iid(Kernel::Brownian, 1, 1.0).unwrap();
        let flow = flow_for(&zero, &bm1, 16, 1, &[1.0, 1.0]);
        assert_eq!(malliavin_matrix_bm_reduction(&flow, &zero, 1.0).unwrap().sigma, DMatrix::zeros(2, 2));

        let scalar = VectorFieldSystem::linear_homogeneous(vec![DMatrix::identity(1, 1)]).unwrap();
        let grid = TimeGrid::uniform(2.0, 40).unwrap();
        let frozen = PathSample::from_fn(&grid, 1, |_| DVector::zeros(1));
        let flow = solve_flow_jacobian(&lift_piecewise_linear(&frozen).unwrap(), &scalar, &DVector::from_vec(vec![1.5])).unwrap();
        let m = malliavin_matrix_bm_reduction(&flow, &scalar, 2.0).unwrap();
        assert!((m.sigma[(0, 0)] - 1.5 * 1.5 * 2.0).abs() < 1e-13);
    }

    #[test]
    fn bm_reduction_matches_2d_route() {
        let vf = VectorFieldSystem::example_cubic();
        let model = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).unwrap();
        let flow = flow_for(&vf, &model, 512, 7, &[0.1, 0.2]);
        let a = malliavin_matrix_2d(&flow, &vf, &model, 1.0).unwrap();
        let b = malliavin_matrix_bm_reduction(&flow, &vf, 1.0).unwrap();
        assert!(relative_frobenius(&a.sigma, &b.sigma) < 0.02);
        assert!((a.reference_scale - a.sigma.trace()).abs() < 1e-10 * a.sigma.trace());
    }

    #[test]
    fn pinned_bridge_degenerates_at_pin() {
        let vf = VectorFieldSystem::linear(vec![
            AffineField { matrix: DMatrix::zeros(1, 1), offset: DVector::zeros(1) },
            AffineField { matrix: DMatrix::from_element(1, 1, 0.8), offset: DVector::from_element(1, 0.5) },
        ])
        .unwrap();
        let model = CovarianceModel::iid(Kernel::bridge(1.0).unwrap(), 1, 1.0).unwrap();
        for seed in 0..5 {
            let flow = flow_for(&vf, &model, 128, seed, &[0.2]);
            assert!(!spectrum(&malliavin_matrix_2d(&flow, &vf, &model, 1.0).unwrap()).nondegenerate);
            assert!(spectrum(&malliavin_matrix_2d(&flow, &vf, &model, 0.5).unwrap()).nondegenerate);
        }
    }

    #[test]
    fn rejects_off_grid_times_and_mismatched_grids() {
        let vf = VectorFieldSystem::example_cubic();
        let model = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).unwrap();
        let flow = flow_for(&vf, &model, 16, 1, &[0.0, 0.0]);
        assert!(matches!(malliavin_matrix_2d(&flow, &vf, &model, 0.51), Err(Error::NotOnGrid(_))));
        let other = TimeGrid::uniform(1.0, 8).unwrap();
        let basis = cameron_martin_basis(&model, &other).unwrap();
        assert!(matches!(malliavin_matrix_parseval(&flow, &vf, &basis, 1.0), Err(Error::GridMismatch(_))));
    }
}
