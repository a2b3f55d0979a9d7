//! RDE solutions, Jacobian flows and directional derivatives.
//!
//! Each grid interval with increment `(a, b)` is advanced by the step-2 map
//!
//! ```text
//! y ← y + Σ_j V_j(y) a^j + Σ_{i,j} b[i][j] V_j'(y) V_i(y)
//! ```
//!
//! where `b[i][j] = ∫(x^i - x^i_s) dx^j` (see [`crate::group`]). With a
//! non-zero drift the scheme runs on the space-time lift, the time
//! coordinate pairing with `V_0`. The Jacobian is advanced by the exact
//! linearization of the same map, so `J` is the derivative of the discrete
//! flow with respect to `y_0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::VectorFieldSystem;
use crate::gaussian::PathSample;
use crate::grid::{same_grid, GridFunction1D, TimeGrid};
use crate::group::G2Element;
use crate::lift::{spacetime_lift, RoughPath};
use crate::young::young_integral_1d;

pub const EXPLOSION_BOUND: f64 = 1e12;
pub const ILL_CONDITIONED: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianFlow {
    /// `J_{t_i←0}`.
    pub j: Vec<DMatrix<f64>>,
    pub j_inv: Vec<DMatrix<f64>>,
    /// `max_i ‖J_i J_i⁻¹ - I‖`.
    pub max_inverse_residual: f64,
    pub max_condition: f64,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub grid: TimeGrid,
    pub y: Vec<DVector<f64>>,
    pub jacobian: Option<JacobianFlow>,
    /// `(p, |X|_{p-var})` when the caller asked for it.
    pub driver_pvar: Option<(f64, f64)>,
}

impl FlowResult {
    pub fn state_dim(&self) -> usize {
        self.y[0].len()
    }

    pub fn endpoint(&self) -> &DVector<f64> {
        self.y.last().unwrap()
    }

    /// Rebuilds a flow from stored states and Jacobians `J_{t_i←0}`.
    pub fn from_parts(grid: TimeGrid, y: Vec<DVector<f64>>, j: Vec<DMatrix<f64>>) -> Result<Self> {
        if y.len() != grid.len() || j.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} states, {} Jacobians for {} points", y.len(), j.len(), grid.len())));
        }
        let e = y[0].len();
        if let Some(bad) = y.iter().map(|v| v.len()).chain(j.iter().flat_map(|m| [m.nrows(), m.ncols()])).find(|&n| n != e) {
            return Err(Error::DimensionMismatch { expected: e, found: bad });
        }
        let jacobian = Some(invert_all(j, &grid)?);
        Ok(Self { grid, y, jacobian, driver_pvar: None })
    }

    pub fn jacobian(&self) -> Result<&JacobianFlow> {
        self.jacobian.as_ref().ok_or(Error::MissingJacobian)
    }

    /// `J_{t←s} = J_{t←0} J_{s←0}⁻¹` between grid indices.
    pub fn transport(&self, t: usize, s: usize) -> Result<DMatrix<f64>> {
        let jac = self.jacobian()?;
        Ok(&jac.j[t] * &jac.j_inv[s])
    }

    /// `Z_k(s) = J_{t←s} V_k(Y_s)` for grid points `s ≤ t`; `k` in `1..=d`.
    pub fn duhamel_integrand(&self, vf: &VectorFieldSystem, k: usize, t: usize) -> Result<GridFunction1D> {
        let jac = self.jacobian()?;
        let rows: Vec<DVector<f64>> = (0..=t)
            .map(|s| &jac.j[t] * (&jac.j_inv[s] * vf.value(k, &self.y[s])))
            .collect();
        GridFunction1D::from_rows(self.grid.prefix(t)?, &rows)
    }
}

/// Driver increments paired with the field indices they drive.
struct Driver {
    grid: TimeGrid,
    increments: Vec<G2Element>,
    fields: Vec<usize>,
}

impl Driver {
    fn new(x: &RoughPath, vf: &VectorFieldSystem) -> Result<Self> {
        if x.dim() != vf.driver_dim() {
            return Err(Error::DimensionMismatch { expected: vf.driver_dim(), found: x.dim() });
        }
        x.ensure_geometric()?;
        if vf.has_drift() {
            let st = spacetime_lift(x);
            Ok(Driver { grid: x.grid().clone(), increments: st.increments(), fields: (0..=vf.driver_dim()).collect() })
        } else {
            Ok(Driver { grid: x.grid().clone(), increments: x.increments(), fields: (1..=vf.driver_dim()).collect() })
        }
    }
}

fn check_state(y: &DVector<f64>, time: f64) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) || y.norm() > EXPLOSION_BOUND {
        return Err(Error::Explosion { time });
    }
    Ok(())
}

fn check_y0(vf: &VectorFieldSystem, y0: &DVector<f64>) -> Result<()> {
    if y0.len() != vf.state_dim() {
        return Err(Error::DimensionMismatch { expected: vf.state_dim(), found: y0.len() });
    }
    Ok(())
}

/// One step-2 step for `y`, and optionally the step's linearization.
fn step(
    vf: &VectorFieldSystem,
    fields: &[usize],
    inc: &G2Element,
    y: &DVector<f64>,
    with_jacobian: bool,
) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let e = y.len();
    let a = inc.level1();
    let b = inc.level2();
    let vals: Vec<DVector<f64>> = fields.iter().map(|&f| vf.value(f, y)).collect();
    let jacs: Vec<DMatrix<f64>> = fields.iter().map(|&f| vf.jacobian(f, y)).collect();
    let mut next = y.clone();
    let mut lin = if with_jacobian { Some(DMatrix::identity(e, e)) } else { None };
    for (j, &fj) in fields.iter().enumerate() {
        next.axpy(a[j], &vals[j], 1.0);
        // w_j = Σ_i b[i][j] V_i(y)
        let mut w = DVector::zeros(e);
        for i in 0..fields.len() {
            if b[(i, j)] != 0.0 {
                w.axpy(b[(i, j)], &vals[i], 1.0);
            }
        }
        next += &jacs[j] * &w;
        if let Some(m) = lin.as_mut() {
            *m += &jacs[j] * a[j];
            *m += vf.second_derivative(fj, y, &w);
            let mut wj = DMatrix::zeros(e, e);
            for i in 0..fields.len() {
                if b[(i, j)] != 0.0 {
                    wj += &jacs[i] * b[(i, j)];
                }
            }
            *m += &jacs[j] * wj;
        }
    }
    (next, lin)
}

fn integrate(x: &RoughPath, vf: &VectorFieldSystem, y0: &DVector<f64>, with_jacobian: bool) -> Result<FlowResult> {
    check_y0(vf, y0)?;
    let driver = Driver::new(x, vf)?;
    let e = vf.state_dim();
    let pts = driver.grid.points();
    let mut ys = Vec::with_capacity(pts.len());
    let mut js = Vec::with_capacity(if with_jacobian { pts.len() } else { 0 });
    ys.push(y0.clone());
    if with_jacobian {
        js.push(DMatrix::identity(e, e));
    }
    for (i, inc) in driver.increments.iter().enumerate() {
        let (next, lin) = step(vf, &driver.fields, inc, &ys[i], with_jacobian);
        check_state(&next, pts[i + 1])?;
        if let Some(m) = lin {
            let jn = m * &js[i];
            if jn.iter().any(|v| !v.is_finite()) {
                return Err(Error::Explosion { time: pts[i + 1] });
            }
            js.push(jn);
        }
        ys.push(next);
    }
    let jacobian = if with_jacobian { Some(invert_all(js, &driver.grid)?) } else { None };
    Ok(FlowResult { grid: driver.grid, y: ys, jacobian, driver_pvar: None })
}

fn invert_all(js: Vec<DMatrix<f64>>, grid: &TimeGrid) -> Result<JacobianFlow> {
    let e = js[0].nrows();
    let mut j_inv = Vec::with_capacity(js.len());
    let mut max_res = 0.0f64;
    let mut max_cond = 1.0f64;
    for (i, j) in js.iter().enumerate() {
        let inv = j.clone().try_inverse().ok_or(Error::Explosion { time: grid.points()[i] })?;
        let res = (j * &inv - DMatrix::<f64>::identity(e, e)).amax();
        max_res = max_res.max(res);
        let sv = j.singular_values();
        let cond = sv.max() / sv.min();
        max_cond = max_cond.max(if cond.is_finite() { cond } else { f64::INFINITY });
        j_inv.push(inv);
    }
    Ok(JacobianFlow {
        j: js,
        j_inv,
        max_inverse_residual: max_res,
        max_condition: max_cond,
        ill_conditioned: max_cond > ILL_CONDITIONED,
    })
}

/// Solution path of `dY = V(Y) dX + V_0(Y) dt`.
pub fn solve_rde(x: &RoughPath, vf: &VectorFieldSystem, y0: &DVector<f64>) -> Result<FlowResult> {
    integrate(x, vf, y0, false)
}

/// Solution path together with `J_{t←0}` and its inverse.
pub fn solve_flow_jacobian(x: &RoughPath, vf: &VectorFieldSystem, y0: &DVector<f64>) -> Result<FlowResult> {
    integrate(x, vf, y0, true)
}

/// Classical RK4 integration of the controlled ODE (and its Jacobian) along
/// the piecewise-linear driver, `substeps` steps per grid interval.
pub fn solve_ode_reference(
    driver: &PathSample,
    vf: &VectorFieldSystem,
    y0: &DVector<f64>,
    substeps: usize,
) -> Result<FlowResult> {
    check_y0(vf, y0)?;
    if driver.dim() != vf.driver_dim() {
        return Err(Error::DimensionMismatch { expected: vf.driver_dim(), found: driver.dim() });
    }
    if substeps == 0 {
        return Err(Error::InvalidGrid("substeps must be >= 1".into()));
    }
    let e = vf.state_dim();
    let d = vf.driver_dim();
    let pts = driver.grid.points();
    let rhs = |y: &DVector<f64>, j: &DMatrix<f64>, xdot: &DVector<f64>| {
        let mut dy = vf.value(0, y);
        let mut dm = vf.jacobian(0, y);
        for k in 0..d {
            if xdot[k] != 0.0 {
                dy.axpy(xdot[k], &vf.value(k + 1, y), 1.0);
                dm += vf.jacobian(k + 1, y) * xdot[k];
            }
        }
        (dy, dm * j)
    };
    let mut ys = vec![y0.clone()];
    let mut js = vec![DMatrix::identity(e, e)];
    for i in 0..driver.grid.intervals() {
        let dt_seg = pts[i + 1] - pts[i];
        let xdot = (driver.values.row(i + 1) - driver.values.row(i)).transpose() / dt_seg;
        let h = dt_seg / substeps as f64;
        let mut y = ys[i].clone();
        let mut j = js[i].clone();
        for _ in 0..substeps {
            let (k1y, k1j) = rhs(&y, &j, &xdot);
            let (k2y, k2j) = rhs(&(&y + &k1y * (h / 2.0)), &(&j + &k1j * (h / 2.0)), &xdot);
            let (k3y, k3j) = rhs(&(&y + &k2y * (h / 2.0)), &(&j + &k2j * (h / 2.0)), &xdot);
            let (k4y, k4j) = rhs(&(&y + &k3y * h), &(&j + &k3j * h), &xdot);
            y += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
            j += (k1j + k2j * 2.0 + k3j * 2.0 + k4j) * (h / 6.0);
        }
        check_state(&y, pts[i + 1])?;
        ys.push(y);
        js.push(j);
    }
    let jacobian = Some(invert_all(js, &driver.grid)?);
    Ok(FlowResult { grid: driver.grid.clone(), y: ys, jacobian, driver_pvar: None })
}

/// `D_h Y_t = Σ_i ∫_0^t J_{t←s} V_i(Y_s) dh^i_s` as a left-point Young sum.
pub fn directional_derivative(
    flow: &FlowResult,
    vf: &VectorFieldSystem,
    h: &GridFunction1D,
    t: f64,
) -> Result<DVector<f64>> {
    same_grid(&flow.grid, h.grid())?;
    if h.dim() != vf.driver_dim() {
        return Err(Error::DimensionMismatch { expected: vf.driver_dim(), found: h.dim() });
    }
    let ti = flow.grid.index_of(t)?;
    let mut out = DVector::zeros(flow.state_dim());
    if ti == 0 {
        return Ok(out);
    }
    let hp = h.prefix(ti)?;
    for k in 1..=vf.driver_dim() {
        let z = flow.duhamel_integrand(vf, k, ti)?;
        out += young_integral_1d(&z, &hp.component(k - 1))?.column(0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogJacobianRecord {
    /// `log ‖J_{T←0}‖` (operator 2-norm).
    pub log_norm_j: f64,
    /// `|X|_{p-var}^p`.
    pub pvar_p: f64,
}

pub fn log_jacobian_diagnostic(flow: &FlowResult, x: &RoughPath, p: f64) -> Result<LogJacobianRecord> {
    let jac = flow.jacobian()?;
    let norm = jac.j.last().unwrap().singular_values().max();
    let pvar = x.p_variation(p)?;
    Ok(LogJacobianRecord { log_norm_j: norm.ln(), pvar_p: pvar.powf(p) })
}
