//! C ABI over `rdens`.
//!
//! Objects live behind opaque handles created by `rd_*_new` style functions
//! and released with the matching `rd_*_free`. Every fallible call returns an
//! [`RdStatus`]; on failure [`rd_last_error_message`] describes the error for
//! the calling thread. Panics are caught at the boundary and reported as
//! [`RdStatus::Panic`].
//!
//! Matrices cross the boundary as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use rdens::fields::{AffineField, VectorFieldSystem};
use rdens::gaussian::{CovarianceModel, GaussianSampler, Kernel, PathSample};
use rdens::grid::TimeGrid;
use rdens::lift::{lift_piecewise_linear, RoughPath};
use rdens::malliavin::{malliavin_matrix_2d, spectrum};
use rdens::rde::{solve_flow_jacobian, FlowResult};
use rdens::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    GridMismatch = 4,
    Numerical = 5,
    Condition = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdKernelKind {
    Brownian = 0,
    /// Parameter: Hurst index.
    Fractional = 1,
    /// Parameter: pin time.
    Bridge = 2,
    Zero = 3,
}

/// Covariance model of a driving Gaussian process.
pub struct RdModel(CovarianceModel);
/// Step-2 rough path on a time grid.
pub struct RdRoughPath(RoughPath);
/// Vector fields `V_0` (drift), `V_1..V_d`.
pub struct RdFields(VectorFieldSystem);
/// Solution path with its Jacobian flow.
pub struct RdFlow(FlowResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RdStatus {
    match e {
        Error::DimensionMismatch { .. } => RdStatus::DimensionMismatch,
        Error::GridMismatch(_) | Error::NotOnGrid(_) | Error::InvalidGrid(_) => RdStatus::GridMismatch,
        Error::NotPositiveSemidefinite { .. }
        | Error::DegenerateModel
        | Error::Explosion { .. }
        | Error::NotGeometric { .. }
        | Error::MissingJacobian
        | Error::Aborted { .. } => RdStatus::Numerical,
        Error::Condition(_) => RdStatus::Condition,
        Error::Io(_) => RdStatus::Io,
        _ => RdStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (RdStatus, String)>) -> RdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RdStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            RdStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RdStatus, String) {
    (RdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (RdStatus, String) {
    (RdStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (RdStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (RdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (RdStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (RdStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// I.i.d. `dim`-component model on `[0, horizon]`. `param` is the Hurst
/// index or the pin time and is ignored for the other kernels.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_model_new(
    kind: RdKernelKind,
    param: f64,
    dim: usize,
    horizon: f64,
    out: *mut *mut RdModel,
) -> RdStatus {
    guard(|| {
        let kernel = match kind {
            RdKernelKind::Brownian => Kernel::Brownian,
            RdKernelKind::Fractional => Kernel::fractional(param).map_err(lib)?,
            RdKernelKind::Bridge => Kernel::bridge(param).map_err(lib)?,
            RdKernelKind::Zero => Kernel::Zero,
        };
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        put(out, RdModel(CovarianceModel::iid(kernel, dim, horizon).map_err(lib)?))
    })
}

/// # Safety
/// `model` must be null or a handle from [`rd_model_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rd_model_free(model: *mut RdModel) {
    free(model)
}

/// Draws sample `index` of the stream `seed` on a uniform grid with
/// `intervals` steps and lifts it.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_sample_lift(
    model: *const RdModel,
    intervals: usize,
    seed: u64,
    index: u64,
    out: *mut *mut RdRoughPath,
) -> RdStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let grid = TimeGrid::uniform(model.horizon(), intervals).map_err(lib)?;
        let sampler = GaussianSampler::new(model, &grid).map_err(lib)?;
        let x = lift_piecewise_linear(&sampler.sample(seed, index)).map_err(lib)?;
        put(out, RdRoughPath(x))
    })
}

/// Lifts the piecewise-linear path through `points` samples: `times` has
/// `points` entries, `values` is `points × dim` row-major.
///
/// # Safety
/// The arrays must hold the stated number of elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rd_rough_path_from_values(
    points: usize,
    dim: usize,
    times: *const f64,
    values: *const f64,
    out: *mut *mut RdRoughPath,
) -> RdStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let times = slice(times, points, "times")?;
        let values = slice(values, points * dim, "values")?;
        let grid = TimeGrid::new(times.to_vec()).map_err(lib)?;
        let path = PathSample::new(grid, DMatrix::from_row_slice(points, dim, values), 0, 0).map_err(lib)?;
        put(out, RdRoughPath(lift_piecewise_linear(&path).map_err(lib)?))
    })
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_rough_path_len(path: *const RdRoughPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.grid().len())
}

/// Path dimension, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_rough_path_dim(path: *const RdRoughPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.dim())
}

/// Element over `[0, t_index]`: `level1` receives `d` values, `level2`
/// receives `d × d` values row-major.
///
/// # Safety
/// `path` must be a live handle; the output arrays must have room for the
/// values.
#[no_mangle]
pub unsafe extern "C" fn rd_rough_path_element(
    path: *const RdRoughPath,
    index: usize,
    level1: *mut f64,
    level2: *mut f64,
) -> RdStatus {
    guard(|| {
        let x = &handle(path, "path")?.0;
        let e = x.elements().get(index).ok_or_else(|| invalid(format!("index {index} out of range")))?;
        let d = x.dim();
        slice_mut(level1, d, "level1")?.copy_from_slice(e.level1().as_slice());
        let l2 = slice_mut(level2, d * d, "level2")?;
        for i in 0..d {
            for j in 0..d {
                l2[i * d + j] = e.level2()[(i, j)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_rough_path_free(path: *mut RdRoughPath) {
    free(path)
}

/// Affine fields `V_i(y) = A_i y + b_i` for `i = 0..=d`, drift first.
/// `matrices` holds `(d + 1) · e · e` values (each row-major), `offsets`
/// holds `(d + 1) · e` values.
///
/// # Safety
/// The arrays must hold the stated number of elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rd_fields_linear(
    e: usize,
    d: usize,
    matrices: *const f64,
    offsets: *const f64,
    out: *mut *mut RdFields,
) -> RdStatus {
    guard(|| {
        if e == 0 || d == 0 {
            return Err(invalid("e and d must be positive"));
        }
        let m = slice(matrices, (d + 1) * e * e, "matrices")?;
        let b = slice(offsets, (d + 1) * e, "offsets")?;
        let fields = (0..=d)
            .map(|i| AffineField {
                matrix: DMatrix::from_row_slice(e, e, &m[i * e * e..(i + 1) * e * e]),
                offset: DVector::from_column_slice(&b[i * e..(i + 1) * e]),
            })
            .collect();
        put(out, RdFields(VectorFieldSystem::linear(fields).map_err(lib)?))
    })
}

/// The built-in elliptic planar system with bounded cubic terms and a drift.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_fields_cubic_example(out: *mut *mut RdFields) -> RdStatus {
    guard(|| put(out, RdFields(VectorFieldSystem::example_cubic())))
}

/// Writes 1 to `spans` when `V_1(y0), ..., V_d(y0)` span the state space.
///
/// # Safety
/// `fields` must be a live handle, `y0` must hold `e` values.
#[no_mangle]
pub unsafe extern "C" fn rd_fields_elliptic(
    fields: *const RdFields,
    y0: *const f64,
    e: usize,
    spans: *mut c_int,
) -> RdStatus {
    guard(|| {
        let vf = &handle(fields, "fields")?.0;
        if e != vf.state_dim() {
            return Err(lib(Error::DimensionMismatch { expected: vf.state_dim(), found: e }));
        }
        if spans.is_null() {
            return Err(null("spans"));
        }
        let y0 = DVector::from_column_slice(slice(y0, e, "y0")?);
        *spans = c_int::from(vf.ellipticity(&y0).0);
        Ok(())
    })
}

/// # Safety
/// `fields` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_fields_free(fields: *mut RdFields) {
    free(fields)
}

/// Solves the RDE along `path` from `y0` (`e` values), with the Jacobian.
///
/// # Safety
/// Handles must be live, `y0` must hold `e` values, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rd_solve_flow(
    path: *const RdRoughPath,
    fields: *const RdFields,
    y0: *const f64,
    e: usize,
    out: *mut *mut RdFlow,
) -> RdStatus {
    guard(|| {
        let x = &handle(path, "path")?.0;
        let vf = &handle(fields, "fields")?.0;
        let y0 = DVector::from_column_slice(slice(y0, e, "y0")?);
        put(out, RdFlow(solve_flow_jacobian(x, vf, &y0).map_err(lib)?))
    })
}

/// Number of grid points of the flow, or 0 for a null handle.
///
/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_flow_len(flow: *const RdFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.0.grid.len())
}

/// State `Y_{t_index}` into `out` (`e` values) and, when `jacobian` is not
/// null, `J_{t_index←0}` into it (`e × e`, row-major).
///
/// # Safety
/// `flow` must be a live handle; output arrays must have room for the values.
#[no_mangle]
pub unsafe extern "C" fn rd_flow_state(
    flow: *const RdFlow,
    index: usize,
    out: *mut f64,
    e: usize,
    jacobian: *mut f64,
) -> RdStatus {
    guard(|| {
        let f = &handle(flow, "flow")?.0;
        if e != f.state_dim() {
            return Err(lib(Error::DimensionMismatch { expected: f.state_dim(), found: e }));
        }
        let y = f.y.get(index).ok_or_else(|| invalid(format!("index {index} out of range")))?;
        slice_mut(out, e, "out")?.copy_from_slice(y.as_slice());
        if !jacobian.is_null() {
            let j = &f.jacobian().map_err(lib)?.j[index];
            let dst = slice_mut(jacobian, e * e, "jacobian")?;
            for r in 0..e {
                for c in 0..e {
                    dst[r * e + c] = j[(r, c)];
                }
            }
        }
        Ok(())
    })
}

/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_flow_free(flow: *mut RdFlow) {
    free(flow)
}

/// Malliavin matrix of `Y_t` by the 2D Young route. `sigma` receives
/// `e × e` values row-major; `lambda_min` and `nondegenerate` may be null.
///
/// # Safety
/// Handles must be live; `sigma` must have room for `e × e` values.
#[no_mangle]
pub unsafe extern "C" fn rd_malliavin(
    flow: *const RdFlow,
    fields: *const RdFields,
    model: *const RdModel,
    t: f64,
    sigma: *mut f64,
    e: usize,
    lambda_min: *mut f64,
    nondegenerate: *mut c_int,
) -> RdStatus {
    guard(|| {
        let flow = &handle(flow, "flow")?.0;
        let vf = &handle(fields, "fields")?.0;
        let model = &handle(model, "model")?.0;
        if e != flow.state_dim() {
            return Err(lib(Error::DimensionMismatch { expected: flow.state_dim(), found: e }));
        }
        let m = malliavin_matrix_2d(flow, vf, model, t).map_err(lib)?;
        let dst = slice_mut(sigma, e * e, "sigma")?;
        for r in 0..e {
            for c in 0..e {
                dst[r * e + c] = m.sigma[(r, c)];
            }
        }
        let s = spectrum(&m);
        if !lambda_min.is_null() {
            *lambda_min = s.lambda_min;
        }
        if !nondegenerate.is_null() {
            *nondegenerate = c_int::from(s.nondegenerate);
        }
        Ok(())
    })
}
