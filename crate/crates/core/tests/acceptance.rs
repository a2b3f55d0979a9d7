//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rdens --test acceptance`. Each criterion has a
//! numerical tolerance and a runtime budget; both must hold.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rdens::config::ExperimentConfig;
use rdens::experiment::{check_conditions, run_experiment, ExperimentRun};
use rdens::fields::VectorFieldSystem;
use rdens::gaussian::{cm_element, cm_embedding_check, sample_paths, CameronMartinBasis, CovarianceModel, Kernel, PathSample};
use rdens::grid::{GridFunction1D, TimeGrid};
use rdens::group::G2Element;
use rdens::lift::{lift_piecewise_linear, translate};
use rdens::malliavin::{
    malliavin_matrix_2d, malliavin_matrix_bm_reduction, malliavin_matrix_parseval, relative_frobenius,
};
use rdens::rde::{directional_derivative, solve_flow_jacobian, solve_ode_reference, solve_rde};
use rdens::young::{young_integral_1d, young_integral_2d};
use rdens::Error;

type Check = Result<(bool, String), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn gaussian_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(r)).collect()
}

fn err(e: Error) -> String {
    e.to_string()
}

fn random_element(r: &mut ChaCha8Rng, d: usize) -> G2Element {
    let a = DVector::from_vec(gaussian_vec(r, d));
    let w = DMatrix::from_vec(d, d, gaussian_vec(r, d * d));
    let area = (&w - w.transpose()) * 0.5;
    let b = &a * a.transpose() * 0.5 + area;
    G2Element::new(a, b).unwrap()
}

fn random_path(r: &mut ChaCha8Rng, d: usize, points: usize) -> PathSample {
    let grid = TimeGrid::uniform(1.0, points - 1).unwrap();
    let mut values = DMatrix::zeros(points, d);
    for i in 1..points {
        for k in 0..d {
            values[(i, k)] = values[(i - 1, k)] + normal(r);
        }
    }
    PathSample::new(grid, values, 0, 0).unwrap()
}

/// Random grid Cameron–Martin path with `d` components.
fn random_cm_path(r: &mut ChaCha8Rng, model: &CovarianceModel, grid: &TimeGrid, scale: f64) -> GridFunction1D {
    let mut values = DMatrix::zeros(grid.len(), model.dim());
    for k in 0..model.dim() {
        let (h, norm) = cm_element(model, k, grid, &gaussian_vec(r, grid.len() - 1)).unwrap();
        values.column_mut(k).copy_from(&(h.values().column(0) * (scale / norm)));
    }
    GridFunction1D::new(grid.clone(), values).unwrap()
}

fn max_diff(a: &[G2Element], b: &[G2Element]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

fn c1_group_and_chen() -> Check {
    let tol = 1e-9;
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let d = 1 + i % 3;
        let (g, h, k) = (random_element(&mut r, d), random_element(&mut r, d), random_element(&mut r, d));
        let left = g.product(&h).and_then(|gh| gh.product(&k)).map_err(err)?;
        let right = h.product(&k).and_then(|hk| g.product(&hk)).map_err(err)?;
        worst = worst.max(left.max_abs_diff(&right));
        let id = G2Element::identity(d);
        let inv = g.inverse();
        worst = worst.max(g.product(&inv).map_err(err)?.max_abs_diff(&id));
        worst = worst.max(inv.product(&g).map_err(err)?.max_abs_diff(&id));
        worst = worst.max(left.symmetric_residual()).max(inv.symmetric_residual());
    }
    let elements_worst = worst;
    for i in 0..100 {
        let d = 1 + i % 3;
        let points = r.random_range(3..60);
        let p = random_path(&mut r, d, points);
        let x = lift_piecewise_linear(&p).map_err(err)?;
        worst = worst.max(x.geometric_residual());
        for e in x.elements() {
            worst = worst.max(e.symmetric_residual());
        }
        let k = r.random_range(1..points - 1);
        let tail_grid = TimeGrid::uniform(1.0, points - 1 - k).unwrap();
        let tail = PathSample::new(tail_grid, p.values.rows(k, points - k).into_owned(), 0, 0).map_err(err)?;
        let tail_lift = lift_piecewise_linear(&tail).map_err(err)?;
        let joined = x.prefix(k).map_err(err)?.endpoint().product(tail_lift.endpoint()).map_err(err)?;
        worst = worst.max(joined.max_abs_diff(x.endpoint()));
    }
    Ok((
        worst <= tol,
        format!("max residual {worst:.2e} (elements {elements_worst:.2e}) over 1000 elements and 100 paths, tol {tol:.0e}"),
    ))
}

fn c2_translation() -> Check {
    let tol = 1e-10;
    let model = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).map_err(err)?;
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let paths = sample_paths(&model, &grid, 200, 2).map_err(err)?;
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for p in &paths {
        let (sh, sg) = (1.0 + r.random::<f64>(), 1.0 + r.random::<f64>());
        let h = random_cm_path(&mut r, &model, &grid, sh);
        let g = random_cm_path(&mut r, &model, &grid, sg);
        let x = lift_piecewise_linear(p).map_err(err)?;
        let shifted = PathSample::new(grid.clone(), &p.values + h.values(), 0, 0).map_err(err)?;
        let direct = lift_piecewise_linear(&shifted).map_err(err)?;
        let th = translate(&x, &h).map_err(err)?;
        worst = worst.max(max_diff(direct.elements(), th.elements()));
        let twice = translate(&translate(&x, &g).map_err(err)?, &h).map_err(err)?;
        let once = translate(&x, &g.add(&h).map_err(err)?).map_err(err)?;
        worst = worst.max(max_diff(twice.elements(), once.elements()));
    }
    Ok((worst <= tol, format!("max residual {worst:.2e} over 200 pairs at n = 64, tol {tol:.0e}")))
}

fn c3_cm_embedding() -> Check {
    let kernels = [Kernel::Brownian, Kernel::fractional(0.4).map_err(err)?, Kernel::fractional(0.75).map_err(err)?];
    let models: Vec<CovarianceModel> =
        kernels.iter().map(|k| CovarianceModel::iid(k.clone(), 1, 1.0)).collect::<Result<_, _>>().map_err(err)?;
    let grids = [TimeGrid::uniform(1.0, 9).unwrap(), TimeGrid::uniform(1.0, 64).unwrap()];
    let mut r = rng(3);
    let (mut violations, mut exact, mut worst_ratio) = (0, 0, 0.0f64);
    for i in 0..1000 {
        let model = &models[i % 3];
        let grid = &grids[(i / 3) % 2];
        let rho = model.components()[0].analytic_rho().unwrap();
        let (h, norm) = cm_element(model, 0, grid, &gaussian_vec(&mut r, grid.len() - 1)).map_err(err)?;
        let check = cm_embedding_check(model, 0, &h, norm, rho).map_err(err)?;
        if !check.holds {
            violations += 1;
        }
        if check.exact {
            exact += 1;
        }
        worst_ratio = worst_ratio.max(check.lhs / check.rhs);
    }
    Ok((
        violations == 0,
        format!("{violations} violations in 1000 draws ({exact} exact, {} dyadic); max lhs/rhs {worst_ratio:.3}", 1000 - exact),
    ))
}

fn c4_parseval() -> Check {
    let tol = 1e-8;
    let grid = TimeGrid::uniform(1.0, 128).unwrap();
    let kernels = [Kernel::Brownian, Kernel::fractional(0.4).map_err(err)?, Kernel::fractional(0.75).map_err(err)?];
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for (j, kernel) in kernels.iter().enumerate() {
        let model = CovarianceModel::iid(kernel.clone(), 1, 1.0).map_err(err)?;
        let basis = CameronMartinBasis::new(&model, &grid, 0).map_err(err)?;
        let mut hmat = DMatrix::zeros(grid.len(), basis.len());
        for (n, h) in basis.basis_paths.iter().enumerate() {
            hmat.column_mut(n).copy_from(&h.values().column(0));
        }
        let hs = GridFunction1D::new(grid.clone(), hmat).unwrap();
        let rcov = model.covariance_on(&grid, 0);
        let pairs = if j < 2 { 33 } else { 34 };
        for _ in 0..pairs {
            let f = GridFunction1D::scalar(grid.clone(), &gaussian_vec(&mut r, grid.len())).unwrap();
            let g = GridFunction1D::scalar(grid.clone(), &gaussian_vec(&mut r, grid.len())).unwrap();
            let fh = young_integral_1d(&f, &hs).map_err(err)?;
            let gh = young_integral_1d(&g, &hs).map_err(err)?;
            let lhs = fh.row(0).dot(&gh.row(0));
            let rhs = young_integral_2d(&f, &g, &rcov).map_err(err)?[(0, 0)];
            let ff = young_integral_2d(&f, &f, &rcov).map_err(err)?[(0, 0)];
            let gg = young_integral_2d(&g, &g, &rcov).map_err(err)?[(0, 0)];
            worst = worst.max((lhs - rhs).abs() / (ff * gg).sqrt());
        }
    }
    Ok((
        worst <= tol,
        format!("max |sum - double integral| / sqrt(<f,f><g,g>) = {worst:.2e} over 100 pairs at n = 128, tol {tol:.0e}"),
    ))
}

fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().exp()
}

fn c5_rde_oracles() -> Check {
    let tol_a = 1e-6;
    let tol_b = 1e-4;
    let n = 1024;
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let mut gap_a = 0.0f64;
    // planar rotation along a linear driver and a wiggly one, plus a scalar field
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let cases: Vec<(DMatrix<f64>, DVector<f64>, Box<dyn Fn(f64) -> f64>)> = vec![
        (rot.clone(), DVector::from_vec(vec![1.0, 0.0]), Box::new(|t| PI / 2.0 * t)),
        (rot * 0.7, DVector::from_vec(vec![0.3, -1.0]), Box::new(|t| (3.0 * t).sin() + t * t)),
        (DMatrix::from_element(1, 1, 0.8), DVector::from_vec(vec![1.5]), Box::new(|t| (2.0 * t).cos() - 1.0 + t)),
    ];
    for (a, y0, f) in &cases {
        let vf = VectorFieldSystem::linear_homogeneous(vec![a.clone()]).map_err(err)?;
        let drv = PathSample::from_fn(&grid, 1, |t| DVector::from_vec(vec![f(t)]));
        let flow = solve_rde(&lift_piecewise_linear(&drv).map_err(err)?, &vf, y0).map_err(err)?;
        let want = expm(&(a * f(1.0))) * y0;
        gap_a = gap_a.max((flow.endpoint() - want).amax());
    }

    let vf = VectorFieldSystem::affine_rotation(&[0.8, -0.5], &[[1.0, 0.0], [0.0, 1.0]], 0.3).map_err(err)?;
    let y0 = DVector::from_vec(vec![1.0, 0.5]);
    let model = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).map_err(err)?;
    let coarse_grid = TimeGrid::uniform(1.0, 16).unwrap();
    let mut monotone = true;
    let mut final_gap = 0.0f64;
    for coarse in sample_paths(&model, &coarse_grid, 5, 5).map_err(err)? {
        let oracle = solve_ode_reference(&coarse, &vf, &y0, 64).map_err(err)?;
        let mut prev = f64::INFINITY;
        for m in [1usize, 2, 4, 8, 16, 32, 64] {
            let x = lift_piecewise_linear(&coarse.refine(m)).map_err(err)?;
            let flow = solve_rde(&x, &vf, &y0).map_err(err)?;
            let gap = (0..=16).map(|i| (&flow.y[i * m] - &oracle.y[i]).amax()).fold(0.0, f64::max);
            monotone &= gap < prev;
            prev = gap;
        }
        final_gap = final_gap.max(prev);
    }
    Ok((
        gap_a <= tol_a && monotone && final_gap <= tol_b,
        format!(
            "(a) closed-form gap {gap_a:.2e} at n = {n} (tol {tol_a:.0e}); (b) ODE-oracle gap decreasing: {monotone}, final {final_gap:.2e} (tol {tol_b:.0e}) over 5 drivers"
        ),
    ))
}

fn c6_duhamel() -> Check {
    let tol = 0.01;
    let eps = 1e-4;
    let vf = VectorFieldSystem::example_cubic();
    let y0 = DVector::from_vec(vec![0.2, -0.4]);
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    let models = [
        CovarianceModel::iid(Kernel::Brownian, 2, 1.0).map_err(err)?,
        CovarianceModel::iid(Kernel::fractional(0.75).map_err(err)?, 2, 1.0).map_err(err)?,
    ];
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let model = &models[i as usize % 2];
        let path = sample_paths(model, &grid, 1, 600 + i).map_err(err)?.remove(0);
        let x = lift_piecewise_linear(&path).map_err(err)?;
        let h = random_cm_path(&mut r, model, &grid, 1.0);
        let flow = solve_flow_jacobian(&x, &vf, &y0).map_err(err)?;
        let duhamel = directional_derivative(&flow, &vf, &h, 1.0).map_err(err)?;
        let shifted = solve_rde(&translate(&x, &h.scaled(eps)).map_err(err)?, &vf, &y0).map_err(err)?;
        let fd = (shifted.endpoint() - flow.endpoint()) / eps;
        worst = worst.max((&fd - &duhamel).norm() / duhamel.norm());
    }
    Ok((worst <= tol, format!("max relative gap {worst:.2e} at eps = {eps:.0e}, n = 512, 20 pairs, tol {tol}")))
}

fn subsample(path: &PathSample, step: usize) -> PathSample {
    let n = path.grid.intervals() / step;
    let rows: Vec<usize> = (0..=n).map(|i| i * step).collect();
    PathSample::new(TimeGrid::uniform(path.grid.horizon(), n).unwrap(), path.values.select_rows(&rows), 0, 0).unwrap()
}

fn c7_routes() -> Check {
    let tol = 1e-6;
    let grid = TimeGrid::uniform(1.0, 128).unwrap();
    let mut r = rng(7);
    let a3 = |r: &mut ChaCha8Rng| DMatrix::from_vec(3, 3, gaussian_vec(r, 9)) * 0.4;
    let linear3 = VectorFieldSystem::linear(
        std::iter::once(rdens::fields::AffineField { matrix: a3(&mut r) * 0.5, offset: DVector::zeros(3) })
            .chain((0..3).map(|k| rdens::fields::AffineField {
                matrix: a3(&mut r),
                offset: DVector::from_fn(3, |i, _| if i == k { 1.0 } else { 0.0 }),
            }))
            .collect(),
    )
    .map_err(err)?;
    let systems: Vec<(&str, VectorFieldSystem, CovarianceModel, DVector<f64>)> = vec![
        (
            "rotation/bm",
            VectorFieldSystem::affine_rotation(&[1.0, 0.5], &[[1.0, 0.0], [0.0, 1.0]], 0.1).map_err(err)?,
            CovarianceModel::iid(Kernel::Brownian, 2, 1.0).map_err(err)?,
            DVector::from_vec(vec![0.5, 0.0]),
        ),
        (
            "cubic/fbm0.4",
            VectorFieldSystem::example_cubic(),
            CovarianceModel::iid(Kernel::fractional(0.4).map_err(err)?, 2, 1.0).map_err(err)?,
            DVector::from_vec(vec![0.1, 0.2]),
        ),
        (
            "linear3/fbm0.75",
            linear3,
            CovarianceModel::iid(Kernel::fractional(0.75).map_err(err)?, 3, 1.0).map_err(err)?,
            DVector::from_vec(vec![0.2, -0.1, 0.3]),
        ),
    ];
    let mut route_worst = 0.0f64;
    for (_, vf, model, y0) in &systems {
        let basis = rdens::gaussian::cameron_martin_basis(model, &grid).map_err(err)?;
        for path in sample_paths(model, &grid, 10, 70).map_err(err)? {
            let flow = solve_flow_jacobian(&lift_piecewise_linear(&path).map_err(err)?, vf, y0).map_err(err)?;
            for t in [0.5, 1.0] {
                let a = malliavin_matrix_2d(&flow, vf, model, t).map_err(err)?;
                let b = malliavin_matrix_parseval(&flow, vf, &basis, t).map_err(err)?;
                route_worst = route_worst.max(relative_frobenius(&a.sigma, &b.sigma));
            }
        }
    }

    // Brownian reduction on one fine path per sample, subsampled to coarser grids
    let bm = CovarianceModel::iid(Kernel::Brownian, 2, 1.0).map_err(err)?;
    let vf = VectorFieldSystem::example_cubic();
    let y0 = DVector::from_vec(vec![0.1, 0.2]);
    let fine_grid = TimeGrid::uniform(1.0, 512).unwrap();
    let steps = [4usize, 2, 1];
    let mut mean_gap = [0.0f64; 3];
    let mut worst_512 = 0.0f64;
    let samples = 10;
    for path in sample_paths(&bm, &fine_grid, samples, 71).map_err(err)? {
        for (j, &step) in steps.iter().enumerate() {
            let p = subsample(&path, step);
            let flow = solve_flow_jacobian(&lift_piecewise_linear(&p).map_err(err)?, &vf, &y0).map_err(err)?;
            let a = malliavin_matrix_2d(&flow, &vf, &bm, 1.0).map_err(err)?;
            let b = malliavin_matrix_bm_reduction(&flow, &vf, 1.0).map_err(err)?;
            let gap = relative_frobenius(&a.sigma, &b.sigma);
            mean_gap[j] += gap / samples as f64;
            if step == 1 {
                worst_512 = worst_512.max(gap);
            }
        }
    }
    let shrinking = mean_gap[0] > mean_gap[1] && mean_gap[1] > mean_gap[2];
    Ok((
        route_worst <= tol && worst_512 <= 0.02 && shrinking,
        format!(
            "route gap {route_worst:.2e} (tol {tol:.0e}) on 10 samples x 3 systems; BM reduction gap at n = 512 max {worst_512:.2e} (tol 2e-2), mean over n = 128/256/512: {:.2e}/{:.2e}/{:.2e}",
            mean_gap[0], mean_gap[1], mean_gap[2]
        ),
    ))
}

fn run_config(text: &str) -> Result<ExperimentRun, String> {
    let config = ExperimentConfig::from_toml_str(text).map_err(err)?;
    run_experiment(&config).map_err(err)
}

const ROTATION_FIELDS: &str = r#"
[fields]
family = "affine-rotation"
y0 = [0.5, 0.0]
rates = [1.0, 0.5]
offsets = [[1.0, 0.0], [0.0, 1.0]]
drift_rate = 0.1
"#;

const CUBIC_FIELDS: &str = r#"
[fields]
family = "cubic"
y0 = [0.1, 0.2]
"#;

fn c8_dichotomy() -> Check {
    let count = 1000;
    let header = |seed: u64, extra: &str| format!("seed = {seed}\ncount = {count}\ntimes = [0.5, 1.0]\n{extra}\n");
    let mut lines = Vec::new();
    let mut ok = true;
    let drivers = [
        ("bm", "kernel = \"bm\""),
        ("fbm0.4", "kernel = \"fbm\"\nhurst = 0.4"),
        ("fbm0.5", "kernel = \"fbm\"\nhurst = 0.5"),
        ("fbm0.75", "kernel = \"fbm\"\nhurst = 0.75"),
    ];
    let mut elliptic_nondeg = 0;
    let mut elliptic_total = 0;
    for (s, (name, fields)) in [("rotation", ROTATION_FIELDS), ("cubic", CUBIC_FIELDS)].iter().enumerate() {
        for (k, (dname, kernel)) in drivers.iter().enumerate() {
            let text = format!("{}[model]\n{kernel}\nn = 128\ndim = 2\n{fields}", header(800 + 10 * s as u64 + k as u64, ""));
            let run = run_config(&text)?;
            let nondeg = run.rows.iter().filter(|r| r.nondegenerate).count();
            elliptic_nondeg += nondeg;
            elliptic_total += 2 * count;
            if nondeg != 2 * count || run.report.completed != count {
                ok = false;
                lines.push(format!("{name}/{dname}: {nondeg}/{} non-degenerate", 2 * count));
            }
        }
    }
    lines.insert(0, format!("elliptic: {elliptic_nondeg}/{elliptic_total} non-degenerate"));

    let degenerate = run_config(&format!(
        "{}[model]\nkernel = \"bm\"\nn = 128\n[fields]\nfamily = \"linear\"\ny0 = [0.3, 0.3]\nmatrices = [[0, 0, 0, 0]]\noffsets = [[1.0, 0.0]]\n",
        header(850, "expect_degenerate = true")
    ))?;
    let deg = degenerate.rows.iter().filter(|r| !r.nondegenerate && r.det.abs() <= 1e-12).count();
    ok &= deg == 2 * count;
    lines.push(format!("degenerate fields: {deg}/{} degenerate with det <= 1e-12", 2 * count));

    let bridge = run_config(&format!(
        "{}[model]\nkernel = \"bridge\"\npin = 1.0\nn = 128\n[fields]\nfamily = \"linear\"\ny0 = [0.2]\nmatrices = [[0.8]]\noffsets = [[0.5]]\n",
        header(860, "expect_degenerate = true")
    ))?;
    let at_pin = bridge.rows_at(1.0).filter(|r| !r.nondegenerate).count();
    let before_pin = bridge.rows_at(0.5).filter(|r| r.nondegenerate).count();
    ok &= at_pin == count;
    lines.push(format!("pinned bridge: {at_pin}/{count} degenerate at t = T ({before_pin}/{count} non-degenerate at T/2)"));
    Ok((ok, lines.join("; ")))
}

fn c9_density() -> Check {
    let run = run_config(
        "seed = 900\ncount = 10000\ntimes = [0.5, 1.0]\noracle = \"lognormal\"\n[model]\nkernel = \"bm\"\nn = 64\n[fields]\nfamily = \"linear\"\ny0 = [1.0]\nmatrices = [[1.0]]\n",
    )?;
    let mut ok = run.report.completed == 10_000;
    let mut parts = Vec::new();
    for t in &run.report.times {
        let ks = t.analytic.as_ref().map(|a| a.ks_log).unwrap_or(f64::INFINITY);
        let mass = t.density.as_ref().map(|d| d.mass).unwrap_or(f64::NAN);
        ok &= ks < 0.05 && (mass - 1.0).abs() <= 1e-3;
        parts.push(format!("t = {}: KS(log Y_t, N(0,t)) = {ks:.4} (tol 0.05), KDE mass {mass:.6}", t.t));
    }
    Ok((ok, parts.join("; ")))
}

fn c10_gating() -> Check {
    let base = |kernel: &str, fields: &str| {
        format!("seed = 1\ncount = 10\ntimes = [1.0]\n[model]\n{kernel}\nn = 32\ndim = 2\n{fields}")
    };
    let rough = ExperimentConfig::from_toml_str(&base("kernel = \"fbm\"\nhurst = 0.3", CUBIC_FIELDS)).map_err(err)?;
    let rejected = matches!(check_conditions(&rough), Err(Error::Condition(_)));
    let spanning = ExperimentConfig::from_toml_str(&base(
        "kernel = \"bm\"",
        "[fields]\nfamily = \"linear\"\ny0 = [0.0, 0.0]\nmatrices = [[0,0,0,0],[0,0,0,0]]\noffsets = [[1.0, 0.0], [0.0, 1.0]]\n",
    ))
    .map_err(err)?;
    let spans = check_conditions(&spanning).map_err(err)?.ellipticity;
    let single = ExperimentConfig::from_toml_str(
        &base(
            "kernel = \"bm\"",
            "[fields]\nfamily = \"linear\"\ny0 = [0.0, 0.0]\nmatrices = [[0,0,0,0]]\noffsets = [[1.0, 0.0]]\n",
        )
        .replace("dim = 2", "dim = 1"),
    )
    .map_err(err)?;
    let flagged = !check_conditions(&single).map_err(err)?.ellipticity;
    Ok((
        rejected && spans && flagged,
        format!("H = 0.3 rejected: {rejected}; spanning pair accepted: {spans}; single field in R^2 flagged: {flagged}"),
    ))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("group and Chen identities", 5, c1_group_and_chen),
        ("translation on grids", 5, c2_translation),
        ("Cameron-Martin embedding", 30, c3_cm_embedding),
        ("Parseval and 2D Young", 10, c4_parseval),
        ("RDE solver oracles", 20, c5_rde_oracles),
        ("Duhamel vs finite difference", 30, c6_duhamel),
        ("Malliavin route equivalence", 60, c7_routes),
        ("ellipticity dichotomy", 180, c8_dichotomy),
        ("density sanity", 120, c9_density),
        ("condition gating", 1, c10_gating),
    ];
    let mut passed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && in_budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if ok {
            passed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {detail} [{:.2} s, budget {budget} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
