//! Step-2 lifts of sampled paths.
//!
//! Paths are interpolated linearly between grid points, so every segment
//! contributes `(Δx, Δx⊗Δx/2)` and the lift is geometric by construction.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::PathSample;
use crate::grid::{same_grid, GridFunction1D, TimeGrid};
use crate::group::{G2Element, GEOMETRIC_TOL};
use crate::young::p_variation_by;

/// `elements[i]` is the element of the path over `[0, t_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughPath {
    grid: TimeGrid,
    elements: Vec<G2Element>,
}

impl RoughPath {
    /// Chains per-interval increments into a rough path.
    pub fn from_increments(grid: TimeGrid, increments: &[G2Element]) -> Result<Self> {
        if increments.len() != grid.intervals() {
            return Err(Error::GridMismatch(format!(
                "{} increments for {} intervals",
                increments.len(),
                grid.intervals()
            )));
        }
        let d = increments.first().map(G2Element::dim).unwrap_or(0);
        let mut elements = Vec::with_capacity(grid.len());
        elements.push(G2Element::identity(d));
        for inc in increments {
            let next = elements.last().unwrap().product(inc)?;
            elements.push(next);
        }
        Ok(Self { grid, elements })
    }

    pub fn from_elements(grid: TimeGrid, elements: Vec<G2Element>) -> Result<Self> {
        if elements.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} elements for {} grid points",
                elements.len(),
                grid.len()
            )));
        }
        let d = elements[0].dim();
        if let Some(bad) = elements.iter().find(|e| e.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: bad.dim() });
        }
        if elements[0].max_abs_diff(&G2Element::identity(d)) != 0.0 {
            return Err(Error::InvalidGrid("rough path must start at the identity".into()));
        }
        Ok(Self { grid, elements })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn elements(&self) -> &[G2Element] {
        &self.elements
    }

    pub fn endpoint(&self) -> &G2Element {
        self.elements.last().unwrap()
    }

    /// `x_{s,t}` between grid indices `s` and `t`.
    pub fn increment(&self, s: usize, t: usize) -> G2Element {
        self.elements[s].increment_to(&self.elements[t]).expect("uniform dimension")
    }

    pub fn increments(&self) -> Vec<G2Element> {
        (0..self.grid.intervals()).map(|i| self.increment(i, i + 1)).collect()
    }

    /// Level-1 path `x_t - x_0`.
    pub fn trace_path(&self) -> GridFunction1D {
        let rows: Vec<DVector<f64>> = self.elements.iter().map(|e| e.level1().clone()).collect();
        GridFunction1D::from_rows(self.grid.clone(), &rows).expect("grid length")
    }

    /// Largest symmetric-part residual over consecutive increments.
    pub fn geometric_residual(&self) -> f64 {
        (0..self.grid.intervals())
            .map(|i| self.increment(i, i + 1).symmetric_residual())
            .fold(0.0, f64::max)
    }

    pub fn ensure_geometric(&self) -> Result<()> {
        let residual = self.geometric_residual();
        if residual > GEOMETRIC_TOL {
            return Err(Error::NotGeometric { residual });
        }
        Ok(())
    }

    /// Homogeneous norm of `x_{s,t}` without allocating the increment.
    pub fn increment_norm(&self, s: usize, t: usize) -> f64 {
        let (gs, gt) = (&self.elements[s], &self.elements[t]);
        let (a_s, b_s) = (gs.level1(), gs.level2());
        let (a_t, b_t) = (gt.level1(), gt.level2());
        let d = a_s.len();
        let mut inc_sq = 0.0;
        let mut area_sq = 0.0;
        for i in 0..d {
            let da_i = a_t[i] - a_s[i];
            inc_sq += da_i * da_i;
            for j in 0..d {
                if i == j {
                    continue;
                }
                let da_j = a_t[j] - a_s[j];
                // antisymmetric part of b_t - b_s - a_s ⊗ (a_t - a_s)
                let w = 0.5 * ((b_t[(i, j)] - b_t[(j, i)]) - (b_s[(i, j)] - b_s[(j, i)]))
                    - 0.5 * (a_s[i] * da_j - a_s[j] * da_i);
                area_sq += w * w;
            }
        }
        inc_sq.sqrt().max(area_sq.sqrt().sqrt())
    }

    /// p-variation with respect to the homogeneous norm, over all grid
    /// sub-partitions.
    pub fn p_variation(&self, p: f64) -> Result<f64> {
        p_variation_by(self.grid.len(), p, |s, t| self.increment_norm(s, t))
    }

    /// Rough path restricted to `[0, t_last]`.
    pub fn prefix(&self, last: usize) -> Result<RoughPath> {
        Ok(RoughPath { grid: self.grid.prefix(last)?, elements: self.elements[..=last].to_vec() })
    }

    /// CSV with columns `t, x1..xd, b11, b12, ..., bdd` (level 2 row-major).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        for i in 1..=d {
            for j in 1..=d {
                header.push(format!("b{i}{j}"));
            }
        }
        w.write_record(&header)?;
        for (t, e) in self.grid.points().iter().zip(&self.elements) {
            w.write_record(row_fields(*t, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn row_fields(t: f64, e: &G2Element) -> Vec<String> {
    let d = e.dim();
    let mut row = vec![t.to_string()];
    row.extend(e.level1().iter().map(|v| v.to_string()));
    for i in 0..d {
        for j in 0..d {
            row.push(e.level2()[(i, j)].to_string());
        }
    }
    row
}

/// Lift of the piecewise-linear interpolation of `path`.
pub fn lift_piecewise_linear(path: &PathSample) -> Result<RoughPath> {
    lift_values(&path.grid, &path.values)
}

pub(crate) fn lift_values(grid: &TimeGrid, values: &DMatrix<f64>) -> Result<RoughPath> {
    if values.nrows() != grid.len() || grid.len() < 2 {
        return Err(Error::GridMismatch(format!("{} rows for {} points", values.nrows(), grid.len())));
    }
    let increments: Vec<G2Element> = (0..grid.intervals())
        .map(|i| G2Element::segment((values.row(i + 1) - values.row(i)).transpose()))
        .collect();
    RoughPath::from_increments(grid.clone(), &increments)
}

/// Translation `T_h X` by a path `h` that is linear between grid points.
///
/// On a segment with increments `(a, b)` of `X` and `Δh` of `h`,
/// `∫x̃⊗dh = a⊗Δh/2`, `∫h̃⊗dx = Δh⊗a/2` and `∫h̃⊗dh = Δh⊗Δh/2`, all exact
/// for linear `x` on the segment.
pub fn translate(x: &RoughPath, h: &GridFunction1D) -> Result<RoughPath> {
    same_grid(x.grid(), h.grid())?;
    if h.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: h.dim() });
    }
    let increments: Vec<G2Element> = (0..x.grid().intervals())
        .map(|i| {
            let (a, b) = x.increment(i, i + 1).into_parts();
            let dh = h.increment(i);
            let cross = &a * dh.transpose() + &dh * a.transpose() + &dh * dh.transpose();
            let level2 = b + cross * 0.5;
            G2Element::new(a + dh, level2).expect("matching dims")
        })
        .collect();
    RoughPath::from_increments(x.grid().clone(), &increments)
}

/// Space-time lift `(t, X)`; time is coordinate 0.
pub fn spacetime_lift(x: &RoughPath) -> RoughPath {
    let d = x.dim();
    let pts = x.grid().points();
    let increments: Vec<G2Element> = (0..x.grid().intervals())
        .map(|i| {
            let dt = pts[i + 1] - pts[i];
            let inc = x.increment(i, i + 1);
            let mut level1 = DVector::zeros(d + 1);
            level1[0] = dt;
            level1.rows_mut(1, d).copy_from(inc.level1());
            let mut level2 = DMatrix::zeros(d + 1, d + 1);
            level2[(0, 0)] = 0.5 * dt * dt;
            for k in 0..d {
                let cross = 0.5 * dt * inc.level1()[k];
                level2[(0, k + 1)] = cross;
                level2[(k + 1, 0)] = cross;
            }
            level2.view_mut((1, 1), (d, d)).copy_from(inc.level2());
            G2Element::new(level1, level2).expect("matching dims")
        })
        .collect();
    RoughPath::from_increments(x.grid().clone(), &increments).expect("grid length")
}
