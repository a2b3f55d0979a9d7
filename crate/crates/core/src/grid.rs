//! Time grids and functions sampled on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Strictly increasing times `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least 2 points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("grid must start at 0, starts at {}", points[0])));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite time".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("times must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `intervals + 1` equally spaced points on `[0, horizon]`.
    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs horizon > 0 and intervals >= 1 (got {horizon}, {intervals})"
            )));
        }
        let dt = horizon / intervals as f64;
        let mut points: Vec<f64> = (0..=intervals).map(|i| i as f64 * dt).collect();
        points[intervals] = horizon;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn mesh(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of `t`, matched up to `1e-12·T`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let idx = self.points.partition_point(|&p| p < t - tol);
        if idx < self.points.len() && (self.points[idx] - t).abs() <= tol {
            Ok(idx)
        } else {
            Err(Error::NotOnGrid(t))
        }
    }

    /// Grid restricted to `[0, t_last]`.
    pub fn prefix(&self, last: usize) -> Result<TimeGrid> {
        if last == 0 || last >= self.points.len() {
            return Err(Error::InvalidGrid(format!("prefix end {last} out of range")));
        }
        Ok(TimeGrid { points: self.points[..=last].to_vec() })
    }

    /// Every point subdivided into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> TimeGrid {
        let factor = factor.max(1);
        let mut points = Vec::with_capacity(self.intervals() * factor + 1);
        for w in self.points.windows(2) {
            for k in 0..factor {
                points.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
            }
        }
        points.push(self.horizon());
        TimeGrid { points }
    }
}

/// Samples of an `ℝ^m`-valued function; row `i` holds the value at `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction1D {
    grid: TimeGrid,
    values: DMatrix<f64>,
}

impl GridFunction1D {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} grid points",
                values.nrows(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn scalar(grid: TimeGrid, values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(grid, DMatrix::from_column_slice(n, 1, values))
    }

    pub fn from_fn(grid: &TimeGrid, dim: usize, f: impl Fn(f64) -> DVector<f64>) -> Self {
        let mut values = DMatrix::zeros(grid.len(), dim);
        for (i, &t) in grid.points().iter().enumerate() {
            values.row_mut(i).copy_from(&f(t).transpose());
        }
        Self { grid: grid.clone(), values }
    }

    pub fn from_rows(grid: TimeGrid, rows: &[DVector<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidGrid("ragged rows".into()));
        }
        let mut values = DMatrix::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            values.row_mut(i).copy_from(&r.transpose());
        }
        Self::new(grid, values)
    }

    pub fn zeros(grid: &TimeGrid, dim: usize) -> Self {
        Self { grid: grid.clone(), values: DMatrix::zeros(grid.len(), dim) }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn at(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn component(&self, k: usize) -> GridFunction1D {
        GridFunction1D { grid: self.grid.clone(), values: self.values.columns(k, 1).into_owned() }
    }

    /// Restriction to `[0, t_last]`.
    pub fn prefix(&self, last: usize) -> Result<GridFunction1D> {
        let grid = self.grid.prefix(last)?;
        Ok(GridFunction1D { grid, values: self.values.rows(0, last + 1).into_owned() })
    }

    /// Embeds a scalar function into component `k` of an `ℝ^dim` function.
    pub fn embed(&self, k: usize, dim: usize) -> GridFunction1D {
        let mut values = DMatrix::zeros(self.len(), dim);
        values.column_mut(k).copy_from(&self.values.column(0));
        GridFunction1D { grid: self.grid.clone(), values }
    }

    pub fn scaled(&self, c: f64) -> GridFunction1D {
        GridFunction1D { grid: self.grid.clone(), values: &self.values * c }
    }

    pub fn add(&self, other: &GridFunction1D) -> Result<GridFunction1D> {
        same_grid(&self.grid, &other.grid)?;
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(GridFunction1D { grid: self.grid.clone(), values: &self.values + &other.values })
    }

    /// Increment of component values over interval `i`.
    pub fn increment(&self, i: usize) -> DVector<f64> {
        (self.values.row(i + 1) - self.values.row(i)).transpose()
    }
}

/// Samples `F(s_i, t_j)` of a scalar two-parameter function.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction2D {
    grid_s: TimeGrid,
    grid_t: TimeGrid,
    values: DMatrix<f64>,
}

impl GridFunction2D {
    pub fn new(grid_s: TimeGrid, grid_t: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid_s.len() || values.ncols() != grid_t.len() {
            return Err(Error::GridMismatch(format!(
                "{}x{} values for {}x{} grid",
                values.nrows(),
                values.ncols(),
                grid_s.len(),
                grid_t.len()
            )));
        }
        Ok(Self { grid_s, grid_t, values })
    }

    pub fn from_fn(grid_s: &TimeGrid, grid_t: &TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = DMatrix::from_fn(grid_s.len(), grid_t.len(), |i, j| {
            f(grid_s.points()[i], grid_t.points()[j])
        });
        Self { grid_s: grid_s.clone(), grid_t: grid_t.clone(), values }
    }

    pub fn grid_s(&self) -> &TimeGrid {
        &self.grid_s
    }

    pub fn grid_t(&self) -> &TimeGrid {
        &self.grid_t
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn transpose(&self) -> GridFunction2D {
        GridFunction2D {
            grid_s: self.grid_t.clone(),
            grid_t: self.grid_s.clone(),
            values: self.values.transpose(),
        }
    }

    /// Rectangle increments `□_{ij}F` as an `(n_s-1)×(n_t-1)` matrix.
    pub fn rectangle_increments(&self) -> DMatrix<f64> {
        let v = &self.values;
        DMatrix::from_fn(v.nrows() - 1, v.ncols() - 1, |i, j| {
            v[(i + 1, j + 1)] - v[(i, j + 1)] - v[(i + 1, j)] + v[(i, j)]
        })
    }
}

pub(crate) fn same_grid(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} points", a.len(), b.len())));
    }
    let tol = 1e-12 * a.horizon().abs().max(1.0);
    if a.points().iter().zip(b.points()).any(|(x, y)| (x - y).abs() > tol) {
        return Err(Error::GridMismatch("grid points differ".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::uniform(0.0, 4).is_err());
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.index_of(1.5).unwrap(), 3);
        assert!(matches!(g.index_of(1.25), Err(Error::NotOnGrid(_))));
    }

    #[test]
    fn refinement_keeps_original_points() {
        let g = TimeGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
        let r = g.refine(2);
        assert_eq!(r.len(), 5);
        assert_eq!(r.points()[2], 0.3);
        assert!((r.points()[3] - 0.65).abs() < 1e-15);
    }

    #[test]
    fn rectangle_increments_telescope() {
        let g = TimeGrid::uniform(1.0, 5).unwrap();
        let f = GridFunction2D::from_fn(&g, &g, |s, t| s.min(t));
        let q = f.rectangle_increments();
        assert!((q.sum() - 1.0).abs() < 1e-14);
        assert!((q[(2, 2)] - 0.2).abs() < 1e-14);
        assert!(q[(1, 3)].abs() < 1e-15);
    }
}
