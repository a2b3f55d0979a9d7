//! The step-2 nilpotent group G²(ℝ^d).
//!
//! An element is a pair `(a, b)` with `a ∈ ℝ^d` and `b ∈ ℝ^{d×d}`. For a path
//! `x` the element over `[s, t]` has `a = x_t - x_s` and
//! `b[i][j] = ∫_s^t (x^i_u - x^i_s) dx^j_u`, so the first index is the inner
//! (earlier) increment. Geometric elements satisfy `Sym(b) = a ⊗ a / 2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on `|Sym(b) - a⊗a/2|` for unit-scale data.
pub const GEOMETRIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct G2Element {
    level1: DVector<f64>,
    level2: DMatrix<f64>,
}

/// Lie-algebra coordinates `(a, b - a⊗a/2)`; `area` is antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct LogCoordinates {
    pub increment: DVector<f64>,
    pub area: DMatrix<f64>,
}

impl G2Element {
    pub fn new(level1: DVector<f64>, level2: DMatrix<f64>) -> Result<Self> {
        let d = level1.len();
        if level2.nrows() != d || level2.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if level2.nrows() != d { level2.nrows() } else { level2.ncols() },
            });
        }
        Ok(Self { level1, level2 })
    }

    pub fn from_slices(level1: &[f64], level2_row_major: &[f64]) -> Result<Self> {
        let d = level1.len();
        if level2_row_major.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: level2_row_major.len() });
        }
        Ok(Self {
            level1: DVector::from_column_slice(level1),
            level2: DMatrix::from_row_slice(d, d, level2_row_major),
        })
    }

    pub fn identity(d: usize) -> Self {
        Self { level1: DVector::zeros(d), level2: DMatrix::zeros(d, d) }
    }

    /// Element of a straight segment with increment `a`: `(a, a⊗a/2)`.
    pub fn segment(a: DVector<f64>) -> Self {
        let level2 = &a * a.transpose() * 0.5;
        Self { level1: a, level2 }
    }

    pub fn dim(&self) -> usize {
        self.level1.len()
    }

    pub fn level1(&self) -> &DVector<f64> {
        &self.level1
    }

    pub fn level2(&self) -> &DMatrix<f64> {
        &self.level2
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.level1, self.level2)
    }

    /// Max entrywise deviation of `Sym(level2)` from `level1⊗level1/2`.
    pub fn symmetric_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let sym = 0.5 * (self.level2[(i, j)] + self.level2[(j, i)]);
                let target = 0.5 * self.level1[i] * self.level1[j];
                worst = worst.max((sym - target).abs());
            }
        }
        worst
    }

    pub fn is_geometric(&self) -> bool {
        self.symmetric_residual() <= GEOMETRIC_TOL
    }

    /// Truncated tensor product `self ⊗ other`.
    pub fn product(&self, other: &G2Element) -> Result<G2Element> {
        check_dims(self, other)?;
        let level1 = &self.level1 + &other.level1;
        let level2 = &self.level2 + &other.level2 + &self.level1 * other.level1.transpose();
        Ok(G2Element { level1, level2 })
    }

    pub fn inverse(&self) -> G2Element {
        let level1 = -&self.level1;
        let level2 = -&self.level2 + &self.level1 * self.level1.transpose();
        G2Element { level1, level2 }
    }

    /// `self⁻¹ ⊗ later`, the increment from `self` to `later`.
    pub fn increment_to(&self, later: &G2Element) -> Result<G2Element> {
        self.inverse().product(later)
    }

    pub fn log(&self) -> Result<LogCoordinates> {
        let residual = self.symmetric_residual();
        if residual > GEOMETRIC_TOL {
            return Err(Error::NotGeometric { residual });
        }
        let area = &self.level2 - &self.level1 * self.level1.transpose() * 0.5;
        Ok(LogCoordinates { increment: self.level1.clone(), area })
    }

    /// Antisymmetric part of level 2. Equals the log-map area for geometric
    /// elements.
    pub fn area(&self) -> DMatrix<f64> {
        (&self.level2 - self.level2.transpose()) * 0.5
    }

    /// `max(‖a‖₂, ‖area‖_F^{1/2})`, homogeneous under dilation.
    pub fn homogeneous_norm(&self) -> f64 {
        let d = self.dim();
        let mut area_sq = 0.0;
        for i in 0..d {
            for j in 0..d {
                let w = 0.5 * (self.level2[(i, j)] - self.level2[(j, i)]);
                area_sq += w * w;
            }
        }
        self.level1.norm().max(area_sq.sqrt().sqrt())
    }

    /// Dilation `δ_λ`: level 1 scaled by `λ`, level 2 by `λ²`.
    pub fn dilate(&self, lambda: f64) -> G2Element {
        G2Element { level1: &self.level1 * lambda, level2: &self.level2 * (lambda * lambda) }
    }

    pub fn max_abs_diff(&self, other: &G2Element) -> f64 {
        let a = (&self.level1 - &other.level1).amax();
        let b = (&self.level2 - &other.level2).amax();
        a.max(b)
    }
}

fn check_dims(g: &G2Element, h: &G2Element) -> Result<()> {
    if g.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: h.dim() });
    }
    Ok(())
}

pub fn g2_product(g: &G2Element, h: &G2Element) -> Result<G2Element> {
    g.product(h)
}

pub fn g2_inverse(g: &G2Element) -> G2Element {
    g.inverse()
}

pub fn g2_increment(g_s: &G2Element, g_t: &G2Element) -> Result<G2Element> {
    g_s.increment_to(g_t)
}

pub fn log_map(g: &G2Element) -> Result<LogCoordinates> {
    g.log()
}

pub fn homogeneous_norm(g: &G2Element) -> f64 {
    g.homogeneous_norm()
}
