//! Vector fields `V_0, V_1, ..., V_d` on `ℝ^e`.
//!
//! Index 0 is the drift; indices `1..=d` pair with the driver components.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// `y ↦ A y + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// `coeff · Π_k φ(y_k)^{powers[k]}` added to component `component` of
/// field `field`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub field: usize,
    pub component: usize,
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldFamily {
    /// One affine field per index, drift first.
    Linear(Vec<AffineField>),
    /// Polynomials of total degree ≤ 3 in `φ(y) = R tanh(y / R)` (or `y`
    /// itself without a cutoff), which keeps the fields and their
    /// derivatives bounded.
    Polynomial { terms: Vec<PolyTerm>, cutoff: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSystem {
    e: usize,
    d: usize,
    family: FieldFamily,
    derivatives: DerivativeSource,
}

impl VectorFieldSystem {
    /// `fields[0]` is the drift, `fields[1..]` the driven fields.
    pub fn linear(fields: Vec<AffineField>) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::InvalidVectorField("need a drift and at least one driven field".into()));
        }
        let e = fields[0].offset.len();
        for f in &fields {
            if f.matrix.nrows() != e || f.matrix.ncols() != e || f.offset.len() != e {
                return Err(Error::InvalidVectorField(format!("affine field is not {e}-dimensional")));
            }
        }
        let d = fields.len() - 1;
        Ok(Self { e, d, family: FieldFamily::Linear(fields), derivatives: DerivativeSource::Analytic })
    }

    /// Driftless `V_i(y) = A_i y`.
    pub fn linear_homogeneous(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let e = matrices.first().map(|m| m.nrows()).unwrap_or(0);
        let mut fields = vec![AffineField { matrix: DMatrix::zeros(e, e), offset: DVector::zeros(e) }];
        fields.extend(matrices.into_iter().map(|matrix| AffineField { matrix, offset: DVector::zeros(e) }));
        Self::linear(fields)
    }

    /// Planar fields `V_k(y) = ω_k J y + c_k` with `J` the rotation
    /// generator and drift `V_0(y) = -λ y`.
    pub fn affine_rotation(rates: &[f64], offsets: &[[f64; 2]], drift_rate: f64) -> Result<Self> {
        if rates.len() != offsets.len() || rates.is_empty() {
            return Err(Error::InvalidVectorField("need one offset per rotation rate".into()));
        }
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut fields = vec![AffineField {
            matrix: DMatrix::identity(2, 2) * (-drift_rate),
            offset: DVector::zeros(2),
        }];
        for (w, c) in rates.iter().zip(offsets) {
            fields.push(AffineField { matrix: &j * *w, offset: DVector::from_column_slice(c) });
        }
        Self::linear(fields)
    }

    pub fn polynomial(e: usize, d: usize, terms: Vec<PolyTerm>, cutoff: Option<f64>) -> Result<Self> {
        if e == 0 || d == 0 {
            return Err(Error::InvalidVectorField("e and d must be positive".into()));
        }
        if let Some(r) = cutoff {
            if !(r > 0.0) {
                return Err(Error::InvalidVectorField(format!("cutoff radius must be > 0, got {r}")));
            }
        }
        for t in &terms {
            if t.field > d || t.component >= e || t.powers.len() != e {
                return Err(Error::InvalidVectorField(format!("term {t:?} does not fit e={e}, d={d}")));
            }
            if t.powers.iter().sum::<u32>() > 3 {
                return Err(Error::InvalidVectorField(format!("term {t:?} has degree > 3")));
            }
        }
        Ok(Self { e, d, family: FieldFamily::Polynomial { terms, cutoff }, derivatives: DerivativeSource::Analytic })
    }

    /// An elliptic planar system with bounded cubic nonlinearities and a
    /// drift; the stock nonlinear example.
    pub fn example_cubic() -> Self {
        let t = |field, component, coeff, powers: [u32; 2]| PolyTerm { field, component, coeff, powers: powers.to_vec() };
        Self::polynomial(
            2,
            2,
            vec![
                t(0, 0, -0.2, [1, 0]),
                t(0, 1, 0.1, [1, 1]),
                t(1, 0, 1.0, [0, 0]),
                t(1, 0, 0.3, [0, 2]),
                t(1, 1, 0.2, [3, 0]),
                t(2, 1, 1.0, [0, 0]),
                t(2, 0, -0.25, [1, 2]),
                t(2, 1, 0.15, [2, 0]),
            ],
            Some(3.0),
        )
        .expect("valid example")
    }

    pub fn with_derivatives(mut self, source: DerivativeSource) -> Self {
        self.derivatives = source;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.e
    }

    pub fn driver_dim(&self) -> usize {
        self.d
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        self.derivatives
    }

    pub fn family(&self) -> &FieldFamily {
        &self.family
    }

    pub fn has_drift(&self) -> bool {
        match &self.family {
            FieldFamily::Linear(f) => f[0].matrix.iter().chain(f[0].offset.iter()).any(|&v| v != 0.0),
            FieldFamily::Polynomial { terms, .. } => terms.iter().any(|t| t.field == 0 && t.coeff != 0.0),
        }
    }

    pub fn value(&self, i: usize, y: &DVector<f64>) -> DVector<f64> {
        match &self.family {
            FieldFamily::Linear(f) => &f[i].matrix * y + &f[i].offset,
            FieldFamily::Polynomial { terms, cutoff } => {
                let phi = Cutoff::new(*cutoff, y);
                let mut out = DVector::zeros(self.e);
                for t in terms.iter().filter(|t| t.field == i) {
                    out[t.component] += t.coeff * monomial(&phi.v, &t.powers);
                }
                out
            }
        }
    }

    /// `V_i'(y)`, the `e×e` Jacobian.
    pub fn jacobian(&self, i: usize, y: &DVector<f64>) -> DMatrix<f64> {
        match self.derivatives {
            DerivativeSource::Analytic => self.jacobian_analytic(i, y),
            DerivativeSource::FiniteDifference => self.jacobian_fd(i, y),
        }
    }

    /// `Σ_l ∂_l V_i'(y) u_l`: the second derivative contracted with `u`.
    pub fn second_derivative(&self, i: usize, y: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match self.derivatives {
            DerivativeSource::Analytic => self.second_analytic(i, y, u),
            DerivativeSource::FiniteDifference => {
                let norm = u.norm();
                if norm == 0.0 {
                    return DMatrix::zeros(self.e, self.e);
                }
                let eps = 1e-4 * (1.0 + y.norm()) / norm;
                let plus = self.jacobian_fd(i, &(y + u * eps));
                let minus = self.jacobian_fd(i, &(y - u * eps));
                (plus - minus) / (2.0 * eps)
            }
        }
    }

    fn jacobian_fd(&self, i: usize, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.e, self.e);
        for l in 0..self.e {
            let h = 1e-5 * (1.0 + y[l].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[l] += h;
            ym[l] -= h;
            let col = (self.value(i, &yp) - self.value(i, &ym)) / (2.0 * h);
            out.column_mut(l).copy_from(&col);
        }
        out
    }

    fn jacobian_analytic(&self, i: usize, y: &DVector<f64>) -> DMatrix<f64> {
        match &self.family {
            FieldFamily::Linear(f) => f[i].matrix.clone(),
            FieldFamily::Polynomial { terms, cutoff } => {
                let phi = Cutoff::new(*cutoff, y);
                let mut out = DMatrix::zeros(self.e, self.e);
                for t in terms.iter().filter(|t| t.field == i) {
                    for l in 0..self.e {
                        if t.powers[l] == 0 {
                            continue;
                        }
                        let dm = monomial_partial(&phi.v, &t.powers, l);
                        out[(t.component, l)] += t.coeff * dm * phi.d1[l];
                    }
                }
                out
            }
        }
    }

    fn second_analytic(&self, i: usize, y: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.family {
            FieldFamily::Linear(_) => DMatrix::zeros(self.e, self.e),
            FieldFamily::Polynomial { terms, cutoff } => {
                let phi = Cutoff::new(*cutoff, y);
                let mut out = DMatrix::zeros(self.e, self.e);
                for t in terms.iter().filter(|t| t.field == i) {
                    for l in 0..self.e {
                        for q in 0..self.e {
                            let h = if l == q {
                                if t.powers[l] == 0 {
                                    continue;
                                }
                                monomial_partial2(&phi.v, &t.powers, l, l) * phi.d1[l] * phi.d1[l]
                                    + monomial_partial(&phi.v, &t.powers, l) * phi.d2[l]
                            } else {
                                if t.powers[l] == 0 || t.powers[q] == 0 {
                                    continue;
                                }
                                monomial_partial2(&phi.v, &t.powers, l, q) * phi.d1[l] * phi.d1[q]
                            };
                            out[(t.component, l)] += t.coeff * h * u[q];
                        }
                    }
                }
                out
            }
        }
    }

    /// Singular values of `[V_1(y) ... V_d(y)]` and whether they span `ℝ^e`
    /// (all of the top `e` exceed `1e-10 · max`).
    pub fn ellipticity(&self, y: &DVector<f64>) -> (bool, Vec<f64>) {
        let mut m = DMatrix::zeros(self.e, self.d);
        for i in 1..=self.d {
            m.column_mut(i - 1).copy_from(&self.value(i, y));
        }
        let mut sv: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let max = sv.first().copied().unwrap_or(0.0);
        let spans = sv.len() >= self.e && max > 0.0 && sv[self.e - 1] > 1e-10 * max;
        (spans, sv)
    }
}

/// Coordinatewise cutoff `φ` with its first two derivatives.
struct Cutoff {
    v: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Cutoff {
    fn new(radius: Option<f64>, y: &DVector<f64>) -> Self {
        match radius {
            None => Cutoff { v: y.iter().copied().collect(), d1: vec![1.0; y.len()], d2: vec![0.0; y.len()] },
            Some(r) => {
                let th: Vec<f64> = y.iter().map(|&x| (x / r).tanh()).collect();
                Cutoff {
                    v: th.iter().map(|t| r * t).collect(),
                    d1: th.iter().map(|t| 1.0 - t * t).collect(),
                    d2: th.iter().map(|t| -2.0 * t * (1.0 - t * t) / r).collect(),
                }
            }
        }
    }
}

fn monomial(x: &[f64], p: &[u32]) -> f64 {
    x.iter().zip(p).map(|(&v, &k)| v.powi(k as i32)).product()
}

fn monomial_partial(x: &[f64], p: &[u32], l: usize) -> f64 {
    let mut out = p[l] as f64;
    for (k, (&v, &pk)) in x.iter().zip(p).enumerate() {
        let e = if k == l { pk as i32 - 1 } else { pk as i32 };
        out *= v.powi(e);
    }
    out
}

fn monomial_partial2(x: &[f64], p: &[u32], l: usize, q: usize) -> f64 {
    let mut q_powers = p.to_vec();
    let mut out = p[l] as f64;
    q_powers[l] -= 1;
    out *= q_powers[q] as f64;
    if q_powers[q] == 0 {
        return 0.0;
    }
    q_powers[q] -= 1;
    out * monomial(x, &q_powers)
}
