//! Built-in model spaces with analytic derivative closures.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::chart::ChartSpec;
use crate::geometry::field::{DerivativeScheme, MatrixField};
use crate::geometry::metric::{Manifold, MetricField};
use crate::linalg::{Matrix, Vector};

/// Conformally flat metric `g = f(x) δ` with `f` depending on `|x|²` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConformalFactor {
    /// `f = 1`.
    Flat,
    /// `f = 4 / (1 − |x|²)²`, curvature −1.
    Poincare,
    /// `f = 4 / (1 + |x|²)²`, curvature +1 (stereographic chart of the round sphere).
    Stereographic,
}

impl ConformalFactor {
    /// `(f, f', f'')` as functions of `r2 = |x|²`.
    fn profile(self, r2: f64) -> (f64, f64, f64) {
        match self {
            ConformalFactor::Flat => (1.0, 0.0, 0.0),
            ConformalFactor::Poincare => {
                let d = 1.0 - r2;
                (4.0 / (d * d), 8.0 / (d * d * d), 24.0 / (d * d * d * d))
            }
            ConformalFactor::Stereographic => {
                let d = 1.0 + r2;
                (4.0 / (d * d), -8.0 / (d * d * d), 24.0 / (d * d * d * d))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConformalMetric {
    dim: usize,
    factor: ConformalFactor,
}

impl ConformalMetric {
    pub fn new(dim: usize, factor: ConformalFactor) -> Self {
        ConformalMetric { dim, factor }
    }

    /// `f(x)` itself.
    pub fn conformal_factor(&self, x: &Vector) -> f64 {
        self.factor.profile(x.norm_squared()).0
    }
}

impl MatrixField for ConformalMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> Matrix {
        let (f, _, _) = self.factor.profile(x.norm_squared());
        Matrix::identity(self.dim, self.dim) * f
    }

    fn gradient(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let n = self.dim;
        let (_, fp, _) = self.factor.profile(x.norm_squared());
        // ∂_k f = 2 x_k f'(r²)
        Some(
            (0..n)
                .map(|k| Matrix::identity(n, n) * (2.0 * x[k] * fp))
                .collect(),
        )
    }

    fn hessian(&self, x: &Vector) -> Option<Vec<Vec<Matrix>>> {
        let n = self.dim;
        let (_, fp, fpp) = self.factor.profile(x.norm_squared());
        // ∂_k ∂_l f = 2 δ_kl f' + 4 x_k x_l f''
        Some(
            (0..n)
                .map(|k| {
                    (0..n)
                        .map(|l| {
                            let d = if k == l { 2.0 * fp } else { 0.0 };
                            Matrix::identity(n, n) * (d + 4.0 * x[k] * x[l] * fpp)
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

/// Round unit sphere `S²` in polar coordinates `(θ, φ)`: `g = diag(1, sin²θ)`.
#[derive(Debug, Clone, Copy)]
pub struct PolarSphereMetric;

impl MatrixField for PolarSphereMetric {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> Matrix {
        let s = x[0].sin();
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s * s])
    }

    fn gradient(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let d = (2.0 * x[0]).sin();
        Some(vec![
            Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, d]),
            Matrix::zeros(2, 2),
        ])
    }

    fn hessian(&self, x: &Vector) -> Option<Vec<Vec<Matrix>>> {
        let dd = 2.0 * (2.0 * x[0]).cos();
        Some(vec![
            vec![
                Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, dd]),
                Matrix::zeros(2, 2),
            ],
            vec![Matrix::zeros(2, 2), Matrix::zeros(2, 2)],
        ])
    }
}

fn analytic(field: impl MatrixField + 'static) -> MetricField {
    MetricField::new(Arc::new(field), DerivativeScheme::Analytic)
}

impl Manifold {
    /// `R^n` with the Euclidean metric.
    pub fn euclidean(dim: usize) -> Result<Self> {
        let chart = ChartSpec::unbounded(dim)?;
        Manifold::new(
            chart,
            analytic(ConformalMetric::new(dim, ConformalFactor::Flat)),
        )
    }

    /// Flat torus `R^n / ∏ L_i Z`.
    pub fn flat_torus(periods: Vec<f64>) -> Result<Self> {
        let dim = periods.len();
        let chart = ChartSpec::unbounded(dim)?.with_periods(periods)?;
        Manifold::new(
            chart,
            analytic(ConformalMetric::new(dim, ConformalFactor::Flat)),
        )
    }

    /// Poincaré ball of dimension `dim`, guarded by `|x| < 1 − ε`.
    pub fn poincare_ball(dim: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "guard epsilon {epsilon} outside (0, 1)"
            )));
        }
        let limit = 1.0 - epsilon;
        let chart = ChartSpec::new(dim, Arc::new(move |x: &Vector| x.norm() < limit))?
            .with_sample_box(vec![(-0.5, 0.5); dim])?;
        Manifold::new(
            chart,
            analytic(ConformalMetric::new(dim, ConformalFactor::Poincare)),
        )
    }

    pub fn poincare_disk(epsilon: f64) -> Result<Self> {
        Self::poincare_ball(2, epsilon)
    }

    /// Round unit sphere `S^n` in the stereographic chart, guarded by `|x| < radius`.
    pub fn round_sphere_stereographic(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "chart radius {radius} must be positive"
            )));
        }
        let chart = ChartSpec::new(dim, Arc::new(move |x: &Vector| x.norm() < radius))?
            .with_sample_box(vec![(-0.5, 0.5); dim])?;
        Manifold::new(
            chart,
            analytic(ConformalMetric::new(dim, ConformalFactor::Stereographic)),
        )
    }

    /// Round unit `S²` in polar coordinates `(θ, φ)`, guarded by `ε < θ < π − ε`.
    /// The chart reference point is `(π/2, 0)`.
    pub fn round_sphere_polar(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < PI / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "pole guard {epsilon} outside (0, π/2)"
            )));
        }
        let guard = Arc::new(move |x: &Vector| x[0] > epsilon && x[0] < PI - epsilon);
        let chart = ChartSpec::with_reference(2, guard, Vector::from_vec(vec![PI / 2.0, 0.0]))?
            .with_sample_box(vec![(PI / 4.0, 3.0 * PI / 4.0), (0.0, 2.0 * PI)])?;
        Manifold::new(chart, analytic(PolarSphereMetric))
    }
}
