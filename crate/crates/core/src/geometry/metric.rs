use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::chart::ChartSpec;
use crate::geometry::field::{DerivativeScheme, MatrixField, SchemedField};
use crate::geometry::tensors::{Christoffel, ChristoffelGradient, CurvatureTensor};
use crate::linalg::{self, Matrix, Vector};

/// Riemannian metric coefficients `g_ij(x)` with a derivative scheme.
#[derive(Clone)]
pub struct MetricField {
    field: SchemedField,
}

impl MetricField {
    pub fn new(field: Arc<dyn MatrixField>, scheme: DerivativeScheme) -> Self {
        MetricField {
            field: SchemedField::new(field, scheme, "metric"),
        }
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.field.scheme()
    }

    pub fn with_scheme(&self, scheme: DerivativeScheme) -> Self {
        MetricField {
            field: self.field.with_scheme(scheme),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MetricField {
            field: self.field.scaled(factor),
        }
    }

    pub fn schemed(&self) -> &SchemedField {
        &self.field
    }

    pub fn value(&self, x: &Vector) -> Matrix {
        self.field.value(x)
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vec<Matrix>> {
        self.field.gradient(x)
    }

    pub fn hessian(&self, x: &Vector) -> Result<Vec<Vec<Matrix>>> {
        self.field.hessian(x)
    }
}

/// Everything a flow step needs from the metric at one point.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub g: Matrix,
    pub ginv: Matrix,
    pub dg: Vec<Matrix>,
    pub gamma: Christoffel,
    pub dgamma: Option<ChristoffelGradient>,
}

/// Decomposition of a vector in `T_{(x,v)}TM` via the Levi-Civita connector.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSplit {
    /// `dπ(ξ)`.
    pub horizontal: Vector,
    /// `K(ξ) = ξ_v + Γ(ξ_x, v)`.
    pub vertical: Vector,
}

/// A chart together with a metric on it.
#[derive(Clone)]
pub struct Manifold {
    chart: ChartSpec,
    metric: MetricField,
}

impl Manifold {
    pub fn new(chart: ChartSpec, metric: MetricField) -> Result<Self> {
        if chart.dim() != metric.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: metric.dim(),
            });
        }
        Ok(Manifold { chart, metric })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn with_scheme(&self, scheme: DerivativeScheme) -> Self {
        Manifold {
            chart: self.chart.clone(),
            metric: self.metric.with_scheme(scheme),
        }
    }

    /// The same chart with metric `c * g`.
    pub fn scaled(&self, factor: f64) -> Self {
        Manifold {
            chart: self.chart.clone(),
            metric: self.metric.scaled(factor),
        }
    }

    /// `g_ij(x)`, symmetrized.
    pub fn metric_eval(&self, x: &Vector) -> Result<Matrix> {
        self.chart.check(x)?;
        let g = self.metric.value(x);
        if g.nrows() != self.dim() || g.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: g.nrows(),
            });
        }
        Ok((&g + g.transpose()) * 0.5)
    }

    /// Positive-definiteness check; returns the smallest eigenvalue.
    pub fn smallest_eigenvalue(&self, x: &Vector) -> Result<f64> {
        let g = self.metric_eval(x)?;
        let ev = g.symmetric_eigenvalues();
        Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    pub fn inner(&self, x: &Vector, a: &Vector, b: &Vector) -> Result<f64> {
        Ok(linalg::inner(&self.metric_eval(x)?, a, b))
    }

    pub fn norm(&self, x: &Vector, a: &Vector) -> Result<f64> {
        Ok(linalg::norm(&self.metric_eval(x)?, a))
    }

    pub fn point(&self, x: &Vector, second_order: bool) -> Result<PointGeometry> {
        let g = self.metric_eval(x)?;
        let ginv = linalg::spd_inverse(&g)?;
        let dg = self.metric.gradient(x)?;
        let gamma = Christoffel::from_metric(&ginv, &dg);
        let dgamma = if second_order {
            let ddg = self.metric.hessian(x)?;
            Some(ChristoffelGradient::from_metric(&ginv, &dg, &ddg, &gamma))
        } else {
            None
        };
        Ok(PointGeometry {
            g,
            ginv,
            dg,
            gamma,
            dgamma,
        })
    }

    pub fn christoffel(&self, x: &Vector) -> Result<Christoffel> {
        Ok(self.point(x, false)?.gamma)
    }

    pub fn christoffel_gradient(&self, x: &Vector) -> Result<ChristoffelGradient> {
        let p = self.point(x, true)?;
        Ok(p.dgamma.expect("second-order point geometry"))
    }

    pub fn riemann(&self, x: &Vector) -> Result<CurvatureTensor> {
        let p = self.point(x, true)?;
        let dgamma = p.dgamma.as_ref().expect("second-order point geometry");
        Ok(CurvatureTensor::from_christoffel(&p.g, &p.gamma, dgamma))
    }

    /// Sectional curvature of `span{v, w}` at `x`.
    pub fn sectional(&self, x: &Vector, v: &Vector, w: &Vector) -> Result<f64> {
        let g = self.metric_eval(x)?;
        let (vn, wn) = (linalg::norm(&g, v), linalg::norm(&g, w));
        if vn == 0.0 || wn == 0.0 {
            return Err(Error::DegeneratePlane { gram: 0.0 });
        }
        let (v, w) = (v / vn, w / wn);
        let c = linalg::inner(&g, &v, &w);
        let gram = 1.0 - c * c;
        if gram < 1e-12 {
            return Err(Error::DegeneratePlane { gram });
        }
        let r = self.riemann(x)?;
        Ok(r.lowered(&w, &v, &w, &v) / gram)
    }

    /// `(P_v w, P_{v⊥} w)`.
    pub fn project(&self, x: &Vector, v: &Vector, w: &Vector) -> Result<(Vector, Vector)> {
        let g = self.metric_eval(x)?;
        project_with(&g, v, w)
    }

    /// `K(ξ)` and `dπ(ξ)` for `ξ = (ξ_x, ξ_v)` at `(x, v)`.
    pub fn connector_split(&self, x: &Vector, v: &Vector, xi: &Vector) -> Result<TangentSplit> {
        let n = self.dim();
        if xi.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: xi.len(),
            });
        }
        let gamma = self.christoffel(x)?;
        let horizontal = xi.rows(0, n).into_owned();
        let vertical = xi.rows(n, n) + gamma.contract(&horizontal, v);
        Ok(TangentSplit {
            horizontal,
            vertical,
        })
    }

    /// Inverse of [`Manifold::connector_split`].
    pub fn connector_reconstruct(
        &self,
        x: &Vector,
        v: &Vector,
        split: &TangentSplit,
    ) -> Result<Vector> {
        let n = self.dim();
        let gamma = self.christoffel(x)?;
        let vert = &split.vertical - gamma.contract(&split.horizontal, v);
        let mut xi = Vector::zeros(2 * n);
        xi.rows_mut(0, n).copy_from(&split.horizontal);
        xi.rows_mut(n, n).copy_from(&vert);
        Ok(xi)
    }

    /// g-orthonormal frame `(v/|v|, v₂, …, v_n)`.
    ///
    /// Gram–Schmidt seeded by `v` and then `e₁, …, e_n` in order; seeds whose
    /// residual is below `1e-8` of their norm are skipped.
    pub fn orthonormal_completion(&self, x: &Vector, v: &Vector) -> Result<Vec<Vector>> {
        let g = self.metric_eval(x)?;
        orthonormal_completion_with(&g, v)
    }
}

pub(crate) fn project_with(g: &Matrix, v: &Vector, w: &Vector) -> Result<(Vector, Vector)> {
    let vv = linalg::inner(g, v, v);
    if vv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let tangential = v * (linalg::inner(g, v, w) / vv);
    let normal = w - &tangential;
    Ok((tangential, normal))
}

pub(crate) fn orthonormal_completion_with(g: &Matrix, v: &Vector) -> Result<Vec<Vector>> {
    let n = v.len();
    if linalg::norm(g, v) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut seeds = Vec::with_capacity(n + 1);
    seeds.push(v.clone());
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        seeds.push(e);
    }
    let frame = linalg::gram_schmidt(g, &seeds, 1e-8, n);
    if frame.len() != n {
        return Err(Error::Singular("orthonormal completion failed"));
    }
    Ok(frame)
}
