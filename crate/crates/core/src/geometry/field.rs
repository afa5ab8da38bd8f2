//! Matrix-valued coefficient fields (metrics, 2-forms) and their derivative schemes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// A smooth map from chart coordinates to `n x n` coefficient arrays.
///
/// Analytic derivatives are optional; a [`SchemedField`] decides whether to
/// use them or fall back to central differences.
pub trait MatrixField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> Matrix;

    /// `∂_k F(x)` for `k = 0..n`.
    fn gradient(&self, _x: &Vector) -> Option<Vec<Matrix>> {
        None
    }

    /// `∂_k ∂_l F(x)` indexed `[k][l]`.
    fn hessian(&self, _x: &Vector) -> Option<Vec<Vec<Matrix>>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeScheme {
    /// Use the field's analytic closures.
    Analytic,
    /// Central differences with step `h1` for first and `h2` for second derivatives.
    FiniteDifference { h1: f64, h2: f64 },
}

impl DerivativeScheme {
    pub const fn central() -> Self {
        DerivativeScheme::FiniteDifference { h1: 1e-5, h2: 1e-4 }
    }
}

type ValueFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync;
type HessFn = dyn Fn(&Vector) -> Vec<Vec<Matrix>> + Send + Sync;

/// A field assembled from closures.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
    hessian: Option<Arc<HessFn>>,
}

impl FnField {
    pub fn new(dim: usize, value: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        FnField {
            dim,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&Vector) -> Vec<Vec<Matrix>> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }
}

impl MatrixField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> Matrix {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vector) -> Option<Vec<Matrix>> {
        self.gradient.as_ref().map(|f| f(x))
    }
    fn hessian(&self, x: &Vector) -> Option<Vec<Vec<Matrix>>> {
        self.hessian.as_ref().map(|f| f(x))
    }
}

/// A constant multiple `c * F` of another field.
pub struct ScaledField {
    inner: Arc<dyn MatrixField>,
    factor: f64,
}

impl ScaledField {
    pub fn new(inner: Arc<dyn MatrixField>, factor: f64) -> Self {
        ScaledField { inner, factor }
    }
}

impl MatrixField for ScaledField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> Matrix {
        self.inner.value(x) * self.factor
    }
    fn gradient(&self, x: &Vector) -> Option<Vec<Matrix>> {
        self.inner
            .gradient(x)
            .map(|d| d.into_iter().map(|m| m * self.factor).collect())
    }
    fn hessian(&self, x: &Vector) -> Option<Vec<Vec<Matrix>>> {
        self.inner.hessian(x).map(|h| {
            h.into_iter()
                .map(|row| row.into_iter().map(|m| m * self.factor).collect())
                .collect()
        })
    }
}

pub fn fd_gradient(field: &dyn MatrixField, x: &Vector, h: f64) -> Vec<Matrix> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            (field.value(&xp) - field.value(&xm)) / (2.0 * h)
        })
        .collect()
}

pub fn fd_hessian(field: &dyn MatrixField, x: &Vector, h: f64) -> Vec<Vec<Matrix>> {
    let n = x.len();
    let f0 = field.value(x);
    let shifted = |k: usize, dk: f64, l: usize, dl: f64| {
        let mut y = x.clone();
        y[k] += dk;
        y[l] += dl;
        field.value(&y)
    };
    let mut out = vec![vec![Matrix::zeros(n, n); n]; n];
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        out[k][k] = (field.value(&xp) - &f0 * 2.0 + field.value(&xm)) / (h * h);
        for l in (k + 1)..n {
            let m = (shifted(k, h, l, h) - shifted(k, h, l, -h) - shifted(k, -h, l, h)
                + shifted(k, -h, l, -h))
                / (4.0 * h * h);
            out[k][l] = m.clone();
            out[l][k] = m;
        }
    }
    out
}

/// A field paired with the derivative scheme used to differentiate it.
#[derive(Clone)]
pub struct SchemedField {
    field: Arc<dyn MatrixField>,
    scheme: DerivativeScheme,
    name: &'static str,
}

impl SchemedField {
    pub fn new(field: Arc<dyn MatrixField>, scheme: DerivativeScheme, name: &'static str) -> Self {
        SchemedField {
            field,
            scheme,
            name,
        }
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn inner(&self) -> &Arc<dyn MatrixField> {
        &self.field
    }

    pub fn with_scheme(&self, scheme: DerivativeScheme) -> Self {
        SchemedField {
            field: self.field.clone(),
            scheme,
            name: self.name,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SchemedField {
            field: Arc::new(ScaledField::new(self.field.clone(), factor)),
            scheme: self.scheme,
            name: self.name,
        }
    }

    pub fn value(&self, x: &Vector) -> Matrix {
        self.field.value(x)
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vec<Matrix>> {
        match self.scheme {
            DerivativeScheme::Analytic => {
                self.field.gradient(x).ok_or(Error::DerivativeUnavailable {
                    field: self.name,
                    order: 1,
                })
            }
            DerivativeScheme::FiniteDifference { h1, .. } => Ok(fd_gradient(&*self.field, x, h1)),
        }
    }

    pub fn hessian(&self, x: &Vector) -> Result<Vec<Vec<Matrix>>> {
        match self.scheme {
            DerivativeScheme::Analytic => {
                self.field.hessian(x).ok_or(Error::DerivativeUnavailable {
                    field: self.name,
                    order: 2,
                })
            }
            DerivativeScheme::FiniteDifference { h2, .. } => Ok(fd_hessian(&*self.field, x, h2)),
        }
    }
}
