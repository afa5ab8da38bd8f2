//! Magnetic 2-forms, the Lorentz force operator, and magnetic systems.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    DerivativeScheme, FnField, Manifold, MatrixField, MetricField, SchemedField,
};
use crate::linalg::{self, Matrix, Vector};

/// Antisymmetric coefficient field `σ_ij(x)`.
#[derive(Clone)]
pub struct TwoFormField {
    field: SchemedField,
}

impl TwoFormField {
    pub fn new(field: Arc<dyn MatrixField>, scheme: DerivativeScheme) -> Self {
        TwoFormField {
            field: SchemedField::new(field, scheme, "2-form"),
        }
    }

    pub fn zero(dim: usize) -> Self {
        let field = FnField::new(dim, move |_| Matrix::zeros(dim, dim))
            .with_gradient(move |_| vec![Matrix::zeros(dim, dim); dim])
            .with_hessian(move |_| vec![vec![Matrix::zeros(dim, dim); dim]; dim]);
        Self::new(Arc::new(field), DerivativeScheme::Analytic)
    }

    /// `b dx^i ∧ dx^j` with constant `b`.
    pub fn constant(dim: usize, b: f64, plane: (usize, usize)) -> Result<Self> {
        let (i, j) = plane;
        if i >= dim || j >= dim || i == j {
            return Err(Error::InvalidConfig(format!(
                "invalid 2-form plane ({i}, {j}) in dimension {dim}"
            )));
        }
        let mut m = Matrix::zeros(dim, dim);
        m[(i, j)] = b;
        m[(j, i)] = -b;
        let field = FnField::new(dim, move |_| m.clone())
            .with_gradient(move |_| vec![Matrix::zeros(dim, dim); dim])
            .with_hessian(move |_| vec![vec![Matrix::zeros(dim, dim); dim]; dim]);
        Ok(Self::new(Arc::new(field), DerivativeScheme::Analytic))
    }

    /// `b · dA` where `dA = √det g dx¹∧dx²` is the Riemannian area form of a surface.
    pub fn area_form(manifold: &Manifold, b: f64) -> Result<Self> {
        if manifold.dim() != 2 {
            return Err(Error::BadDimension(format!(
                "area form needs a surface, got dimension {}",
                manifold.dim()
            )));
        }
        let scheme = manifold.metric().scheme();
        let field = AreaForm {
            metric: manifold.metric().clone(),
            scale: b,
        };
        Ok(Self::new(Arc::new(field), scheme))
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TwoFormField {
            field: self.field.scaled(factor),
        }
    }

    pub fn with_scheme(&self, scheme: DerivativeScheme) -> Self {
        TwoFormField {
            field: self.field.with_scheme(scheme),
        }
    }

    /// `σ(x)`, antisymmetrized.
    pub fn value(&self, x: &Vector) -> Matrix {
        let s = self.field.value(x);
        (&s - s.transpose()) * 0.5
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vec<Matrix>> {
        Ok(self
            .field
            .gradient(x)?
            .into_iter()
            .map(|d| (&d - d.transpose()) * 0.5)
            .collect())
    }
}

struct AreaForm {
    metric: MetricField,
    scale: f64,
}

impl AreaForm {
    fn unit(&self, x: &Vector) -> (Matrix, f64) {
        let g = self.metric.value(x);
        (g.clone(), self.scale * g.determinant().max(0.0).sqrt())
    }
}

impl MatrixField for AreaForm {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> Matrix {
        let (_, a) = self.unit(x);
        Matrix::from_row_slice(2, 2, &[0.0, a, -a, 0.0])
    }

    fn gradient(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let (g, a) = self.unit(x);
        let ginv = linalg::spd_inverse(&g).ok()?;
        let dg = self.metric.gradient(x).ok()?;
        // ∂_k √det g = ½ √det g · tr(g⁻¹ ∂_k g)
        Some(
            dg.iter()
                .map(|d| {
                    let da = 0.5 * a * (&ginv * d).trace();
                    Matrix::from_row_slice(2, 2, &[0.0, da, -da, 0.0])
                })
                .collect(),
        )
    }
}

/// `Y^i_j(x)`, defined by `g(Yv, w) = σ(v, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzOperator {
    pub matrix: Matrix,
}

impl LorentzOperator {
    pub fn apply(&self, v: &Vector) -> Vector {
        &self.matrix * v
    }

    /// `|g(Yv, w) + g(v, Yw)|`.
    pub fn skew_residual(&self, g: &Matrix, v: &Vector, w: &Vector) -> f64 {
        (linalg::inner(g, &self.apply(v), w) + linalg::inner(g, v, &self.apply(w))).abs()
    }
}

pub type VerticalFn = dyn Fn(&Vector, &Vector) -> Vector + Send + Sync;

/// Vertical component `X_V(x, v)` of a semi-spray generator.
#[derive(Clone)]
pub enum VerticalField {
    /// `X_V(x, v) = Y_x(v)`.
    Lorentz,
    Custom(Arc<VerticalFn>),
}

/// An isometry of the chart that also preserves the vertical field, used to
/// pull long orbits back toward the chart reference point.
pub trait ChartSymmetry: Send + Sync {
    /// Returns `(Φ(x), dΦ_x)` when `x` should be recentred.
    fn recenter(&self, x: &Vector) -> Option<(Vector, Matrix)>;
}

/// Möbius isometry of the Poincaré ball sending `a` to the origin,
/// applied once `|a|` exceeds `threshold`. Its differential at `a` is
/// `I / (1 − |a|²)`.
#[derive(Debug, Clone, Copy)]
pub struct MobiusRecentering {
    pub threshold: f64,
}

impl ChartSymmetry for MobiusRecentering {
    fn recenter(&self, x: &Vector) -> Option<(Vector, Matrix)> {
        let r2 = x.norm_squared();
        if r2.sqrt() <= self.threshold {
            return None;
        }
        let n = x.len();
        Some((Vector::zeros(n), Matrix::identity(n, n) / (1.0 - r2)))
    }
}

/// A metric, a 2-form and the vertical field of the associated semi-spray flow.
#[derive(Clone)]
pub struct MagneticSystem {
    manifold: Manifold,
    sigma: TwoFormField,
    vertical: VerticalField,
    symmetry: Option<Arc<dyn ChartSymmetry>>,
}

impl MagneticSystem {
    pub fn new(manifold: Manifold, sigma: TwoFormField) -> Result<Self> {
        if manifold.dim() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: manifold.dim(),
                got: sigma.dim(),
            });
        }
        Ok(MagneticSystem {
            manifold,
            sigma,
            vertical: VerticalField::Lorentz,
            symmetry: None,
        })
    }

    /// Pure geodesic flow.
    pub fn geodesic(manifold: Manifold) -> Self {
        let sigma = TwoFormField::zero(manifold.dim());
        MagneticSystem {
            manifold,
            sigma,
            vertical: VerticalField::Lorentz,
            symmetry: None,
        }
    }

    /// Replaces `X_V` by a user field. Drops any registered chart symmetry.
    pub fn with_vertical(
        mut self,
        field: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.vertical = VerticalField::Custom(Arc::new(field));
        self.symmetry = None;
        self
    }

    pub fn with_symmetry(mut self, symmetry: Arc<dyn ChartSymmetry>) -> Self {
        self.symmetry = Some(symmetry);
        self
    }

    pub fn with_scheme(&self, scheme: DerivativeScheme) -> Self {
        MagneticSystem {
            manifold: self.manifold.with_scheme(scheme),
            sigma: self.sigma.with_scheme(scheme),
            vertical: self.vertical.clone(),
            symmetry: self.symmetry.clone(),
        }
    }

    /// Rejects the system if the closedness residual exceeds `1e-8` at any of
    /// `samples` points drawn from the chart sample box.
    pub fn strict(self, samples: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = vec![self.manifold.chart().reference().clone()];
        points.extend((0..samples).map(|_| self.manifold.chart().sample_point(&mut rng)));
        for x in &points {
            let residual = self.closedness_residual(x)?;
            if residual > 1e-8 {
                return Err(Error::NotClosed { residual });
            }
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn sigma(&self) -> &TwoFormField {
        &self.sigma
    }

    pub fn vertical(&self) -> &VerticalField {
        &self.vertical
    }

    pub fn symmetry(&self) -> Option<&Arc<dyn ChartSymmetry>> {
        self.symmetry.as_ref()
    }

    pub fn is_magnetic(&self) -> bool {
        matches!(self.vertical, VerticalField::Lorentz)
    }

    /// `Y = −g⁻¹σ`, the solution of `g(Yv, w) = σ(v, w)`.
    pub fn lorentz(&self, x: &Vector) -> Result<LorentzOperator> {
        let g = self.manifold.metric_eval(x)?;
        let ginv = linalg::spd_inverse(&g)?;
        Ok(lorentz_with(&ginv, &self.sigma.value(x)))
    }

    /// `∂_k Y = −g⁻¹(∂_k g) Y − g⁻¹ ∂_k σ` for every `k`.
    pub fn lorentz_gradient(&self, x: &Vector) -> Result<Vec<Matrix>> {
        let p = self.manifold.point(x, false)?;
        let y = lorentz_with(&p.ginv, &self.sigma.value(x)).matrix;
        lorentz_gradient_with(&p.ginv, &p.dg, &y, &self.sigma.gradient(x)?)
    }

    /// `(∇_w Y)_x = ∂_w Y + [Γ(w, ·), Y]`.
    pub fn nabla_lorentz(&self, x: &Vector, w: &Vector) -> Result<Matrix> {
        let p = self.manifold.point(x, false)?;
        let y = lorentz_with(&p.ginv, &self.sigma.value(x)).matrix;
        let dy = lorentz_gradient_with(&p.ginv, &p.dg, &y, &self.sigma.gradient(x)?)?;
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for (k, dyk) in dy.iter().enumerate() {
            if w[k] != 0.0 {
                out += dyk * w[k];
            }
        }
        let gw = p.gamma.along(w);
        out += &gw * &y - &y * &gw;
        Ok(out)
    }

    /// `max |∂_i σ_jk + ∂_j σ_ki + ∂_k σ_ij|` over `i < j < k`.
    pub fn closedness_residual(&self, x: &Vector) -> Result<f64> {
        let n = self.dim();
        if n < 3 {
            return Ok(0.0);
        }
        let d = self.sigma.gradient(x)?;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let r = d[i][(j, k)] + d[j][(k, i)] + d[k][(i, j)];
                    worst = worst.max(r.abs());
                }
            }
        }
        Ok(worst)
    }

    /// `(s⁻²g, s⁻²σ)`, whose unit-speed flow is the speed-`s` flow of `self`.
    pub fn rescale(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonpositiveSpeed(s));
        }
        if s == 1.0 {
            return Ok(self.clone());
        }
        let factor = 1.0 / (s * s);
        Ok(MagneticSystem {
            manifold: self.manifold.scaled(factor),
            sigma: self.sigma.scaled(factor),
            vertical: self.vertical.clone(),
            symmetry: self.symmetry.clone(),
        })
    }

    /// `X_V(x, v)`.
    pub fn vertical_at(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        match &self.vertical {
            VerticalField::Lorentz => Ok(self.lorentz(x)?.apply(v)),
            VerticalField::Custom(f) => Ok(f(x, v)),
        }
    }

    /// `(X_H(x,−v) + X_H(x,v), X_V(x,−v) + X_V(x,v))` measured in the g-norm.
    pub fn oddness_residual(&self, x: &Vector, v: &Vector) -> Result<(f64, f64)> {
        let g = self.manifold.metric_eval(x)?;
        let neg = -v;
        // X_H(x, v) = v for every semi-spray field.
        let horizontal = linalg::norm(&g, &(&neg + v));
        let vertical = linalg::norm(&g, &(self.vertical_at(x, &neg)? + self.vertical_at(x, v)?));
        Ok((horizontal, vertical))
    }
}

pub(crate) fn lorentz_with(ginv: &Matrix, sigma: &Matrix) -> LorentzOperator {
    LorentzOperator {
        matrix: -(ginv * sigma),
    }
}

pub(crate) fn lorentz_gradient_with(
    ginv: &Matrix,
    dg: &[Matrix],
    y: &Matrix,
    dsigma: &[Matrix],
) -> Result<Vec<Matrix>> {
    Ok(dg
        .iter()
        .zip(dsigma)
        .map(|(dgk, dsk)| -(ginv * (dgk * y + dsk)))
        .collect())
}
