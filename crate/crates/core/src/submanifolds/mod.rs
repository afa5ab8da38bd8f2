//! Parametrized submanifolds, classical and dynamical second fundamental
//! forms, and the invariance probes built on them.

mod probe;

#[cfg(test)]
mod tests;

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Christoffel, Manifold};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::MagneticSystem;

pub use probe::{
    alpha_defect, augmented_exp, candidate_hypersurface, candidate_submanifold, cartan_probe,
    dynamic_consistency_check, invariance_defect, AlphaConfig, CartanConfig, CartanPlane,
    CartanReport, DefectReport, RadiusDefect, VERDICT_CONSISTENT, VERDICT_CONTRADICTION,
};

type MapFn = dyn Fn(&Vector) -> Result<Vector> + Send + Sync;
type JacobianFn = dyn Fn(&Vector) -> Result<Matrix> + Send + Sync;
type HessianFn = dyn Fn(&Vector) -> Result<Vec<Vec<Vector>>> + Send + Sync;
type ParamGuard = dyn Fn(&Vector) -> bool + Send + Sync;

/// Region of parameter space from which probes draw sample parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleRegion {
    Box(Vec<(f64, f64)>),
    /// `inner ≤ |a| ≤ outer` (Euclidean norm of the parameter).
    Shell {
        inner: f64,
        outer: f64,
    },
}

/// An immersion `f: U ⊂ R^k → chart ⊂ R^n`.
#[derive(Clone)]
pub struct ParamSubmanifold {
    k: usize,
    n: usize,
    map: Arc<MapFn>,
    jacobian: Option<Arc<JacobianFn>>,
    hessian: Option<Arc<HessianFn>>,
    guard: Arc<ParamGuard>,
    region: SampleRegion,
    nodes: Vec<Vector>,
    fd_steps: (f64, f64),
}

impl fmt::Debug for ParamSubmanifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSubmanifold")
            .field("k", &self.k)
            .field("n", &self.n)
            .field("region", &self.region)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl ParamSubmanifold {
    /// Immersion given by `map` alone; derivatives default to central differences.
    pub fn new(
        k: usize,
        n: usize,
        map: impl Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
        region: SampleRegion,
    ) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::BadDimension(format!(
                "submanifold dimension {k} must satisfy 0 < k < {n}"
            )));
        }
        let nodes = grid_nodes(k, &region, default_per_axis(k));
        Ok(ParamSubmanifold {
            k,
            n,
            map: Arc::new(map),
            jacobian: None,
            hessian: None,
            guard: Arc::new(|_| true),
            region,
            nodes,
            fd_steps: (1e-6, 1e-4),
        })
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&Vector) -> Result<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// `hess(a)[i][j] = ∂_i ∂_j f(a)`.
    pub fn with_hessian(
        mut self,
        hess: impl Fn(&Vector) -> Result<Vec<Vec<Vector>>> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hess));
        self
    }

    pub fn with_guard(mut self, guard: impl Fn(&Vector) -> bool + Send + Sync + 'static) -> Self {
        self.guard = Arc::new(guard);
        self.nodes.retain(|a| (self.guard)(a));
        self
    }

    /// Replaces the projection seed grid with `per_axis` nodes per parameter axis.
    pub fn with_grid(mut self, per_axis: usize) -> Self {
        self.nodes = grid_nodes(self.k, &self.region, per_axis.max(2));
        self.nodes.retain(|a| (self.guard)(a));
        self
    }

    /// Central-difference steps for the first and second derivatives.
    pub fn with_fd_steps(mut self, h1: f64, h2: f64) -> Self {
        self.fd_steps = (h1, h2);
        self
    }

    /// The affine submanifold `a ↦ origin + Σ a_i basis_i`.
    pub fn affine(origin: Vector, basis: Vec<Vector>, region: SampleRegion) -> Result<Self> {
        let n = origin.len();
        let k = basis.len();
        let b = linalg::columns(&basis);
        let b2 = b.clone();
        Ok(Self::new(k, n, move |a| Ok(&origin + &b * a), region)?
            .with_jacobian(move |_| Ok(b2.clone()))
            .with_hessian(move |_| Ok(vec![vec![Vector::zeros(n); k]; k])))
    }

    /// Round sphere of `radius` about `center` in `R³`, in polar angles
    /// `(θ, φ)` with `margin < θ < π − margin`.
    pub fn sphere(center: Vector, radius: f64, margin: f64) -> Result<Self> {
        if center.len() != 3 {
            return Err(Error::BadDimension(
                "sphere parametrization needs a 3-dimensional chart".into(),
            ));
        }
        let c = center.clone();
        let pi = std::f64::consts::PI;
        let region = SampleRegion::Box(vec![
            (margin.max(0.3), pi - margin.max(0.3)),
            (0.0, 2.0 * pi),
        ]);
        let point = move |a: &Vector| {
            let (st, ct, sp, cp) = (a[0].sin(), a[0].cos(), a[1].sin(), a[1].cos());
            Vector::from_vec(vec![st * cp, st * sp, ct]) * radius
        };
        Ok(Self::new(2, 3, move |a| Ok(&c + point(a)), region)?
            .with_jacobian(move |a| {
                let (st, ct, sp, cp) = (a[0].sin(), a[0].cos(), a[1].sin(), a[1].cos());
                Ok(
                    Matrix::from_row_slice(3, 2, &[ct * cp, -st * sp, ct * sp, st * cp, -st, 0.0])
                        * radius,
                )
            })
            .with_hessian(move |a| {
                let (st, ct, sp, cp) = (a[0].sin(), a[0].cos(), a[1].sin(), a[1].cos());
                let tt = Vector::from_vec(vec![-st * cp, -st * sp, -ct]) * radius;
                let tp = Vector::from_vec(vec![-ct * sp, ct * cp, 0.0]) * radius;
                let pp = Vector::from_vec(vec![-st * cp, -st * sp, 0.0]) * radius;
                Ok(vec![vec![tt, tp.clone()], vec![tp, pp]])
            })
            .with_guard(move |a| a[0] > margin && a[0] < pi - margin))
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn region(&self) -> &SampleRegion {
        &self.region
    }

    pub fn nodes(&self) -> &[Vector] {
        &self.nodes
    }

    pub fn contains(&self, a: &Vector) -> bool {
        a.len() == self.k && (self.guard)(a)
    }

    fn check(&self, a: &Vector) -> Result<()> {
        if a.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: a.len(),
            });
        }
        if !(self.guard)(a) {
            return Err(Error::DomainViolation {
                point: a.as_slice().to_vec(),
            });
        }
        Ok(())
    }

    pub fn point(&self, a: &Vector) -> Result<Vector> {
        self.check(a)?;
        (self.map)(a)
    }

    /// `n × k` matrix `∂f/∂a`.
    pub fn jacobian(&self, a: &Vector) -> Result<Matrix> {
        self.check(a)?;
        if let Some(j) = &self.jacobian {
            return j(a);
        }
        let h = self.fd_steps.0;
        let mut out = Matrix::zeros(self.n, self.k);
        for i in 0..self.k {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[i] += h;
            am[i] -= h;
            out.set_column(i, &(((self.map)(&ap)? - (self.map)(&am)?) / (2.0 * h)));
        }
        Ok(out)
    }

    /// `∂_i ∂_j f`, indexed `[i][j]`.
    pub fn hessian(&self, a: &Vector) -> Result<Vec<Vec<Vector>>> {
        self.check(a)?;
        if let Some(hess) = &self.hessian {
            return hess(a);
        }
        let h = self.fd_steps.1;
        let k = self.k;
        let mut out = vec![vec![Vector::zeros(self.n); k]; k];
        if let Some(jac) = &self.jacobian {
            for i in 0..k {
                let (mut ap, mut am) = (a.clone(), a.clone());
                ap[i] += h;
                am[i] -= h;
                let d = (jac(&ap)? - jac(&am)?) / (2.0 * h);
                for j in 0..k {
                    out[i][j] = d.column(j).into_owned();
                }
            }
            // Symmetrize the mixed partials.
            for i in 0..k {
                for j in (i + 1)..k {
                    let m = (&out[i][j] + &out[j][i]) * 0.5;
                    out[i][j] = m.clone();
                    out[j][i] = m;
                }
            }
            return Ok(out);
        }
        let f0 = (self.map)(a)?;
        let shifted = |i: usize, di: f64, j: usize, dj: f64| {
            let mut b = a.clone();
            b[i] += di;
            b[j] += dj;
            (self.map)(&b)
        };
        for i in 0..k {
            out[i][i] = (shifted(i, h, i, 0.0)? - &f0 * 2.0 + shifted(i, -h, i, 0.0)?) / (h * h);
            for j in (i + 1)..k {
                let m = (shifted(i, h, j, h)? - shifted(i, h, j, -h)? - shifted(i, -h, j, h)?
                    + shifted(i, -h, j, -h)?)
                    / (4.0 * h * h);
                out[i][j] = m.clone();
                out[j][i] = m;
            }
        }
        Ok(out)
    }

    /// Draws a parameter from the sample region that passes the guard.
    pub fn sample_parameter<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        loop {
            let a = match &self.region {
                SampleRegion::Box(b) => Vector::from_fn(self.k, |i, _| {
                    let (lo, hi) = b[i];
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                }),
                SampleRegion::Shell { inner, outer } => {
                    let dir = crate::sampling::gaussian_vector(rng, self.k);
                    let norm = dir.norm();
                    if norm == 0.0 {
                        continue;
                    }
                    let r = rng.random_range(*inner..=*outer);
                    dir * (r / norm)
                }
            };
            if (self.guard)(&a) {
                return a;
            }
        }
    }

    /// Local data at parameter `a` for second-fundamental-form evaluations.
    pub fn local(&self, manifold: &Manifold, a: &Vector) -> Result<LocalImmersion> {
        if manifold.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: manifold.dim(),
                got: self.n,
            });
        }
        let f = self.point(a)?;
        let df = self.jacobian(a)?;
        let geo = manifold.point(&f, false)?;
        let l = linalg::cholesky_lower(&geo.g)?;
        let sigma_min = linalg::sigma_min(&(l.transpose() * &df));
        if !(sigma_min > 1e-8) {
            return Err(Error::RankDeficient { sigma_min });
        }
        let gram = df.transpose() * &geo.g * &df;
        let gram_inv = gram
            .try_inverse()
            .ok_or(Error::Singular("tangent Gram matrix"))?;
        Ok(LocalImmersion {
            a: a.clone(),
            f,
            df,
            hessian: None,
            g: geo.g,
            gamma: geo.gamma,
            gram_inv,
        })
    }

    /// Projects `y` onto the image by damped Gauss–Newton in the metric `g`
    /// (fixed at `y`), seeded by the nearest of `hint` and the stored nodes.
    ///
    /// Returns the parameter and the distance `‖f(a) − y‖_g`.
    pub fn project(&self, g: &Matrix, y: &Vector, hint: Option<&Vector>) -> Result<(Vector, f64)> {
        let objective = |a: &Vector| -> Option<f64> {
            if !self.contains(a) {
                return None;
            }
            let r = (self.map)(a).ok()? - y;
            Some(linalg::inner(g, &r, &r))
        };
        let mut best: Option<(Vector, f64)> = None;
        for cand in hint.into_iter().chain(self.nodes.iter()) {
            if let Some(val) = objective(cand) {
                if best.as_ref().is_none_or(|(_, b)| val < *b) {
                    best = Some((cand.clone(), val));
                }
            }
        }
        let (mut a, mut val) = best.ok_or(Error::ProjectionFailure { iterations: 0 })?;
        const MAX_ITER: usize = 50;
        for _ in 0..MAX_ITER {
            let r = (self.map)(&a)? - y;
            let j = self.jacobian(&a)?;
            let jtg = j.transpose() * g;
            let grad = &jtg * &r;
            let normal = &jtg * &j;
            let step = match normal.clone().cholesky() {
                Some(c) => c.solve(&grad),
                None => return Err(Error::ProjectionFailure { iterations: 0 }),
            };
            if step.amax() < 1e-14 * (1.0 + a.amax()) {
                return Ok((a, val.max(0.0).sqrt()));
            }
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial = &a - &step * lambda;
                if let Some(tv) = objective(&trial) {
                    if tv < val || (tv == val && lambda == 1.0) {
                        a = trial;
                        let converged = val - tv <= 1e-15 * val.max(1e-300) || tv == 0.0;
                        val = tv;
                        improved = true;
                        if converged {
                            return Ok((a, val.max(0.0).sqrt()));
                        }
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                // No descent along the Gauss–Newton direction: a numerical minimum.
                return Ok((a, val.max(0.0).sqrt()));
            }
        }
        Err(Error::ProjectionFailure {
            iterations: MAX_ITER,
        })
    }
}

pub fn default_per_axis(k: usize) -> usize {
    match k {
        1 => 33,
        2 => 13,
        3 => 7,
        _ => 3,
    }
}

fn grid_nodes(k: usize, region: &SampleRegion, per_axis: usize) -> Vec<Vector> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = match region {
        SampleRegion::Box(b) => b.iter().cloned().unzip(),
        SampleRegion::Shell { outer, .. } => (vec![-outer; k], vec![*outer; k]),
    };
    let total = per_axis.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            Vector::from_fn(k, |i, _| {
                let j = idx % per_axis;
                idx /= per_axis;
                lo[i] + (hi[i] - lo[i]) * j as f64 / (per_axis - 1) as f64
            })
        })
        .filter(|a| match region {
            SampleRegion::Shell { outer, .. } => a.norm() <= *outer,
            SampleRegion::Box(_) => true,
        })
        .collect()
}

/// First- and second-order data of an immersion at one parameter.
#[derive(Debug, Clone)]
pub struct LocalImmersion {
    pub a: Vector,
    pub f: Vector,
    pub df: Matrix,
    hessian: Option<Vec<Vec<Vector>>>,
    pub g: Matrix,
    pub gamma: Christoffel,
    gram_inv: Matrix,
}

impl LocalImmersion {
    pub fn with_hessian(mut self, n_sub: &ParamSubmanifold) -> Result<Self> {
        self.hessian = Some(n_sub.hessian(&self.a)?);
        Ok(self)
    }

    /// Parameter-space coordinates `c` with `Df c` the tangential part of `u`.
    pub fn tangent_coords(&self, u: &Vector) -> Vector {
        &self.gram_inv * (self.df.transpose() * (&self.g * u))
    }

    pub fn tangential(&self, u: &Vector) -> Vector {
        &self.df * self.tangent_coords(u)
    }

    pub fn normal(&self, u: &Vector) -> Vector {
        u - self.tangential(u)
    }

    /// `Err(NotTangent)` unless `‖u^⊥‖_g ≤ 1e-8 · max(1, ‖u‖_g)`.
    pub fn require_tangent(&self, u: &Vector) -> Result<Vector> {
        let residual = linalg::norm(&self.g, &self.normal(u));
        if residual > 1e-8 * linalg::norm(&self.g, u).max(1.0) {
            return Err(Error::NotTangent { residual });
        }
        Ok(self.tangent_coords(u))
    }

    /// g-orthonormal basis of the tangent space.
    pub fn tangent_frame(&self) -> Vec<Vector> {
        let cols: Vec<Vector> = (0..self.df.ncols())
            .map(|i| self.df.column(i).into_owned())
            .collect();
        linalg::gram_schmidt(&self.g, &cols, 1e-12, cols.len())
    }

    /// `II(u, w) = (∂²f(c_u, c_w) + Γ(u, w))^⊥` for tangent `u, w`.
    pub fn second_fundamental_form(&self, u: &Vector, w: &Vector) -> Result<Vector> {
        let hess = self
            .hessian
            .as_ref()
            .expect("local immersion without second derivatives");
        let cu = self.require_tangent(u)?;
        let cw = self.require_tangent(w)?;
        let mut acc = self.gamma.contract(u, w);
        for (i, row) in hess.iter().enumerate() {
            for (j, h) in row.iter().enumerate() {
                acc.axpy(cu[i] * cw[j], h, 1.0);
            }
        }
        Ok(self.normal(&acc))
    }
}

/// `II(u, w)` of `sub` at parameter `a`.
pub fn classical_ii(
    manifold: &Manifold,
    sub: &ParamSubmanifold,
    a: &Vector,
    u: &Vector,
    w: &Vector,
) -> Result<Vector> {
    sub.local(manifold, a)?
        .with_hessian(sub)?
        .second_fundamental_form(u, w)
}

/// The two normal components of the dynamical second fundamental form.
#[derive(Debug, Clone, PartialEq)]
pub struct DynIIValue {
    /// `II([X_H]^⊤, v) − [X_V]^⊥`.
    pub first: Vector,
    /// `[X_H]^⊥`.
    pub second: Vector,
}

impl DynIIValue {
    /// `‖first‖_g² + ‖second‖_g²`.
    pub fn norm_squared(&self, g: &Matrix) -> f64 {
        linalg::inner(g, &self.first, &self.first) + linalg::inner(g, &self.second, &self.second)
    }
}

/// `II^φ` at `(f(a), v)` for a g-unit tangent `v`.
pub fn dynamical_ii(
    sys: &MagneticSystem,
    sub: &ParamSubmanifold,
    a: &Vector,
    v: &Vector,
) -> Result<DynIIValue> {
    let local = sub.local(sys.manifold(), a)?.with_hessian(sub)?;
    dynamical_ii_at(sys, &local, v)
}

pub(crate) fn dynamical_ii_at(
    sys: &MagneticSystem,
    local: &LocalImmersion,
    v: &Vector,
) -> Result<DynIIValue> {
    let norm = linalg::norm(&local.g, v);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnitVector { norm });
    }
    local.require_tangent(v)?;
    // X_H(x, v) = v for semi-spray flows.
    let xh_t = local.tangential(v);
    let xh_n = v - &xh_t;
    let xv = sys.vertical_at(&local.f, v)?;
    let first = local.second_fundamental_form(&xh_t, v)? - local.normal(&xv);
    Ok(DynIIValue {
        first,
        second: local.normal(&xh_n),
    })
}

/// An oriented hyperplane `ν^⊥ ⊂ T_xM` with g-unit normal `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneElement {
    pub x: Vector,
    pub normal: Vector,
}

impl HyperplaneElement {
    /// Checks `g(ν, ν) = 1` to `1e-12`.
    pub fn new(manifold: &Manifold, x: Vector, normal: Vector) -> Result<Self> {
        let norm = manifold.norm(&x, &normal)?;
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitVector { norm });
        }
        Ok(HyperplaneElement { x, normal })
    }

    /// Normalizes `normal` in the metric at `x`.
    pub fn from_normal(manifold: &Manifold, x: Vector, normal: Vector) -> Result<Self> {
        let norm = manifold.norm(&x, &normal)?;
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(HyperplaneElement {
            x,
            normal: normal / norm,
        })
    }

    /// g-orthonormal basis of `ν^⊥`, completed from the standard basis.
    pub fn basis(&self, manifold: &Manifold) -> Result<Vec<Vector>> {
        let frame = manifold.orthonormal_completion(&self.x, &self.normal)?;
        Ok(frame[1..].to_vec())
    }
}
