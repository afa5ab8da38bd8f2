//! The magnetic curvature operators `A`, `R^s`, `M = R^s + A` acting on
//! `v^⊥`, the s-magnetic sectional curvature and a sampled Anosov criterion.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::metric::{orthonormal_completion_with, project_with};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::MagneticSystem;
use crate::sampling::{gaussian_vector, stream_rng};

const UNIT_TOLERANCE: f64 = 1e-10;

/// An endomorphism of `v^⊥ ⊂ T_xM` for a g-unit `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerpEndomorphism {
    pub x: Vector,
    pub v: Vector,
    /// `orthonormal_completion(x, v)`; `frame[0] = v`.
    pub frame: Vec<Vector>,
    /// Action on `frame[1..]`: `matrix[(a, b)] = g(frame[a+1], L frame[b+1])`.
    pub matrix: Matrix,
    /// `max_b |g(L frame[b+1], v)|`.
    pub residual: f64,
}

impl PerpEndomorphism {
    fn build(
        g: &Matrix,
        x: &Vector,
        v: &Vector,
        op: impl Fn(&Vector) -> Result<Vector>,
    ) -> Result<Self> {
        let frame = orthonormal_completion_with(g, v)?;
        let m = frame.len() - 1;
        let images = frame[1..].iter().map(&op).collect::<Result<Vec<_>>>()?;
        let matrix = Matrix::from_fn(m, m, |a, b| linalg::inner(g, &frame[a + 1], &images[b]));
        let residual = images
            .iter()
            .fold(0.0_f64, |acc, w| acc.max(linalg::inner(g, w, v).abs()));
        Ok(PerpEndomorphism {
            x: x.clone(),
            v: v.clone(),
            frame,
            matrix,
            residual,
        })
    }

    /// Applies the endomorphism to `w` after projecting `w` onto `v^⊥`.
    pub fn apply(&self, g: &Matrix, w: &Vector) -> Vector {
        let coords = Vector::from_fn(self.matrix.ncols(), |b, _| {
            linalg::inner(g, &self.frame[b + 1], w)
        });
        let image = &self.matrix * coords;
        let mut out = Vector::zeros(w.len());
        for (a, c) in image.iter().enumerate() {
            out.axpy(*c, &self.frame[a + 1], 1.0);
        }
        out
    }

    /// `g(L w, w)` for a unit `w ∈ v^⊥`, read off the matrix.
    pub fn quadratic(&self, g: &Matrix, w: &Vector) -> f64 {
        let coords = Vector::from_fn(self.matrix.ncols(), |b, _| {
            linalg::inner(g, &self.frame[b + 1], w)
        });
        coords.dot(&(&self.matrix * &coords))
    }
}

fn require_unit(g: &Matrix, v: &Vector) -> Result<()> {
    let norm = linalg::norm(g, v);
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitVector { norm });
    }
    Ok(())
}

fn require_speed(s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonpositiveSpeed(s));
    }
    Ok(())
}

/// Pointwise data shared by the three operators.
struct Local {
    g: Matrix,
    y: Matrix,
}

fn local(sys: &MagneticSystem, x: &Vector, v: &Vector) -> Result<Local> {
    let g = sys.manifold().metric_eval(x)?;
    require_unit(&g, v)?;
    let y = sys.lorentz(x)?.matrix;
    Ok(Local { g, y })
}

/// `A(w) = −¾ Y(P_v(Y w)) − ¼ P_{v⊥}(Y² w)`.
fn a_action(l: &Local, v: &Vector, w: &Vector) -> Result<Vector> {
    let yw = &l.y * w;
    let (tangential, _) = project_with(&l.g, v, &yw)?;
    let (_, normal) = project_with(&l.g, v, &(&l.y * &yw))?;
    Ok(&l.y * tangential * -0.75 - normal * 0.25)
}

/// `R^s(w) = s² R(w, v)v − s (∇_w Y)(v) + (s/2) P_{v⊥}((∇_v Y)(w))`.
fn r_action(
    sys: &MagneticSystem,
    l: &Local,
    s: f64,
    x: &Vector,
    v: &Vector,
) -> Result<impl Fn(&Vector) -> Result<Vector>> {
    let riemann = sys.manifold().riemann(x)?;
    let nabla_v = sys.nabla_lorentz(x, v)?;
    let g = l.g.clone();
    let (sys, x, v) = (sys.clone(), x.clone(), v.clone());
    Ok(move |w: &Vector| -> Result<Vector> {
        let curv = riemann.apply(w, &v, &v) * (s * s);
        let nabla_w = sys.nabla_lorentz(&x, w)?;
        let (_, normal) = project_with(&g, &v, &(&nabla_v * w))?;
        Ok(curv - nabla_w * &v * s + normal * (0.5 * s))
    })
}

pub fn op_a(sys: &MagneticSystem, x: &Vector, v: &Vector) -> Result<PerpEndomorphism> {
    let l = local(sys, x, v)?;
    PerpEndomorphism::build(&l.g, x, v, |w| a_action(&l, v, w))
}

pub fn op_r(sys: &MagneticSystem, s: f64, x: &Vector, v: &Vector) -> Result<PerpEndomorphism> {
    require_speed(s)?;
    let l = local(sys, x, v)?;
    let r = r_action(sys, &l, s, x, v)?;
    PerpEndomorphism::build(&l.g, x, v, r)
}

/// `M^s = R^s + A`.
pub fn magnetic_operator(
    sys: &MagneticSystem,
    s: f64,
    x: &Vector,
    v: &Vector,
) -> Result<PerpEndomorphism> {
    require_speed(s)?;
    let l = local(sys, x, v)?;
    let r = r_action(sys, &l, s, x, v)?;
    PerpEndomorphism::build(&l.g, x, v, |w| Ok(r(w)? + a_action(&l, v, w)?))
}

/// `Sec^s(v, w) = g(M^s w, w)` for a g-orthonormal pair `(v, w)`.
pub fn magnetic_sectional(
    sys: &MagneticSystem,
    s: f64,
    x: &Vector,
    v: &Vector,
    w: &Vector,
) -> Result<f64> {
    require_speed(s)?;
    let g = sys.manifold().metric_eval(x)?;
    let residual = (linalg::inner(&g, v, v) - 1.0)
        .abs()
        .max((linalg::inner(&g, w, w) - 1.0).abs())
        .max(linalg::inner(&g, v, w).abs());
    if residual > UNIT_TOLERANCE {
        return Err(Error::NonOrthonormalFrame { residual });
    }
    let l = Local {
        y: sys.lorentz(x)?.matrix,
        g,
    };
    let r = r_action(sys, &l, s, x, v)?;
    let mw = r(w)? + a_action(&l, v, w)?;
    Ok(linalg::inner(&l.g, &mw, w))
}

/// Orthonormalizes `(v, w)` by Gram–Schmidt before evaluating
/// [`magnetic_sectional`].
pub fn magnetic_sectional_of_plane(
    sys: &MagneticSystem,
    s: f64,
    x: &Vector,
    v: &Vector,
    w: &Vector,
) -> Result<f64> {
    let g = sys.manifold().metric_eval(x)?;
    let frame = linalg::gram_schmidt(&g, &[v.clone(), w.clone()], 1e-8, 2);
    if frame.len() < 2 {
        return Err(Error::DegeneratePlane { gram: 0.0 });
    }
    magnetic_sectional(sys, s, x, &frame[0], &frame[1])
}

/// Random g-orthonormal pair at `x` from Gaussian seeds.
pub fn random_orthonormal_pair<R: rand::Rng + ?Sized>(g: &Matrix, rng: &mut R) -> (Vector, Vector) {
    let n = g.nrows();
    loop {
        let seeds = [gaussian_vector(rng, n), gaussian_vector(rng, n)];
        let frame = linalg::gram_schmidt(g, &seeds, 1e-6, 2);
        if frame.len() == 2 {
            return (frame[0].clone(), frame[1].clone());
        }
    }
}

/// Summary of `Sec^s` over sampled orthonormal frames.
///
/// The verdict is a sampling certificate only: it reports whether every
/// sampled value was negative, which is necessary for the curvature
/// criterion but proves nothing about unsampled frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnosovReport {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
    pub verdict: String,
}

pub const VERDICT_SATISFIED: &str =
    "criterion satisfied on sample (sampling certificate, not a proof)";
pub const VERDICT_NOT_SATISFIED: &str = "criterion not satisfied on sample";

pub fn anosov_report(
    sys: &MagneticSystem,
    s: f64,
    sample_count: usize,
    seed: u64,
) -> Result<AnosovReport> {
    require_speed(s)?;
    if sample_count == 0 {
        return Err(Error::InvalidConfig(
            "sample_count must be at least 1".into(),
        ));
    }
    let values = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x = sys.manifold().chart().sample_point(&mut rng);
            let g = sys.manifold().metric_eval(&x)?;
            let (v, w) = random_orthonormal_pair(&g, &mut rng);
            magnetic_sectional(sys, s, &x, &v, &w)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &value in &values {
        min = min.min(value);
        max = max.max(value);
        sum += value;
    }
    let verdict = if max < 0.0 {
        VERDICT_SATISFIED
    } else {
        VERDICT_NOT_SATISFIED
    };
    Ok(AnosovReport {
        min,
        max,
        mean: sum / sample_count as f64,
        samples: sample_count,
        verdict: verdict.into(),
    })
}
