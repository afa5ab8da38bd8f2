use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::{dynamical_ii_at, HyperplaneElement, ParamSubmanifold, SampleRegion};
use crate::error::{Error, Result};
use crate::flow::{
    dynamical_exp, dynamical_exp_derivative, integrate, IntegratorConfig, Method, PhaseState,
};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::MagneticSystem;
use crate::sampling::{gaussian_vector, sphere_points, stream_rng};

/// Sup and mean of `‖II^φ‖²` over sampled unit tangent vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    pub sup: f64,
    pub mean: f64,
    pub samples: usize,
    /// Quadrature value of the defect integral, when one was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral: Option<f64>,
    /// Per-radius averages of the fiber integral over the candidate.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub profile: Vec<RadiusDefect>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusDefect {
    pub t: f64,
    pub mean: f64,
    pub sup: f64,
}

fn summarize(values: &[f64]) -> (f64, f64) {
    let sup = values.iter().cloned().fold(0.0_f64, f64::max);
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    (sup, mean)
}

/// Samples parameters and g-unit tangent directions and reports `‖II^φ‖²`.
pub fn invariance_defect(
    sys: &MagneticSystem,
    sub: &ParamSubmanifold,
    sample_count: usize,
    seed: u64,
) -> Result<DefectReport> {
    if sample_count == 0 {
        return Err(Error::InvalidConfig(
            "sample_count must be at least 1".into(),
        ));
    }
    let values = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let a = sub.sample_parameter(&mut rng);
            let local = sub.local(sys.manifold(), &a)?.with_hessian(sub)?;
            let frame = local.tangent_frame();
            let coeffs = gaussian_vector(&mut rng, frame.len());
            let mut v = Vector::zeros(sub.ambient_dim());
            for (c, e) in coeffs.iter().zip(&frame) {
                v.axpy(*c, e, 1.0);
            }
            let norm = linalg::norm(&local.g, &v);
            let v = if norm > 0.0 {
                v / norm
            } else {
                frame[0].clone()
            };
            Ok(dynamical_ii_at(sys, &local, &v)?.norm_squared(&local.g))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (sup, mean) = summarize(&values);
    Ok(DefectReport {
        sup,
        mean,
        samples: sample_count,
        integral: None,
        profile: Vec::new(),
    })
}

/// Integrates from `(f(a), v)` for time `horizon` and returns the largest
/// g-distance from the orbit to the submanifold.
pub fn dynamic_consistency_check(
    sys: &MagneticSystem,
    sub: &ParamSubmanifold,
    a: &Vector,
    v: &Vector,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let local = sub.local(sys.manifold(), a)?;
    let norm = linalg::norm(&local.g, v);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnitVector { norm });
    }
    local.require_tangent(v)?;
    let start = PhaseState {
        x: local.f.clone(),
        v: v.clone(),
        speed: 1.0,
    };
    let traj = integrate(sys, &start, horizon, cfg)?.complete()?;
    let stride = (traj.states.len() / 200).max(1);
    let mut hint = a.clone();
    let mut worst = 0.0_f64;
    let last = traj.states.len() - 1;
    for (i, s) in traj.states.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        let g = sys.manifold().metric_eval(&s.x)?;
        let (p, d) = sub.project(&g, &s.x, Some(&hint))?;
        hint = p;
        worst = worst.max(d);
    }
    Ok(worst)
}

/// `a ↦ exp_x(Σ a_i e_i)` for `|a| ≤ radius`, where `e_i` is a g-orthonormal
/// basis of a `k`-plane at `x`.
///
/// First derivatives come from the variational flow (the exact plane at
/// `a = 0`); second derivatives are central differences of those. Every
/// evaluation uses the same number of RK4 steps so that the map is smooth in `a`.
pub fn candidate_submanifold(
    sys: &MagneticSystem,
    x: &Vector,
    basis: &[Vector],
    radius: f64,
    grid: usize,
    cfg: &IntegratorConfig,
) -> Result<ParamSubmanifold> {
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let n = sys.dim();
    let k = basis.len();
    let g = sys.manifold().metric_eval(x)?;
    let e = linalg::columns(basis);
    let gram = e.transpose() * &g * &e;
    let residual = (gram - Matrix::identity(k, k)).amax();
    if residual > 1e-10 {
        return Err(Error::NonOrthonormalFrame { residual });
    }
    let steps = cfg.fixed_steps(radius);
    let step_for = {
        let cfg = *cfg;
        move |r: f64| IntegratorConfig {
            method: Method::Rk4,
            step: r / steps as f64,
            ..cfg
        }
    };
    let inner = (0.1_f64).min(radius / 2.0);
    let (sys_m, x_m, e_m) = (sys.clone(), x.clone(), e.clone());
    let (sys_j, x_j, e_j) = (sys.clone(), x.clone(), e);
    let sub = ParamSubmanifold::new(
        k,
        n,
        move |a| {
            let r = a.norm();
            if r == 0.0 {
                return Ok(x_m.clone());
            }
            dynamical_exp(&sys_m, &x_m, &(&e_m * a), &step_for(r))
        },
        SampleRegion::Shell {
            inner,
            outer: radius,
        },
    )?
    .with_jacobian(move |a| {
        let r = a.norm();
        if r == 0.0 {
            return Ok(e_j.clone());
        }
        let (_, d) = dynamical_exp_derivative(&sys_j, &x_j, &(&e_j * a), &step_for(r))?;
        Ok(d * &e_j)
    })
    .with_fd_steps(1e-6, 1e-4)
    .with_grid(grid)
    .with_guard(move |a| a.norm() <= radius * (1.0 + 1e-12));
    Ok(sub)
}

/// `S_Π = exp_x(Π ∩ {|u| ≤ radius})`.
pub fn candidate_hypersurface(
    sys: &MagneticSystem,
    plane: &HyperplaneElement,
    radius: f64,
    grid: usize,
    cfg: &IntegratorConfig,
) -> Result<ParamSubmanifold> {
    let basis = plane.basis(sys.manifold())?;
    candidate_submanifold(sys, &plane.x, &basis, radius, grid, cfg)
}

/// `E(x, Π, v, t) = (exp_x(t v), d_{tv} exp_x(Π))`.
pub fn augmented_exp(
    sys: &MagneticSystem,
    plane: &HyperplaneElement,
    v: &Vector,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vector, HyperplaneElement)> {
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!("t must be positive, got {t}")));
    }
    let m = sys.manifold();
    let g = m.metric_eval(&plane.x)?;
    let norm = linalg::norm(&g, v);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnitVector { norm });
    }
    let off = linalg::inner(&g, v, &plane.normal).abs();
    if off > 1e-8 {
        return Err(Error::NotTangent { residual: off });
    }
    let basis = plane.basis(m)?;
    let (y, d) = dynamical_exp_derivative(sys, &plane.x, &(v * t), cfg)?;
    let images: Vec<Vector> = basis.iter().map(|b| &d * b).collect();
    let gy = m.metric_eval(&y)?;
    let l = linalg::cholesky_lower(&gy)?;
    let sigma_min = linalg::sigma_min(&(l.transpose() * linalg::columns(&images)));
    if !(sigma_min > 1e-8) {
        return Err(Error::DegenerateImage { sigma_min });
    }
    let n = sys.dim();
    let mut seeds = images.clone();
    seeds.extend((0..n).map(|i| {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        e
    }));
    let frame = linalg::gram_schmidt(&gy, &seeds, 1e-10, n);
    let mut normal = frame
        .last()
        .cloned()
        .ok_or(Error::Singular("hyperplane normal"))?;
    // Keep the orientation of (ν, basis).
    let before = orientation(&plane.normal, &basis);
    let after = orientation(&normal, &images);
    if before * after < 0.0 {
        normal = -normal;
    }
    Ok((y.clone(), HyperplaneElement { x: y, normal }))
}

fn orientation(normal: &Vector, basis: &[Vector]) -> f64 {
    let mut cols = vec![normal.clone()];
    cols.extend(basis.iter().cloned());
    linalg::columns(&cols).determinant().signum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaConfig {
    /// Radii `t` at which the candidate is probed.
    pub radii: Vec<f64>,
    /// Number of quadrature directions in each unit tangent sphere;
    /// `None` picks 64 nodes on a circle and 256 otherwise.
    pub directions: Option<usize>,
    /// Number of base directions `v ∈ U_xΠ` per radius.
    pub base_directions: usize,
    pub integrator: IntegratorConfig,
}

impl AlphaConfig {
    /// `count` radii evenly spaced in `[0.1, radius]`.
    pub fn with_radius(radius: f64, count: usize) -> Self {
        let lo = 0.1_f64.min(radius);
        let radii = if count <= 1 {
            vec![radius]
        } else {
            (0..count)
                .map(|i| lo + (radius - lo) * i as f64 / (count - 1) as f64)
                .collect()
        };
        AlphaConfig {
            radii,
            directions: None,
            base_directions: 16,
            integrator: IntegratorConfig::rk4(1e-2),
        }
    }
}

/// Quadrature of `‖II^φ‖²` over the unit tangent spheres of the candidate
/// hypersurface `S_Π` at the points `exp_x(t v)`.
///
/// Each node value is the fiber integral `∫_{U_p S_Π} ‖II^φ‖² dμ` with the
/// round measure; `profile` averages it over base directions for every
/// radius, and `integral` averages over all nodes.
pub fn alpha_defect(
    sys: &MagneticSystem,
    plane: &HyperplaneElement,
    config: &AlphaConfig,
) -> Result<DefectReport> {
    if config.radii.is_empty() || config.radii.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidConfig(
            "alpha radii must be a nonempty list of positive numbers".into(),
        ));
    }
    let n = sys.dim();
    let k = n - 1;
    let radius = config.radii.iter().cloned().fold(0.0_f64, f64::max);
    let sub = candidate_hypersurface(sys, plane, radius, 5, &config.integrator)?;
    let count = config.directions.unwrap_or(if k == 2 { 64 } else { 256 });
    let fiber = sphere_points(k, count);
    let base = sphere_points(k, config.base_directions.max(1));
    let area = linalg::sphere_area(k);
    let nodes: Vec<(usize, Vector)> = config
        .radii
        .iter()
        .enumerate()
        .flat_map(|(i, t)| base.iter().map(move |b| (i, b * *t)))
        .collect();
    let per_node = nodes
        .par_iter()
        .map(|(i, a)| {
            let local = sub.local(sys.manifold(), a)?.with_hessian(&sub)?;
            let frame = local.tangent_frame();
            let mut sup = 0.0_f64;
            let mut acc = 0.0;
            for c in &fiber {
                let mut w = Vector::zeros(n);
                for (ci, e) in c.iter().zip(&frame) {
                    w.axpy(*ci, e, 1.0);
                }
                let val = dynamical_ii_at(sys, &local, &w)?.norm_squared(&local.g);
                sup = sup.max(val);
                acc += val;
            }
            Ok((*i, area * acc / fiber.len() as f64, sup))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut profile = Vec::new();
    for (i, t) in config.radii.iter().enumerate() {
        let vals: Vec<&(usize, f64, f64)> = per_node.iter().filter(|(j, _, _)| *j == i).collect();
        let mean = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
        let sup = vals.iter().map(|v| v.2).fold(0.0_f64, f64::max);
        profile.push(RadiusDefect { t: *t, mean, sup });
    }
    let sup = per_node.iter().map(|v| v.2).fold(0.0_f64, f64::max);
    let integral = per_node.iter().map(|v| v.1).sum::<f64>() / per_node.len() as f64;
    Ok(DefectReport {
        sup,
        mean: integral / area,
        samples: per_node.len() * fiber.len(),
        integral: Some(integral),
        profile,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartanConfig {
    /// Radius of each candidate `exp_x(Π)`.
    pub radius: f64,
    /// Sampled tangent directions per candidate.
    pub defect_samples: usize,
    /// Threshold below which a plane counts as invariant.
    pub defect_tolerance: f64,
    pub variance_tolerance: f64,
    pub sigma_tolerance: f64,
    pub integrator: IntegratorConfig,
}

impl Default for CartanConfig {
    fn default() -> Self {
        CartanConfig {
            radius: 0.5,
            defect_samples: 8,
            defect_tolerance: 1e-6,
            variance_tolerance: 1e-8,
            sigma_tolerance: 1e-8,
            integrator: IntegratorConfig::rk4(1e-2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartanPlane {
    pub id: usize,
    pub defect: f64,
    /// Mean sectional curvature over coordinate 2-planes of the sampled plane.
    pub sectional: f64,
    /// Variance of those sectional curvatures (0 when `k = 2`).
    pub sec_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartanReport {
    pub k: usize,
    pub planes: Vec<CartanPlane>,
    /// Fraction of planes whose defect is below the tolerance.
    pub invariant_fraction: f64,
    /// Variance of all sampled sectional curvatures.
    pub curvature_variance: f64,
    /// Largest sampled g-norm of σ.
    pub sigma_norm: f64,
    pub verdict: String,
}

pub const VERDICT_CONSISTENT: &str = "consistent";
pub const VERDICT_CONTRADICTION: &str = "contradiction";

impl CartanReport {
    /// Header `plane,defect,sectional,sec_variance`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "plane,defect,sectional,sec_variance")?;
        for p in &self.planes {
            writeln!(
                out,
                "{},{},{},{}",
                p.id, p.defect, p.sectional, p.sec_variance
            )?;
        }
        Ok(())
    }
}

/// `‖σ‖_g = sqrt(½ σ_ij σ^ij)`.
fn form_norm(g: &Matrix, sigma: &Matrix) -> Result<f64> {
    let ginv = linalg::spd_inverse(g)?;
    let raised = &ginv * sigma * &ginv;
    Ok((0.5 * sigma.component_mul(&raised).sum()).max(0.0).sqrt())
}

/// Samples `plane_samples` random `k`-planes, builds `exp_x(Π)` for each and
/// measures its invariance defect, the sectional curvature of the plane and
/// the size of σ.
///
/// The verdict is `consistent` when either some plane fails to be invariant,
/// or all are invariant and both curvature variance and `‖σ‖` are below
/// tolerance; otherwise it is `contradiction`.
pub fn cartan_probe(
    sys: &MagneticSystem,
    k: usize,
    plane_samples: usize,
    seed: u64,
    config: &CartanConfig,
) -> Result<CartanReport> {
    let n = sys.dim();
    if k <= 1 || k >= n {
        return Err(Error::BadDimension(format!(
            "plane dimension {k} must satisfy 1 < k < {n}"
        )));
    }
    if plane_samples == 0 {
        return Err(Error::InvalidConfig(
            "plane_samples must be at least 1".into(),
        ));
    }
    let results = (0..plane_samples)
        .into_par_iter()
        .map(|id| {
            let mut rng = stream_rng(seed, id as u64);
            let mut attempt = 0;
            loop {
                match probe_plane(sys, k, id, seed, config, &mut rng) {
                    Err(Error::DomainExit { .. } | Error::DomainViolation { .. })
                        if attempt < MAX_PLANE_ATTEMPTS =>
                    {
                        attempt += 1;
                    }
                    other => return other,
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut planes = Vec::with_capacity(results.len());
    let mut all_secs = Vec::new();
    let mut sigma_norm = 0.0_f64;
    for (plane, secs, sigma) in results {
        planes.push(plane);
        all_secs.extend(secs);
        sigma_norm = sigma_norm.max(sigma);
    }
    let invariant = planes
        .iter()
        .filter(|p| p.defect < config.defect_tolerance)
        .count();
    let invariant_fraction = invariant as f64 / planes.len() as f64;
    let mean = all_secs.iter().sum::<f64>() / all_secs.len() as f64;
    let curvature_variance = all_secs
        .iter()
        .map(|s| (s - mean) * (s - mean))
        .sum::<f64>()
        / all_secs.len() as f64;
    let all_invariant = invariant == planes.len();
    let rigid =
        curvature_variance < config.variance_tolerance && sigma_norm < config.sigma_tolerance;
    let verdict = if !all_invariant || rigid {
        VERDICT_CONSISTENT
    } else {
        VERDICT_CONTRADICTION
    };
    Ok(CartanReport {
        k,
        planes,
        invariant_fraction,
        curvature_variance,
        sigma_norm,
        verdict: verdict.into(),
    })
}

const MAX_PLANE_ATTEMPTS: usize = 32;

/// One plane of the probe. The base point is redrawn by the caller when the
/// candidate leaves the chart.
fn probe_plane(
    sys: &MagneticSystem,
    k: usize,
    id: usize,
    seed: u64,
    config: &CartanConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(CartanPlane, Vec<f64>, f64)> {
    let n = sys.dim();
    let m = sys.manifold();
    let x = m.chart().sample_point(rng);
    let g = m.metric_eval(&x)?;
    let basis = loop {
        let seeds: Vec<Vector> = (0..k).map(|_| gaussian_vector(rng, n)).collect();
        let b = linalg::gram_schmidt(&g, &seeds, 1e-6, k);
        if b.len() == k {
            break b;
        }
    };
    let mut secs = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            secs.push(m.sectional(&x, &basis[i], &basis[j])?);
        }
    }
    let sub = candidate_submanifold(sys, &x, &basis, config.radius, 3, &config.integrator)?;
    let defect = invariance_defect(
        sys,
        &sub,
        config.defect_samples,
        seed ^ (id as u64).rotate_left(32),
    )?
    .sup;
    let sigma = form_norm(&g, &sys.sigma().value(&x))?;
    let mean = secs.iter().sum::<f64>() / secs.len() as f64;
    let var = secs.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / secs.len() as f64;
    Ok((
        CartanPlane {
            id,
            defect,
            sectional: mean,
            sec_variance: var,
        },
        secs,
        sigma,
    ))
}
