//! Finite-time hyperbolicity diagnostics: Lyapunov spectra, the angle
//! between contracting and vertical subspaces, volume drift and
//! conjugate-point scans of the dynamical exponential.
//!
//! Tangent vectors `ξ = (ξ_x, ξ_v)` of `TM` are measured in Sasaki-type
//! coordinates `(Lᵀ ξ_x, Lᵀ K(ξ))`, where `g = L Lᵀ` and
//! `K(ξ) = ξ_v + Γ(ξ_x, v)` is the connector.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{
    dynamical_exp_derivative, generator, variational_solve, IntegratorConfig, PhaseState,
};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::MagneticSystem;

/// Orthonormal Sasaki coordinates at `(x, v)`: the `2n × 2n` matrix
/// `[[Lᵀ, 0], [Lᵀ Γ_v, Lᵀ]]` with `Γ_v w = Γ(v, w)`.
pub fn sasaki_frame(sys: &MagneticSystem, x: &Vector, v: &Vector) -> Result<Matrix> {
    let n = sys.dim();
    let p = sys.manifold().point(x, false)?;
    let lt = linalg::cholesky_lower(&p.g)?.transpose();
    let mut s = Matrix::zeros(2 * n, 2 * n);
    s.view_mut((0, 0), (n, n)).copy_from(&lt);
    s.view_mut((n, n), (n, n)).copy_from(&lt);
    s.view_mut((n, 0), (n, n))
        .copy_from(&(&lt * p.gamma.along(v)));
    Ok(s)
}

fn sasaki_inverse(s: &Matrix, n: usize) -> Result<Matrix> {
    let lt = s.view((0, 0), (n, n)).into_owned();
    let lt_inv = lt.try_inverse().ok_or(Error::Singular("Sasaki frame"))?;
    let gamma_v = &lt_inv * s.view((n, 0), (n, n));
    let mut out = Matrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&lt_inv);
    out.view_mut((n, n), (n, n)).copy_from(&lt_inv);
    out.view_mut((n, 0), (n, n))
        .copy_from(&(-(gamma_v * &lt_inv)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConfig {
    /// Time between QR re-orthonormalizations.
    pub interval: f64,
    pub integrator: IntegratorConfig,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            interval: 0.1,
            integrator: IntegratorConfig::rk4(1e-3),
        }
    }
}

impl LyapunovConfig {
    fn validate(&self) -> Result<()> {
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "QR interval must be positive, got {}",
                self.interval
            )));
        }
        self.integrator.validate()
    }
}

/// Runs the variational flow in segments of `cfg.interval` up to `horizon`
/// and hands each segment's Sasaki-coordinate Jacobian to `visit`.
///
/// When the system carries a chart symmetry, the state is recentred between
/// segments. The symmetry's differential is a multiple of the identity at the
/// recentred point, so Sasaki coordinates carry over unchanged.
fn segments<F>(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &LyapunovConfig,
    mut visit: F,
) -> Result<PhaseState>
where
    F: FnMut(f64, &Matrix, &PhaseState, &PhaseState) -> Result<()>,
{
    cfg.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let n = sys.dim();
    let count = ((horizon / cfg.interval) - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / count as f64;
    let mut current = state.clone();
    let mut s_start = sasaki_frame(sys, &current.x, &current.v)?;
    for i in 0..count {
        let out = variational_solve(sys, &current, dt, &cfg.integrator)?;
        let s_end = sasaki_frame(sys, &out.state.x, &out.state.v)?;
        let m = &s_end * out.jacobian * sasaki_inverse(&s_start, n)?;
        visit((i + 1) as f64 * dt, &m, &current, &out.state)?;
        current = out.state;
        if let Some(sym) = sys.symmetry() {
            if let Some((x, d)) = sym.recenter(&current.x) {
                current = PhaseState {
                    v: d * &current.v,
                    x,
                    speed: current.speed,
                };
            }
        }
        s_start = sasaki_frame(sys, &current.x, &current.v)?;
    }
    Ok(current)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovTrace {
    pub t: f64,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// `2n` finite-time exponents, descending.
    pub exponents: Vec<f64>,
    pub sum: f64,
    pub horizon: f64,
    pub interval: f64,
    /// Smallest `|λ|`, the flow-direction exponent.
    pub neutral: f64,
    /// Running estimates after each re-orthonormalization.
    pub trace: Vec<LyapunovTrace>,
}

impl LyapunovReport {
    /// Header `index,exponent`, one row per exponent.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,exponent")?;
        for (i, e) in self.exponents.iter().enumerate() {
            writeln!(out, "{i},{e}")?;
        }
        Ok(())
    }
}

/// Discrete QR estimate of the Lyapunov spectrum of the orbit of `state`
/// over `[0, horizon]`, starting from the identity frame.
pub fn lyapunov_spectrum(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &LyapunovConfig,
) -> Result<LyapunovReport> {
    let dim = 2 * sys.dim();
    let mut q = Matrix::identity(dim, dim);
    let mut logs = vec![0.0; dim];
    let mut trace = Vec::new();
    segments(sys, state, horizon, cfg, |t, m, _, _| {
        let qr = (m * &q).qr();
        let r = qr.r();
        let mut qm = qr.q();
        for i in 0..dim {
            let d = r[(i, i)];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular("degenerate variational frame"));
            }
            logs[i] += d.abs().ln();
            // Keep the frame orientation stable from one segment to the next.
            if d < 0.0 {
                let col = -qm.column(i);
                qm.set_column(i, &col);
            }
        }
        q = qm;
        trace.push(LyapunovTrace {
            t,
            exponents: logs.iter().map(|l| l / t).collect(),
        });
        Ok(())
    })?;
    let mut exponents: Vec<f64> = logs.iter().map(|l| l / horizon).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    let sum = exponents.iter().sum();
    let neutral = exponents
        .iter()
        .map(|e| e.abs())
        .fold(f64::INFINITY, f64::min);
    Ok(LyapunovReport {
        exponents,
        sum,
        horizon,
        interval: cfg.interval,
        neutral,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalityReport {
    /// Smallest principal angle between the contracting and vertical subspaces.
    pub angle: f64,
    /// `σ_max(dφ^{2T}) / σ_max(dφ^T)` on the flow-transverse complement.
    pub gap: f64,
    pub horizon: f64,
}

/// Angle between the finite-time most-contracted subspace of `dφ^T` and the
/// vertical subspace `{(0, w) : g(w, v) = 0}`, in Sasaki coordinates.
///
/// Both are taken inside the complement of the flow direction and the radial
/// vertical `(0, v)`. Fails with `UnreliableSplitting` when doubling the
/// horizon grows the top singular value by less than a factor 10.
pub fn transversality_angle(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &LyapunovConfig,
) -> Result<TransversalityReport> {
    let n = sys.dim();
    let s0 = sasaki_frame(sys, &state.x, &state.v)?;
    let flow_dir = &s0 * generator(sys, state)?;
    let mut radial = Vector::zeros(2 * n);
    radial.rows_mut(n, n).copy_from(&state.v);
    let radial = &s0 * radial;
    let euclid = Matrix::identity(2 * n, 2 * n);
    let mut seeds = vec![flow_dir, radial.clone()];
    seeds.extend((0..2 * n).map(|i| euclid.column(i).into_owned()));
    let frame = linalg::gram_schmidt(&euclid, &seeds, 1e-10, 2 * n);
    if frame.len() != 2 * n {
        return Err(Error::Singular("flow-transverse complement"));
    }
    let complement = linalg::columns(&frame[2..]);

    // Product of segment Jacobians, kept at T and continued to 2T.
    let half = ((horizon / cfg.interval) - 1e-9).ceil().max(1.0) * cfg.interval;
    let mut product = Matrix::identity(2 * n, 2 * n);
    let mut at_t: Option<Matrix> = None;
    segments(sys, state, 2.0 * half, cfg, |t, m, _, _| {
        product = m * &product;
        if at_t.is_none() && t >= half * (1.0 - 1e-12) {
            at_t = Some(product.clone());
        }
        Ok(())
    })?;
    let at_t = at_t.expect("segment grid reaches T");
    let top = |m: &Matrix| (m * &complement).singular_values().max();
    let gap = top(&product) / top(&at_t);
    if !(gap >= 10.0) {
        return Err(Error::UnreliableSplitting { gap });
    }

    let svd = (&at_t * &complement).svd(false, true);
    let v_t = svd
        .v_t
        .ok_or(Error::Singular("singular value decomposition"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let stable_cols: Vec<Vector> = order[n - 1..]
        .iter()
        .map(|&i| &complement * v_t.row(i).transpose())
        .collect();
    let stable = linalg::columns(&stable_cols);

    // Vertical unit vectors orthogonal to Lᵀ v.
    let mut vseeds = vec![radial];
    vseeds.extend((n..2 * n).map(|i| euclid.column(i).into_owned()));
    let vertical = linalg::gram_schmidt(&euclid, &vseeds, 1e-10, n);
    let vertical = linalg::columns(&vertical[1..]);
    let cos = (stable.transpose() * vertical)
        .singular_values()
        .max()
        .min(1.0);
    Ok(TransversalityReport {
        angle: cos.acos(),
        gap,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeReport {
    /// `|Σ λ_i|` over the full spectrum.
    pub exponent_sum: f64,
    /// For `n = 2`, `(1/T) log |det dφ^T|` on the speed-preserving
    /// subspace in Sasaki coordinates, which measures `α ∧ dα`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub liouville_rate: Option<f64>,
    /// `|liouville_rate|` when available, otherwise `exponent_sum`.
    pub drift: f64,
}

/// Finite-time volume drift of the flow along the orbit of `state`.
pub fn volume_drift(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &LyapunovConfig,
) -> Result<VolumeReport> {
    let n = sys.dim();
    let report = lyapunov_spectrum(sys, state, horizon, cfg)?;
    let exponent_sum = report.sum.abs();
    let liouville_rate = if n == 2 {
        // log det on TΣ accumulates over segments, each taken between the
        // Sasaki complements of (0, v) at its ends.
        let basis_at = |s: &Matrix, v: &Vector| -> Result<Matrix> {
            let mut radial = Vector::zeros(2 * n);
            radial.rows_mut(n, n).copy_from(v);
            let radial = s * radial;
            let euclid = Matrix::identity(2 * n, 2 * n);
            let mut seeds = vec![radial];
            seeds.extend((0..2 * n).map(|i| euclid.column(i).into_owned()));
            let frame = linalg::gram_schmidt(&euclid, &seeds, 1e-10, 2 * n);
            Ok(linalg::columns(&frame[1..]))
        };
        let mut logdet = 0.0;
        segments(sys, state, horizon, cfg, |_, m, start, end| {
            let b0 = basis_at(&sasaki_frame(sys, &start.x, &start.v)?, &start.v)?;
            let b1 = basis_at(&sasaki_frame(sys, &end.x, &end.v)?, &end.v)?;
            logdet += (b1.transpose() * m * b0).determinant().abs().ln();
            Ok(())
        })?;
        Some(logdet / horizon)
    } else {
        None
    };
    let drift = liouville_rate.map_or(exponent_sum, f64::abs);
    Ok(VolumeReport {
        exponent_sum,
        liouville_rate,
        drift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanNode {
    pub t: f64,
    /// Smallest singular value of `d exp_x` restricted to `direction^⊥`.
    pub sigma_min: f64,
    /// Smallest singular value of the full derivative.
    pub sigma_min_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugateScan {
    pub nodes: Vec<ScanNode>,
}

impl ConjugateScan {
    /// Header `t,sigma_min,sigma_min_full`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,sigma_min,sigma_min_full")?;
        for node in &self.nodes {
            writeln!(out, "{},{},{}", node.t, node.sigma_min, node.sigma_min_full)?;
        }
        Ok(())
    }

    /// Node with the smallest transverse singular value.
    pub fn minimum(&self) -> Option<&ScanNode> {
        self.nodes
            .iter()
            .min_by(|a, b| a.sigma_min.total_cmp(&b.sigma_min))
    }
}

/// Singular values of `d exp_x` at `u = t·direction` for `t = t_max·i/steps`,
/// `i = 1..=steps`, in g-orthonormal frames at both ends.
pub fn conjugate_point_scan(
    sys: &MagneticSystem,
    x: &Vector,
    direction: &Vector,
    t_max: f64,
    steps: usize,
    cfg: &IntegratorConfig,
) -> Result<ConjugateScan> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("scan needs at least one step".into()));
    }
    let m = sys.manifold();
    let g = m.metric_eval(x)?;
    let norm = linalg::norm(&g, direction);
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let e = direction / norm;
    let frame = linalg::columns(&m.orthonormal_completion(x, &e)?);
    let nodes = (1..=steps)
        .map(|i| {
            let t = t_max * i as f64 / steps as f64;
            let (y, d) = dynamical_exp_derivative(sys, x, &(&e * t), cfg)?;
            let lt = linalg::cholesky_lower(&m.metric_eval(&y)?)?.transpose();
            let full = &lt * d * &frame;
            let transverse = full.columns(1, frame.ncols() - 1).into_owned();
            Ok(ScanNode {
                t,
                sigma_min: transverse.singular_values().min(),
                sigma_min_full: full.singular_values().min(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConjugateScan { nodes })
}
