//! Magnetic covariant derivative, parallel transport, the frame-extension
//! flow and holonomy along closed orbits.
//!
//! The transport equation is `Ẇ = −Γ(ẋ, W) + Y W`, i.e. `𝒟W = DW/dt − Y W = 0`.
//! It is integrated together with the orbit as one ODE system.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::flow::{
    phase_rhs, relative_drift, renormalize, solve_controlled, IntegratorConfig, PhaseState,
    Trajectory,
};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::MagneticSystem;

/// `(𝒟W)(t_i)` at every node of `traj`, from fourth-order finite differences
/// of `W` on the (uniform) time grid.
pub fn magnetic_covariant_derivative(
    sys: &MagneticSystem,
    traj: &Trajectory,
    w: &[Vector],
) -> Result<Vec<Vector>> {
    let len = traj.times.len();
    if w.len() != len {
        return Err(Error::GridMismatch(format!(
            "{} samples for {} trajectory nodes",
            w.len(),
            len
        )));
    }
    if len < 5 {
        return Err(Error::GridMismatch(format!(
            "need at least 5 nodes, got {len}"
        )));
    }
    let n = sys.dim();
    if let Some(bad) = w.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    let h = (traj.times[len - 1] - traj.times[0]) / (len - 1) as f64;
    for pair in traj.times.windows(2) {
        if ((pair[1] - pair[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::GridMismatch("time grid is not uniform".into()));
        }
    }
    // Five-point stencils: central in the interior, one-sided at the ends.
    const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    const FORWARD0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const FORWARD1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let derivative = |i: usize| -> Vector {
        let (start, coeffs, sign) = match i {
            0 => (0, FORWARD0, 1.0),
            1 => (0, FORWARD1, 1.0),
            _ if i + 2 < len => (i - 2, CENTRAL, 1.0),
            _ if i + 1 < len => (len - 5, FORWARD1, -1.0),
            _ => (len - 5, FORWARD0, -1.0),
        };
        let mut d = Vector::zeros(n);
        for (j, c) in coeffs.iter().enumerate() {
            // Backward stencils are the forward ones reflected.
            let idx = if sign > 0.0 { start + j } else { start + 4 - j };
            d.axpy(sign * c / (12.0 * h), &w[idx], 1.0);
        }
        d
    };
    traj.states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = sys.manifold().point(&s.x, false)?;
            let y = sys.lorentz(&s.x)?.matrix;
            Ok(derivative(i) + p.gamma.contract(&s.v, &w[i]) - y * &w[i])
        })
        .collect()
}

fn transport_rhs(sys: &MagneticSystem, y: &Vector, count: usize) -> Result<Vector> {
    let n = sys.dim();
    let base = phase_rhs(sys, y)?;
    let x = y.rows(0, n).into_owned();
    let v = y.rows(n, n).into_owned();
    let gamma = sys.manifold().point(&x, false)?.gamma;
    let op = sys.lorentz(&x)?.matrix - gamma.along(&v);
    let mut out = Vector::zeros(y.len());
    out.rows_mut(0, 2 * n).copy_from(&base);
    for j in 0..count {
        let off = 2 * n + j * n;
        let wj = y.rows(off, n);
        out.rows_mut(off, n).copy_from(&(&op * wj));
    }
    Ok(out)
}

/// Orbit of `state` together with transported vectors at every node.
#[derive(Debug, Clone)]
pub struct TransportPath {
    pub trajectory: Trajectory,
    /// `vectors[i][j]` is the `j`-th transported vector at node `i`.
    pub vectors: Vec<Vec<Vector>>,
}

/// Transports `ws` along the orbit of `state` for time `horizon`.
///
/// The base components follow exactly the arithmetic of
/// [`crate::flow::integrate`], so the orbit is bit-identical to it. Returns
/// `Err(DomainExit)` if the orbit leaves the chart.
pub fn transport_path(
    sys: &MagneticSystem,
    state: &PhaseState,
    ws: &[Vector],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<TransportPath> {
    let n = sys.dim();
    sys.manifold().chart().check(&state.x)?;
    if state.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state.dim(),
        });
    }
    if let Some(bad) = ws.iter().find(|w| w.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    let count = ws.len();
    let mut y0 = Vector::zeros(2 * n + count * n);
    y0.rows_mut(0, 2 * n).copy_from(&state.pack());
    for (j, w) in ws.iter().enumerate() {
        y0.rows_mut(2 * n + j * n, n).copy_from(w);
    }
    let speed = state.speed;
    let (mut times, mut states, mut drift, mut vectors) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let sol = solve_controlled(
        |y| transport_rhs(sys, y, count),
        y0,
        horizon,
        cfg,
        2 * n,
        |y| {
            if cfg.renormalize_speed {
                renormalize(sys, y, speed)
            }
        },
        |t, y| {
            let s = PhaseState::unpack(y, n, speed);
            drift.push(relative_drift(sys, &s.x, &s.v, speed));
            times.push(t);
            states.push(s);
            vectors.push(
                (0..count)
                    .map(|j| y.rows(2 * n + j * n, n).into_owned())
                    .collect(),
            );
        },
    )?;
    let speed_drift = drift.iter().cloned().fold(0.0_f64, f64::max);
    let trajectory = Trajectory {
        times,
        states,
        drift,
        speed_drift,
        steps: sol.steps,
        domain_exit: sol.exit,
    };
    Ok(TransportPath {
        trajectory: trajectory.complete()?,
        vectors,
    })
}

/// `W(T)` for the magnetic parallel transport of `w0` along the orbit of `state`.
pub fn parallel_transport(
    sys: &MagneticSystem,
    state: &PhaseState,
    w0: &Vector,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Vector> {
    let path = transport_path(sys, state, std::slice::from_ref(w0), horizon, cfg)?;
    Ok(path.vectors.last().expect("nonempty path")[0].clone())
}

/// A unit-speed state with an orthonormal completion `v₂, …, v_n` of `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub state: PhaseState,
    pub frame: Vec<Vector>,
}

impl FrameState {
    /// Checks unit speed and `Gram(v, v₂, …, v_n) = I` to `1e-10`.
    pub fn new(sys: &MagneticSystem, state: PhaseState, frame: Vec<Vector>) -> Result<Self> {
        let n = sys.dim();
        if frame.len() + 1 != n {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                got: frame.len(),
            });
        }
        let out = FrameState { state, frame };
        let norm = sys.manifold().norm(&out.state.x, &out.state.v)?;
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NonUnitVector { norm });
        }
        let residual = out.gram_residual(sys)?;
        if residual > 1e-10 {
            return Err(Error::NonOrthonormalFrame { residual });
        }
        Ok(out)
    }

    /// Rescales `v` to unit speed and completes it from the coordinate basis.
    pub fn complete(sys: &MagneticSystem, x: Vector, v: Vector) -> Result<Self> {
        let state = PhaseState::normalized(sys, x, v, 1.0)?;
        let frame = sys.manifold().orthonormal_completion(&state.x, &state.v)?;
        Ok(FrameState {
            state,
            frame: frame[1..].to_vec(),
        })
    }

    /// All `n` vectors, velocity first.
    pub fn vectors(&self) -> Vec<Vector> {
        let mut all = vec![self.state.v.clone()];
        all.extend(self.frame.iter().cloned());
        all
    }

    /// `max |Gram − I|` of `(v, v₂, …, v_n)`.
    pub fn gram_residual(&self, sys: &MagneticSystem) -> Result<f64> {
        let g = sys.manifold().metric_eval(&self.state.x)?;
        let e = linalg::columns(&self.vectors());
        let gram = e.transpose() * g * &e;
        Ok(linalg::max_abs(
            &(gram - Matrix::identity(e.ncols(), e.ncols())),
        ))
    }
}

/// `Φ^T(x, v, v₂, …) = (γ(T), γ̇(T), v₂(T), …)` with every `v_j` 𝒟-parallel.
pub fn frame_flow(
    sys: &MagneticSystem,
    frame: &FrameState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<FrameState> {
    let path = transport_path(sys, &frame.state, &frame.frame, horizon, cfg)?;
    let state = path.trajectory.last().clone();
    let frame = path.vectors.last().expect("nonempty path").clone();
    Ok(FrameState { state, frame })
}

/// Transported frame of a closed orbit, written in an orthonormal basis of
/// `v^⊥` at the start.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalHolonomy {
    pub matrix: Matrix,
    pub period: f64,
    pub start: PhaseState,
    /// Phase-space distance between the start and the state after one period.
    pub return_distance: f64,
}

impl OrthogonalHolonomy {
    /// `max |QᵀQ − I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let k = self.matrix.ncols();
        linalg::max_abs(&(self.matrix.transpose() * &self.matrix - Matrix::identity(k, k)))
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Row-major CSV preceded by `#` comment lines with the orbit data.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let join = |v: &Vector| {
            v.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "# period={}", self.period)?;
        writeln!(out, "# return_distance={}", self.return_distance)?;
        writeln!(out, "# x={}", join(&self.start.x))?;
        writeln!(out, "# v={}", join(&self.start.v))?;
        for row in self.matrix.row_iter() {
            writeln!(
                out,
                "{}",
                row.iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            )?;
        }
        Ok(())
    }
}

const RETURN_TOLERANCE: f64 = 1e-6;

/// Phase-space displacement from `state` to its image after time `tau`,
/// and the generator at the image.
fn return_map(
    sys: &MagneticSystem,
    state: &PhaseState,
    tau: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vector, Vector)> {
    let end = crate::flow::flow_to(sys, state, tau, cfg)?;
    let chart = sys.manifold().chart();
    let n = sys.dim();
    let mut d = Vector::zeros(2 * n);
    d.rows_mut(0, n)
        .copy_from(&chart.displacement(&state.x, &end.x));
    d.rows_mut(n, n).copy_from(&(&end.v - &state.v));
    Ok((d, phase_rhs(sys, &end.pack())?))
}

/// Refines `guess` to a period by golden-section search on the return
/// distance over `[0.9, 1.1]·guess`, then secant steps on its derivative.
pub fn refine_period(
    sys: &MagneticSystem,
    state: &PhaseState,
    guess: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    if !(guess > 0.0 && guess.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "period guess must be positive, got {guess}"
        )));
    }
    let dist = |tau: f64| -> Result<f64> { Ok(return_map(sys, state, tau, cfg)?.0.norm()) };
    let slope = |tau: f64| -> Result<f64> {
        let (d, f) = return_map(sys, state, tau, cfg)?;
        Ok(d.dot(&f))
    };
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.9 * guess, 1.1 * guess);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (dist(c)?, dist(d)?);
    while b - a > 1e-4 * guess {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = dist(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = dist(d)?;
        }
    }
    let (mut t0, mut t1) = (c, d);
    let (mut s0, mut s1) = (slope(t0)?, slope(t1)?);
    for _ in 0..30 {
        if s1 == s0 {
            break;
        }
        let t2 = t1 - s1 * (t1 - t0) / (s1 - s0);
        if !t2.is_finite() || (t2 - guess).abs() > 0.2 * guess {
            break;
        }
        t0 = t1;
        s0 = s1;
        t1 = t2;
        s1 = slope(t1)?;
        if (t1 - t0).abs() < 1e-13 * guess {
            break;
        }
    }
    let best =
        [(t1, dist(t1)?), (c, fc), (d, fd)]
            .into_iter()
            .fold(
                (t1, f64::INFINITY),
                |acc, p| if p.1 < acc.1 { p } else { acc },
            );
    if best.1 < RETURN_TOLERANCE {
        Ok(best)
    } else {
        Err(Error::NotPeriodic { distance: best.1 })
    }
}

/// Holonomy of the frame-extension flow around the closed orbit through
/// `state`, which is first rescaled to unit speed.
pub fn closed_orbit_holonomy(
    sys: &MagneticSystem,
    state: &PhaseState,
    period_guess: f64,
    cfg: &IntegratorConfig,
) -> Result<OrthogonalHolonomy> {
    let start = FrameState::complete(sys, state.x.clone(), state.v.clone())?;
    let (period, return_distance) = refine_period(sys, &start.state, period_guess, cfg)?;
    let end = frame_flow(sys, &start, period, cfg)?;
    // Re-orthonormalize the initial completion against the final velocity in
    // the final metric, so both bases span the same v^⊥.
    let g = sys.manifold().metric_eval(&end.state.x)?;
    let mut seeds = vec![end.state.v.clone()];
    seeds.extend(start.frame.iter().cloned());
    let basis = linalg::gram_schmidt(&g, &seeds, 1e-8, sys.dim());
    if basis.len() != sys.dim() {
        return Err(Error::Singular("holonomy basis"));
    }
    let k = sys.dim() - 1;
    let matrix = Matrix::from_fn(k, k, |i, j| linalg::inner(&g, &basis[i + 1], &end.frame[j]));
    Ok(OrthogonalHolonomy {
        matrix,
        period,
        start: start.state,
        return_distance,
    })
}

#[cfg(test)]
mod tests;
