//! Integration of the magnetic (or general semi-spray) flow on `TM`,
//! the dynamical exponential map and the linearized flow.

mod ode;
mod variational;


use std::io::{self, Write};

pub(crate) use ode::{solve, solve_controlled};
pub use ode::{IntegratorConfig, Method};
pub use variational::{
    generator_jacobian, variational_flow, variational_solve, VariationalOutcome,
};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::{MagneticSystem, VerticalField};

/// A point of `TM` in chart coordinates together with its nominal speed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vector,
    pub v: Vector,
    pub speed: f64,
}

impl PhaseState {
    /// Builds a state whose nominal speed is the g-norm of `v`.
    pub fn new(sys: &MagneticSystem, x: Vector, v: Vector) -> Result<Self> {
        let n = sys.dim();
        for len in [x.len(), v.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        let speed = sys.manifold().norm(&x, &v)?;
        Ok(PhaseState { x, v, speed })
    }

    /// Builds a state and checks `|‖v‖_g − s| / s < tolerance`.
    pub fn with_speed(
        sys: &MagneticSystem,
        x: Vector,
        v: Vector,
        speed: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(Error::NonpositiveSpeed(speed));
        }
        let mut state = Self::new(sys, x, v)?;
        if (state.speed - speed).abs() / speed >= tolerance {
            return Err(Error::NonUnitVector {
                norm: state.speed / speed,
            });
        }
        state.speed = speed;
        Ok(state)
    }

    /// `(x, v/‖v‖_g · s)`.
    pub fn normalized(sys: &MagneticSystem, x: Vector, v: Vector, speed: f64) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(Error::NonpositiveSpeed(speed));
        }
        let norm = sys.manifold().norm(&x, &v)?;
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let v = v * (speed / norm);
        Ok(PhaseState { x, v, speed })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn reversed(&self) -> Self {
        PhaseState {
            x: self.x.clone(),
            v: -&self.v,
            speed: self.speed,
        }
    }

    pub(crate) fn pack(&self) -> Vector {
        let n = self.dim();
        let mut y = Vector::zeros(2 * n);
        y.rows_mut(0, n).copy_from(&self.x);
        y.rows_mut(n, n).copy_from(&self.v);
        y
    }

    pub(crate) fn unpack(y: &Vector, n: usize, speed: f64) -> Self {
        PhaseState {
            x: y.rows(0, n).into_owned(),
            v: y.rows(n, n).into_owned(),
            speed,
        }
    }
}

/// Time-stamped orbit with speed-drift diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    /// Per-node relative deviation of `‖v‖_g` from the nominal speed.
    pub drift: Vec<f64>,
    /// Maximum of `drift`.
    pub speed_drift: f64,
    pub steps: usize,
    /// Set when the orbit left the chart domain; the data stop at this time.
    pub domain_exit: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &PhaseState {
        self.states
            .last()
            .expect("trajectories hold at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectories hold at least the initial time")
    }

    /// `Err(DomainExit)` if the orbit was cut short.
    pub fn complete(self) -> Result<Self> {
        match self.domain_exit {
            Some(time) => Err(Error::DomainExit { time }),
            None => Ok(self),
        }
    }

    /// Header `t,x1..xn,v1..vn,speed_drift`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.dim());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        header.push("speed_drift".into());
        writeln!(out, "{}", header.join(","))?;
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.drift) {
            let mut row = vec![t.to_string()];
            row.extend(s.x.iter().map(|c| c.to_string()));
            row.extend(s.v.iter().map(|c| c.to_string()));
            row.push(d.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Acceleration `−Γ(v, v) + X_V(x, v)`.
pub fn acceleration(sys: &MagneticSystem, x: &Vector, v: &Vector) -> Result<Vector> {
    let p = sys.manifold().point(x, false)?;
    let mut a = -p.gamma.contract(v, v);
    match sys.vertical() {
        VerticalField::Lorentz => {
            let sigma = sys.sigma().value(x);
            // Y v = −g⁻¹ σ v
            a -= &p.ginv * (sigma * v);
        }
        VerticalField::Custom(f) => a += f(x, v),
    }
    Ok(a)
}

/// `(ẋ, v̇) = (v, −Γ(v, v) + X_V)`.
pub fn generator(sys: &MagneticSystem, state: &PhaseState) -> Result<Vector> {
    let n = sys.dim();
    let a = acceleration(sys, &state.x, &state.v)?;
    let mut out = Vector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&state.v);
    out.rows_mut(n, n).copy_from(&a);
    Ok(out)
}

pub(crate) fn phase_rhs(sys: &MagneticSystem, y: &Vector) -> Result<Vector> {
    let n = sys.dim();
    let x = y.rows(0, n).into_owned();
    let v = y.rows(n, n).into_owned();
    let a = acceleration(sys, &x, &v)?;
    let mut out = Vector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&v);
    out.rows_mut(n, n).copy_from(&a);
    Ok(out)
}

/// Rescales the velocity block of `y` to g-norm `speed`.
pub(crate) fn renormalize(sys: &MagneticSystem, y: &mut Vector, speed: f64) {
    let n = sys.dim();
    let x = y.rows(0, n).into_owned();
    let v = y.rows(n, n).into_owned();
    if let Ok(norm) = sys.manifold().norm(&x, &v) {
        if norm > 0.0 {
            y.rows_mut(n, n).scale_mut(speed / norm);
        }
    }
}

pub(crate) fn relative_drift(sys: &MagneticSystem, x: &Vector, v: &Vector, speed: f64) -> f64 {
    match sys.manifold().norm(x, v) {
        Ok(norm) if speed > 0.0 => (norm - speed).abs() / speed,
        Ok(norm) => norm,
        Err(_) => f64::NAN,
    }
}

/// Integrates the flow for time `horizon` and records every step.
///
/// Leaving the chart domain is not an error here: the returned trajectory
/// stops at the last admissible state and `domain_exit` is set.
pub fn integrate(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    sys.manifold().chart().check(&state.x)?;
    let n = sys.dim();
    let speed = state.speed;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut drift = Vec::new();
    let sol = solve(
        |y| phase_rhs(sys, y),
        state.pack(),
        horizon,
        cfg,
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
        },
    )?;
    let speed_drift = drift.iter().cloned().fold(0.0_f64, f64::max);
    Ok(Trajectory {
        times,
        states,
        drift,
        speed_drift,
        steps: sol.steps,
        domain_exit: sol.exit,
    })
}

/// Final state of the flow without recording the orbit.
pub fn flow_to(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<PhaseState> {
    sys.manifold().chart().check(&state.x)?;
    let speed = state.speed;
    let sol = solve(
        |y| phase_rhs(sys, y),
        state.pack(),
        horizon,
        cfg,
        |y| {
            if cfg.renormalize_speed {
                renormalize(sys, y, speed)
            }
        },
        |_, _| {},
    )?;
    if let Some(time) = sol.exit {
        return Err(Error::DomainExit { time });
    }
    Ok(PhaseState::unpack(&sol.y, sys.dim(), speed))
}

/// `exp_x(u) = π φ^{|u|}(x, u/|u|)` for the unit-speed flow, with `exp_x(0) = x`.
pub fn dynamical_exp(
    sys: &MagneticSystem,
    x: &Vector,
    u: &Vector,
    cfg: &IntegratorConfig,
) -> Result<Vector> {
    let r = sys.manifold().norm(x, u)?;
    if r == 0.0 {
        return Ok(x.clone());
    }
    let start = PhaseState {
        x: x.clone(),
        v: u / r,
        speed: 1.0,
    };
    Ok(flow_to(sys, &start, r, cfg)?.x)
}

/// `exp_x(u)` together with its derivative `d_u exp_x`.
///
/// For `u ≠ 0` with `r = |u|`, `e = u/r`, the derivative sends `δu` to
/// `γ̇(r) g(e, δu) + J_{xv} (δu − e g(e, δu)) / r`, where `J_{xv}` is the
/// `∂x(r)/∂v(0)` block of the variational flow. At `u = 0` it is the identity.
pub fn dynamical_exp_derivative(
    sys: &MagneticSystem,
    x: &Vector,
    u: &Vector,
    cfg: &IntegratorConfig,
) -> Result<(Vector, Matrix)> {
    let n = sys.dim();
    let g = sys.manifold().metric_eval(x)?;
    let r = linalg::norm(&g, u);
    if r == 0.0 {
        return Ok((x.clone(), Matrix::identity(n, n)));
    }
    let e = u / r;
    let start = PhaseState {
        x: x.clone(),
        v: e.clone(),
        speed: 1.0,
    };
    let out = variational_solve(sys, &start, r, cfg)?;
    let jxv = out.jacobian.view((0, n), (n, n)).into_owned();
    // Radial part: δu ↦ g(e, δu); transverse part: (I − e eᵀg) / r.
    let ge = &g * &e;
    let radial = &out.state.v * ge.transpose();
    let transverse = (Matrix::identity(n, n) - &e * ge.transpose()) / r;
    Ok((out.state.x, radial + jxv * transverse))
}

/// `(‖X_H(x,−v) + X_H(x,v)‖_g, ‖X_V(x,−v) + X_V(x,v)‖_g)`.
pub fn oddness_residual(sys: &MagneticSystem, x: &Vector, v: &Vector) -> Result<(f64, f64)> {
    sys.oddness_residual(x, v)
}
