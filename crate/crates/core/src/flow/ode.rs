//! Explicit Runge–Kutta drivers for autonomous systems `y' = f(y)`.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fixed-step RK4.
    Rk4,
    /// Dormand–Prince 5(4) with step-size control.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Rescale `v` to its nominal g-norm after every step.
    pub renormalize_speed: bool,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            step: 1e-3,
            rtol: 1e-10,
            atol: 1e-12,
            renormalize_speed: false,
            max_steps: 100_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            step,
            ..Default::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45,
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "integrator.step must be positive, got {}",
                self.step
            )));
        }
        if self.method == Method::Rk45 && !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidConfig(
                "integrator.rtol and integrator.atol must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig(
                "integrator.max_steps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of equal RK4 steps used to cover `horizon`.
    pub fn fixed_steps(&self, horizon: f64) -> usize {
        ((horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub y: Vector,
    pub steps: usize,
    /// Time of the last accepted state before the orbit left the domain.
    pub exit: Option<f64>,
}

enum Eval {
    Ok(Vector),
    Exit,
}

fn eval<F>(rhs: &mut F, y: &Vector) -> Result<Eval>
where
    F: FnMut(&Vector) -> Result<Vector>,
{
    if y.iter().any(|c| !c.is_finite()) {
        return Ok(Eval::Exit);
    }
    match rhs(y) {
        Ok(d) if d.iter().all(|c| c.is_finite()) => Ok(Eval::Ok(d)),
        Ok(_) | Err(Error::DomainViolation { .. }) => Ok(Eval::Exit),
        Err(e) => Err(e),
    }
}

macro_rules! try_eval {
    ($rhs:expr, $y:expr, $t:expr, $steps:expr, $y0:expr) => {
        match eval($rhs, $y)? {
            Eval::Ok(d) => d,
            Eval::Exit => {
                return Ok(Solution {
                    y: $y0,
                    steps: $steps,
                    exit: Some($t),
                })
            }
        }
    };
}

/// Integrates `y' = rhs(y)` from `t = 0` to `horizon`.
///
/// `post` may adjust each accepted state (speed renormalization, chart
/// recentring); `observe` sees `t = 0` and every accepted state.
pub(crate) fn solve<F, P, O>(
    rhs: F,
    y0: Vector,
    horizon: f64,
    cfg: &IntegratorConfig,
    post: P,
    observe: O,
) -> Result<Solution>
where
    F: FnMut(&Vector) -> Result<Vector>,
    P: FnMut(&mut Vector),
    O: FnMut(f64, &Vector),
{
    let control = y0.len();
    solve_controlled(rhs, y0, horizon, cfg, control, post, observe)
}

/// Like [`solve`], with adaptive error control restricted to the first
/// `control` components. Appending passive components then leaves the
/// leading ones unchanged bit for bit.
pub(crate) fn solve_controlled<F, P, O>(
    mut rhs: F,
    y0: Vector,
    horizon: f64,
    cfg: &IntegratorConfig,
    control: usize,
    mut post: P,
    mut observe: O,
) -> Result<Solution>
where
    F: FnMut(&Vector) -> Result<Vector>,
    P: FnMut(&mut Vector),
    O: FnMut(f64, &Vector),
{
    cfg.validate()?;
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "horizon must be finite and nonnegative, got {horizon}"
        )));
    }
    observe(0.0, &y0);
    if horizon == 0.0 {
        return Ok(Solution {
            y: y0,
            steps: 0,
            exit: None,
        });
    }
    match cfg.method {
        Method::Rk4 => rk4(&mut rhs, y0, horizon, cfg, &mut post, &mut observe),
        Method::Rk45 => {
            let control = control.min(y0.len());
            rk45(&mut rhs, y0, horizon, cfg, control, &mut post, &mut observe)
        }
    }
}

fn rk4<F, P, O>(
    rhs: &mut F,
    mut y: Vector,
    horizon: f64,
    cfg: &IntegratorConfig,
    post: &mut P,
    observe: &mut O,
) -> Result<Solution>
where
    F: FnMut(&Vector) -> Result<Vector>,
    P: FnMut(&mut Vector),
    O: FnMut(f64, &Vector),
{
    let n = cfg.fixed_steps(horizon);
    if n > cfg.max_steps {
        return Err(Error::StepLimitExceeded {
            max_steps: cfg.max_steps,
        });
    }
    let h = horizon / n as f64;
    let mut t = 0.0;
    let mut k1 = try_eval!(rhs, &y, t, 0, y);
    for step in 0..n {
        let k2 = try_eval!(rhs, &(&y + &k1 * (0.5 * h)), t, step, y);
        let k3 = try_eval!(rhs, &(&y + &k2 * (0.5 * h)), t, step, y);
        let k4 = try_eval!(rhs, &(&y + &k3 * h), t, step, y);
        let mut next = &y + (&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        post(&mut next);
        k1 = match eval(rhs, &next)? {
            Eval::Ok(d) => d,
            Eval::Exit => {
                return Ok(Solution {
                    y,
                    steps: step,
                    exit: Some(t),
                })
            }
        };
        y = next;
        t = if step + 1 == n {
            horizon
        } else {
            (step + 1) as f64 * h
        };
        observe(t, &y);
    }
    Ok(Solution {
        y,
        steps: n,
        exit: None,
    })
}

// Dormand–Prince tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rk45<F, P, O>(
    rhs: &mut F,
    mut y: Vector,
    horizon: f64,
    cfg: &IntegratorConfig,
    control: usize,
    post: &mut P,
    observe: &mut O,
) -> Result<Solution>
where
    F: FnMut(&Vector) -> Result<Vector>,
    P: FnMut(&mut Vector),
    O: FnMut(f64, &Vector),
{
    let mut t = 0.0;
    let mut h = cfg.step.min(horizon);
    let mut steps = 0;
    let mut attempts = 0;
    let mut k0 = try_eval!(rhs, &y, t, steps, y);
    while t < horizon {
        attempts += 1;
        if attempts > cfg.max_steps {
            return Err(Error::StepLimitExceeded {
                max_steps: cfg.max_steps,
            });
        }
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }
        let mut k: Vec<Vector> = Vec::with_capacity(7);
        k.push(k0.clone());
        let mut stage_failed = false;
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            match eval(rhs, &ys)? {
                Eval::Ok(d) => k.push(d),
                Eval::Exit => {
                    stage_failed = true;
                    break;
                }
            }
        }
        if stage_failed {
            // Shrink toward the boundary before declaring an exit.
            h *= 0.25;
            if h < 1e-12 * horizon.max(1.0) {
                return Ok(Solution {
                    y,
                    steps,
                    exit: Some(t),
                });
            }
            continue;
        }
        let mut y5 = y.clone();
        let mut err = Vector::zeros(y.len());
        for s in 0..7 {
            if B5[s] != 0.0 {
                y5.axpy(h * B5[s], &k[s], 1.0);
            }
            err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
        }
        let mut ratio = 0.0_f64;
        for i in 0..control {
            let scale = cfg.atol + cfg.rtol * y[i].abs().max(y5[i].abs());
            ratio = ratio.max(err[i].abs() / scale);
        }
        if ratio <= 1.0 {
            post(&mut y5);
            let next_k0 = match eval(rhs, &y5)? {
                Eval::Ok(d) => d,
                Eval::Exit => {
                    return Ok(Solution {
                        y,
                        steps,
                        exit: Some(t),
                    })
                }
            };
            t = if last { horizon } else { t + h };
            y = y5;
            k0 = next_k0;
            steps += 1;
            observe(t, &y);
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(Solution {
        y,
        steps,
        exit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(y: &Vector) -> Result<Vector> {
        Ok(Vector::from_vec(vec![y[1], -y[0]]))
    }

    #[test]
    fn rk4_harmonic_oscillator_is_fourth_order() {
        let y0 = Vector::from_vec(vec![1.0, 0.0]);
        let err = |h: f64| {
            let s = solve(
                harmonic,
                y0.clone(),
                5.0,
                &IntegratorConfig::rk4(h),
                |_| {},
                |_, _| {},
            )
            .unwrap();
            (s.y[0] - 5.0_f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_lands_on_the_horizon() {
        let mut times = Vec::new();
        let s = solve(
            harmonic,
            Vector::from_vec(vec![1.0, 0.0]),
            1.0,
            &IntegratorConfig::rk4(0.3),
            |_| {},
            |t, _| times.push(t),
        )
        .unwrap();
        assert_eq!(s.steps, 4);
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), 1.0);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rk45_meets_tolerance() {
        let y0 = Vector::from_vec(vec![1.0, 0.0]);
        let mut last = 0.0;
        let s = solve(
            harmonic,
            y0,
            10.0,
            &IntegratorConfig::rk45(1e-11, 1e-13),
            |_| {},
            |t, _| last = t,
        )
        .unwrap();
        assert_eq!(last, 10.0);
        assert!((s.y[0] - 10.0_f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn domain_exit_returns_last_good_state() {
        let rhs = |y: &Vector| {
            if y[0] > 1.0 {
                Err(Error::DomainViolation {
                    point: y.as_slice().to_vec(),
                })
            } else {
                Ok(Vector::from_vec(vec![1.0]))
            }
        };
        for cfg in [
            IntegratorConfig::rk4(0.01),
            IntegratorConfig::rk45(1e-8, 1e-10),
        ] {
            let s = solve(
                rhs,
                Vector::from_vec(vec![0.0]),
                3.0,
                &cfg,
                |_| {},
                |_, _| {},
            )
            .unwrap();
            let exit = s.exit.unwrap();
            assert!(exit <= 1.0 + 1e-9 && exit > 0.9, "{exit}");
            assert!(s.y[0] <= 1.0);
        }
    }

    #[test]
    fn step_limit() {
        let cfg = IntegratorConfig {
            max_steps: 10,
            ..IntegratorConfig::rk4(0.01)
        };
        assert!(matches!(
            solve(
                harmonic,
                Vector::from_vec(vec![1.0, 0.0]),
                1.0,
                &cfg,
                |_| {},
                |_, _| {}
            ),
            Err(Error::StepLimitExceeded { max_steps: 10 })
        ));
    }

    #[test]
    fn invalid_step_is_rejected() {
        assert!(IntegratorConfig::rk4(0.0).validate().is_err());
        assert!(IntegratorConfig::rk4(-1.0).validate().is_err());
    }
}
