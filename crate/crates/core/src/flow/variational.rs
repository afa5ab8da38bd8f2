use crate::error::{Error, Result};
use crate::flow::{phase_rhs, solve, IntegratorConfig, PhaseState};
use crate::linalg::{Matrix, Vector};
use crate::magnetic::{lorentz_gradient_with, lorentz_with, MagneticSystem, VerticalField};

const FD_STEP: f64 = 1e-6;

/// `Df` at `(x, v)`: the Jacobian of `(v, −Γ(v, v) + X_V)` with respect to `(x, v)`.
///
/// The geodesic part and the Lorentz term are differentiated analytically
/// (through the configured derivative schemes); custom vertical fields use
/// central differences.
pub fn generator_jacobian(sys: &MagneticSystem, x: &Vector, v: &Vector) -> Result<Matrix> {
    let n = sys.dim();
    let p = sys.manifold().point(x, true)?;
    let dgamma = p.dgamma.as_ref().expect("second-order point geometry");
    let mut df = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        df[(i, n + i)] = 1.0;
    }
    let mut dvx = Matrix::zeros(n, n);
    for k in 0..n {
        dvx.set_column(k, &(-dgamma.contract(k, v, v)));
    }
    let mut dvv = p.gamma.along(v) * -2.0;
    match sys.vertical() {
        VerticalField::Lorentz => {
            let y = lorentz_with(&p.ginv, &sys.sigma().value(x)).matrix;
            let dy = lorentz_gradient_with(&p.ginv, &p.dg, &y, &sys.sigma().gradient(x)?)?;
            for (k, dyk) in dy.iter().enumerate() {
                let col = dvx.column(k) + dyk * v;
                dvx.set_column(k, &col);
            }
            dvv += y;
        }
        VerticalField::Custom(f) => {
            for k in 0..n {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += FD_STEP;
                xm[k] -= FD_STEP;
                let col = dvx.column(k) + (f(&xp, v) - f(&xm, v)) / (2.0 * FD_STEP);
                dvx.set_column(k, &col);
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[k] += FD_STEP;
                vm[k] -= FD_STEP;
                let col = dvv.column(k) + (f(x, &vp) - f(x, &vm)) / (2.0 * FD_STEP);
                dvv.set_column(k, &col);
            }
        }
    }
    df.view_mut((n, 0), (n, n)).copy_from(&dvx);
    df.view_mut((n, n), (n, n)).copy_from(&dvv);
    Ok(df)
}

#[derive(Debug, Clone)]
pub struct VariationalOutcome {
    /// `φ^T(state)`.
    pub state: PhaseState,
    /// `dφ^T` in chart coordinates `(δx, δv)`.
    pub jacobian: Matrix,
}

/// Integrates the base orbit together with `J̇ = Df J`, `J(0) = I`.
///
/// Speed renormalization is never applied here, since it would break the
/// linearization.
pub fn variational_solve(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<VariationalOutcome> {
    sys.manifold().chart().check(&state.x)?;
    let n = sys.dim();
    let m = 2 * n;
    let mut y0 = Vector::zeros(m + m * m);
    y0.rows_mut(0, m).copy_from(&state.pack());
    for i in 0..m {
        y0[m + i * m + i] = 1.0;
    }
    let rhs = |y: &Vector| -> Result<Vector> {
        let base = y.rows(0, m).into_owned();
        let x = base.rows(0, n).into_owned();
        let v = base.rows(n, n).into_owned();
        let f = phase_rhs(sys, &base)?;
        let df = generator_jacobian(sys, &x, &v)?;
        let j = Matrix::from_column_slice(m, m, &y.as_slice()[m..]);
        let dj = df * j;
        let mut out = Vector::zeros(m + m * m);
        out.rows_mut(0, m).copy_from(&f);
        out.as_mut_slice()[m..].copy_from_slice(dj.as_slice());
        Ok(out)
    };
    let sol = solve(rhs, y0, horizon, cfg, |_| {}, |_, _| {})?;
    if let Some(time) = sol.exit {
        return Err(Error::DomainExit { time });
    }
    let base = sol.y.rows(0, m).into_owned();
    Ok(VariationalOutcome {
        state: PhaseState::unpack(&base, n, state.speed),
        jacobian: Matrix::from_column_slice(m, m, &sol.y.as_slice()[m..]),
    })
}

/// `J = dφ^T` at `state`.
pub fn variational_flow(
    sys: &MagneticSystem,
    state: &PhaseState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Matrix> {
    Ok(variational_solve(sys, state, horizon, cfg)?.jacobian)
}
