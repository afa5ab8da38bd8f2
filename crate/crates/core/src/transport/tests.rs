use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::flow::{integrate, Method};
use crate::geometry::Manifold;
use crate::magnetic::TwoFormField;
use crate::sampling::gaussian_vector;

fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

fn planar(b: f64) -> MagneticSystem {
    MagneticSystem::new(
        Manifold::euclidean(2).unwrap(),
        TwoFormField::constant(2, b, (0, 1)).unwrap(),
    )
    .unwrap()
}

fn field3(b: f64) -> MagneticSystem {
    MagneticSystem::new(
        Manifold::euclidean(3).unwrap(),
        TwoFormField::constant(3, b, (0, 1)).unwrap(),
    )
    .unwrap()
}

fn disk_magnetic(b: f64) -> MagneticSystem {
    let m = Manifold::poincare_disk(1e-3).unwrap();
    let sigma = TwoFormField::area_form(&m, b).unwrap();
    MagneticSystem::new(m, sigma).unwrap()
}

#[test]
fn covariant_derivative_of_velocity_vanishes() {
    let cfg = IntegratorConfig::rk4(1e-3);
    for sys in [planar(1.3), disk_magnetic(0.7)] {
        let s0 = PhaseState::new(&sys, v(&[0.1, -0.2]), v(&[0.2, 0.1])).unwrap();
        let traj = integrate(&sys, &s0, 3.0, &cfg).unwrap();
        let w: Vec<Vector> = traj.states.iter().map(|s| s.v.clone()).collect();
        let d = magnetic_covariant_derivative(&sys, &traj, &w).unwrap();
        let worst = d.iter().map(|x| x.norm()).fold(0.0_f64, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }
}

#[test]
fn covariant_derivative_hand_values() {
    let cfg = IntegratorConfig::rk4(1e-2);
    let free = MagneticSystem::geodesic(Manifold::euclidean(2).unwrap());
    let s0 = PhaseState::new(&free, v(&[0.0, 0.0]), v(&[1.0, 2.0])).unwrap();
    let traj = integrate(&free, &s0, 1.0, &cfg).unwrap();
    let w = vec![v(&[0.3, -0.7]); traj.states.len()];
    assert!(magnetic_covariant_derivative(&free, &traj, &w)
        .unwrap()
        .iter()
        .all(|d| d.norm() < 1e-12));

    let sys = planar(1.0);
    let s0 = PhaseState::new(&sys, v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
    let traj = integrate(&sys, &s0, 1.0, &cfg).unwrap();
    let w = vec![v(&[1.0, 0.0]); traj.states.len()];
    for d in magnetic_covariant_derivative(&sys, &traj, &w).unwrap() {
        assert!((d - v(&[0.0, -1.0])).norm() < 1e-12);
    }
}

#[test]
fn covariant_derivative_grid_checks() {
    let sys = planar(1.0);
    let s0 = PhaseState::new(&sys, v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
    let traj = integrate(&sys, &s0, 1.0, &IntegratorConfig::rk4(0.1)).unwrap();
    let short = vec![v(&[1.0, 0.0]); traj.states.len() - 1];
    assert!(matches!(
        magnetic_covariant_derivative(&sys, &traj, &short),
        Err(Error::GridMismatch(_))
    ));
    let mut skewed = traj.clone();
    skewed.times[3] += 0.01;
    let w = vec![v(&[1.0, 0.0]); traj.states.len()];
    assert!(matches!(
        magnetic_covariant_derivative(&sys, &skewed, &w),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn stencil_is_fourth_order_at_every_node() {
    // W(t) = (sin t, cos 2t) along the free line: 𝒟W = Ẇ exactly.
    let free = MagneticSystem::geodesic(Manifold::euclidean(2).unwrap());
    let s0 = PhaseState::new(&free, v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
    let err = |h: f64| {
        let traj = integrate(&free, &s0, 1.0, &IntegratorConfig::rk4(h)).unwrap();
        let w: Vec<Vector> = traj
            .times
            .iter()
            .map(|t| v(&[t.sin(), (2.0 * t).cos()]))
            .collect();
        let d = magnetic_covariant_derivative(&free, &traj, &w).unwrap();
        traj.times
            .iter()
            .zip(&d)
            .map(|(t, di)| (di - v(&[t.cos(), -2.0 * (2.0 * t).sin()])).norm())
            .fold(0.0_f64, f64::max)
    };
    let ratio = err(0.02) / err(0.01);
    assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
}

#[test]
fn transport_examples() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let sys = disk_magnetic(0.8);
    let s0 = PhaseState::new(&sys, v(&[0.2, 0.1]), v(&[0.1, 0.3])).unwrap();
    let w = parallel_transport(&sys, &s0, &s0.v, 2.0, &cfg).unwrap();
    let end = crate::flow::flow_to(&sys, &s0, 2.0, &cfg).unwrap();
    assert!((w - end.v).norm() < 1e-8);

    let free = MagneticSystem::geodesic(Manifold::euclidean(2).unwrap());
    let s0 = PhaseState::new(&free, v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
    let w0 = v(&[0.4, -1.2]);
    assert!((parallel_transport(&free, &s0, &w0, 3.0, &cfg).unwrap() - &w0).norm() < 1e-14);

    // Ẇ = Y W with Y = b·rot(π/2): rotation by angle b t.
    let b = 1.7;
    let sys = planar(b);
    let s0 = PhaseState::new(&sys, v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
    let w0 = v(&[0.3, 0.5]);
    let t = 2.3;
    let (c, s) = ((b * t).cos(), (b * t).sin());
    let expect = v(&[c * w0[0] - s * w0[1], s * w0[0] + c * w0[1]]);
    assert!((parallel_transport(&sys, &s0, &w0, t, &cfg).unwrap() - expect).norm() < 1e-10);
}

#[test]
fn transport_is_metric_compatible() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let sys = disk_magnetic(1.2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s0 = PhaseState::normalized(&sys, v(&[0.1, 0.05]), v(&[1.0, 0.4]), 1.0).unwrap();
    let w0 = gaussian_vector(&mut rng, 2);
    let u0 = gaussian_vector(&mut rng, 2);
    let path = transport_path(&sys, &s0, &[w0.clone(), u0.clone()], 10.0, &cfg).unwrap();
    let m = sys.manifold();
    let g0 = m.metric_eval(&s0.x).unwrap();
    let want = [linalg::inner(&g0, &w0, &u0), linalg::inner(&g0, &w0, &w0)];
    for (s, ws) in path.trajectory.states.iter().zip(&path.vectors) {
        let g = m.metric_eval(&s.x).unwrap();
        assert!((linalg::inner(&g, &ws[0], &ws[1]) - want[0]).abs() < 1e-9);
        assert!((linalg::inner(&g, &ws[0], &ws[0]) - want[1]).abs() < 1e-9);
    }
}

#[test]
fn frame_flow_examples() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let torus = MagneticSystem::geodesic(Manifold::flat_torus(vec![1.0, 2.0, 3.0]).unwrap());
    let f0 = FrameState::complete(&torus, v(&[0.1, 0.2, 0.3]), v(&[1.0, 2.0, -1.0])).unwrap();
    let f1 = frame_flow(&torus, &f0, 4.0, &cfg).unwrap();
    for (a, b) in f0.frame.iter().zip(&f1.frame) {
        assert!((a - b).norm() < 1e-14);
    }

    let b = 1.5;
    let sys = field3(b);
    let e = |i: usize| Vector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 });
    let state = PhaseState::new(&sys, Vector::zeros(3), e(0)).unwrap();
    let f0 = FrameState::new(&sys, state, vec![e(1), e(2)]).unwrap();
    let f1 = frame_flow(&sys, &f0, 2.0 * PI / b, &cfg).unwrap();
    assert!(f1.state.x.norm() < 1e-9);
    assert!((&f1.state.v - e(0)).norm() < 1e-9);
    assert!((&f1.frame[0] - e(1)).norm() < 1e-9);
    assert!((&f1.frame[1] - e(2)).norm() < 1e-14);

    // Unit-speed geodesics reach hyperbolic distance 10, i.e. |x| ≈ tanh 5.
    let disk = MagneticSystem::geodesic(Manifold::poincare_disk(1e-6).unwrap());
    let f0 = FrameState::complete(&disk, v(&[0.0, 0.0]), v(&[1.0, 0.5])).unwrap();
    let path = transport_path(&disk, &f0.state, &f0.frame, 10.0, &cfg).unwrap();
    for (s, fr) in path.trajectory.states.iter().zip(&path.vectors) {
        let fs = FrameState {
            state: s.clone(),
            frame: fr.clone(),
        };
        assert!(fs.gram_residual(&disk).unwrap() < 1e-9);
    }
}

#[test]
fn frame_state_validation() {
    let sys = field3(1.0);
    let state = PhaseState::new(&sys, Vector::zeros(3), v(&[2.0, 0.0, 0.0])).unwrap();
    let frame = vec![v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])];
    assert!(matches!(
        FrameState::new(&sys, state, frame.clone()),
        Err(Error::NonUnitVector { .. })
    ));
    let state = PhaseState::new(&sys, Vector::zeros(3), v(&[1.0, 0.0, 0.0])).unwrap();
    let skew = vec![v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.1, 1.0])];
    assert!(matches!(
        FrameState::new(&sys, state, skew),
        Err(Error::NonOrthonormalFrame { .. })
    ));
}

#[test]
fn frame_flow_reproduces_base_orbit() {
    let sys = disk_magnetic(0.9);
    let f0 = FrameState::complete(&sys, v(&[0.2, 0.3]), v(&[-0.3, 1.0])).unwrap();
    for cfg in [
        IntegratorConfig::rk4(1e-2),
        IntegratorConfig::rk45(1e-9, 1e-11),
        {
            let mut c = IntegratorConfig::rk4(1e-2);
            c.renormalize_speed = true;
            c
        },
    ] {
        let base = integrate(&sys, &f0.state, 3.0, &cfg).unwrap();
        let path = transport_path(&sys, &f0.state, &f0.frame, 3.0, &cfg).unwrap();
        assert_eq!(base.times, path.trajectory.times, "{:?}", cfg.method);
        assert_eq!(base.states, path.trajectory.states);
    }
    assert_ne!(Method::Rk4, Method::Rk45);
}

#[test]
fn domain_exit_is_an_error() {
    let sys = MagneticSystem::geodesic(Manifold::poincare_disk(1e-3).unwrap());
    let s0 = PhaseState::new(&sys, v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
    let r = parallel_transport(
        &sys,
        &s0,
        &v(&[0.0, 1.0]),
        20.0,
        &IntegratorConfig::rk4(1e-2),
    );
    assert!(matches!(r, Err(Error::DomainExit { .. })));
}

#[test]
fn holonomy_examples() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let b = 1.0;
    let sys = field3(b);
    let s0 = PhaseState::new(&sys, Vector::zeros(3), v(&[1.0, 0.0, 0.0])).unwrap();
    let hol = closed_orbit_holonomy(&sys, &s0, 2.0 * PI / b * 1.03, &cfg).unwrap();
    assert!((hol.period - 2.0 * PI / b).abs() < 1e-6);
    assert!((&hol.matrix - Matrix::identity(2, 2)).amax() < 1e-6);
    assert!(hol.orthogonality_residual() < 1e-8 && (hol.determinant() - 1.0).abs() < 1e-8);

    let torus = MagneticSystem::geodesic(Manifold::flat_torus(vec![1.0, 2.0, 1.5]).unwrap());
    let s0 = PhaseState::new(&torus, v(&[0.1, 0.2, 0.3]), v(&[0.0, 1.0, 0.0])).unwrap();
    let hol = closed_orbit_holonomy(&torus, &s0, 1.9, &cfg).unwrap();
    assert!((hol.period - 2.0).abs() < 1e-6);
    assert!((&hol.matrix - Matrix::identity(2, 2)).amax() < 1e-10);

    let sys = disk_magnetic(2.0);
    let s0 = PhaseState::new(&sys, v(&[0.0, 0.0]), v(&[0.5, 0.0])).unwrap();
    // Unit speed with b = 2 on the disk gives a closed circle of period 2π/√3.
    let hol = closed_orbit_holonomy(&sys, &s0, 3.5, &cfg).unwrap();
    assert!((hol.period - 2.0 * PI / 3.0_f64.sqrt()).abs() < 1e-6);
    assert_eq!(hol.matrix.shape(), (1, 1));
    assert!((hol.matrix[(0, 0)] - 1.0).abs() < 1e-9);
}

#[test]
fn non_closed_orbit_is_rejected() {
    let sys = MagneticSystem::geodesic(Manifold::euclidean(3).unwrap());
    let s0 = PhaseState::new(&sys, Vector::zeros(3), v(&[1.0, 0.0, 0.0])).unwrap();
    let r = closed_orbit_holonomy(&sys, &s0, 1.0, &IntegratorConfig::rk4(1e-2));
    assert!(matches!(r, Err(Error::NotPeriodic { .. })));
}

#[test]
fn holonomy_csv_layout() {
    let sys = field3(1.0);
    let s0 = PhaseState::new(&sys, Vector::zeros(3), v(&[1.0, 0.0, 0.0])).unwrap();
    let hol = closed_orbit_holonomy(&sys, &s0, 6.2, &IntegratorConfig::rk4(1e-3)).unwrap();
    let mut out = Vec::new();
    hol.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# period="));
    assert_eq!(lines.iter().filter(|l| l.starts_with('#')).count(), 4);
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[4].split(',').count(), 2);
}
