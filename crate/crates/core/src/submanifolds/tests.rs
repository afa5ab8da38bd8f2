use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::flow::IntegratorConfig;
use crate::magnetic::TwoFormField;

fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

fn euclid3() -> MagneticSystem {
    MagneticSystem::geodesic(Manifold::euclidean(3).unwrap())
}

fn field3(b: f64) -> MagneticSystem {
    MagneticSystem::new(
        Manifold::euclidean(3).unwrap(),
        TwoFormField::constant(3, b, (0, 1)).unwrap(),
    )
    .unwrap()
}

fn ball3() -> MagneticSystem {
    MagneticSystem::geodesic(Manifold::poincare_ball(3, 1e-3).unwrap())
}

fn plane(origin: &[f64], basis: &[&[f64]], half: f64) -> ParamSubmanifold {
    let basis: Vec<Vector> = basis.iter().map(|b| v(b)).collect();
    let region = SampleRegion::Box(vec![(-half, half); basis.len()]);
    ParamSubmanifold::affine(v(origin), basis, region).unwrap()
}

fn unit_sphere() -> ParamSubmanifold {
    ParamSubmanifold::sphere(v(&[0.0, 0.0, 0.0]), 1.0, 0.05).unwrap()
}

fn unit_tangent(local: &LocalImmersion, angle: f64) -> Vector {
    let f = local.tangent_frame();
    &f[0] * angle.cos() + &f[1] * angle.sin()
}

#[test]
fn affine_plane_is_flat() {
    let m = Manifold::euclidean(3).unwrap();
    let n = plane(&[0.1, 0.2, 0.3], &[&[1.0, 1.0, 0.0], &[0.0, 1.0, 2.0]], 1.0);
    let ii = classical_ii(
        &m,
        &n,
        &v(&[0.2, -0.4]),
        &v(&[1.0, 1.0, 0.0]),
        &v(&[0.0, 2.0, 4.0]),
    )
    .unwrap();
    assert!(ii.norm() < 1e-14);
}

#[test]
fn sphere_second_fundamental_form() {
    let m = Manifold::euclidean(3).unwrap();
    let s = unit_sphere();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let a = s.sample_parameter(&mut rng);
        let local = s.local(&m, &a).unwrap().with_hessian(&s).unwrap();
        let u = unit_tangent(&local, rng.random_range(0.0..2.0 * PI));
        let ii = local.second_fundamental_form(&u, &u).unwrap();
        assert!((ii.norm() - 1.0).abs() < 1e-10);
        // Outward normal is f(a) itself.
        assert!((ii.dot(&local.f) + 1.0).abs() < 1e-10);
    }
}

#[test]
fn ii_is_symmetric_and_normal() {
    let m = Manifold::poincare_ball(3, 1e-3).unwrap();
    let s = ParamSubmanifold::sphere(v(&[0.1, 0.0, -0.05]), 0.4, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a = s.sample_parameter(&mut rng);
        let local = s.local(&m, &a).unwrap().with_hessian(&s).unwrap();
        let u = unit_tangent(&local, rng.random_range(0.0..2.0 * PI));
        let w = unit_tangent(&local, rng.random_range(0.0..2.0 * PI));
        let uw = local.second_fundamental_form(&u, &w).unwrap();
        let wu = local.second_fundamental_form(&w, &u).unwrap();
        assert!((&uw - &wu).norm() < 1e-10);
        for e in local.tangent_frame() {
            assert!(linalg::inner(&local.g, &uw, &e).abs() < 1e-9);
        }
    }
}

#[test]
fn diameter_disk_of_ball_is_totally_geodesic() {
    let m = Manifold::poincare_ball(3, 1e-3).unwrap();
    let n = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let a = n.sample_parameter(&mut rng);
        let local = n.local(&m, &a).unwrap().with_hessian(&n).unwrap();
        let u = unit_tangent(&local, rng.random_range(0.0..2.0 * PI));
        let w = unit_tangent(&local, rng.random_range(0.0..2.0 * PI));
        assert!(linalg::norm(&local.g, &local.second_fundamental_form(&u, &w).unwrap()) < 1e-8);
    }
}

#[test]
fn rank_deficient_immersion_is_rejected() {
    let m = Manifold::euclidean(3).unwrap();
    let n = ParamSubmanifold::new(
        2,
        3,
        |a| Ok(v(&[a[0] + a[1], 0.0, 0.0])),
        SampleRegion::Box(vec![(0.0, 1.0); 2]),
    )
    .unwrap();
    assert!(matches!(
        n.local(&m, &v(&[0.5, 0.5])),
        Err(Error::RankDeficient { .. })
    ));
}

#[test]
fn dynamical_ii_examples() {
    let sys = ball3();
    let disk = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 0.6);
    let a = v(&[0.2, -0.1]);
    let local = disk
        .local(sys.manifold(), &a)
        .unwrap()
        .with_hessian(&disk)
        .unwrap();
    let val = dynamical_ii_at(&sys, &local, &unit_tangent(&local, 0.7)).unwrap();
    assert!(val.norm_squared(&local.g) < 1e-16);

    let sys = euclid3();
    let s = unit_sphere();
    let a = v(&[1.0, 0.5]);
    let local = s
        .local(sys.manifold(), &a)
        .unwrap()
        .with_hessian(&s)
        .unwrap();
    let w = unit_tangent(&local, 0.3);
    let val = dynamical_ii(&sys, &s, &a, &w).unwrap();
    assert!((&val.first - local.second_fundamental_form(&w, &w).unwrap()).norm() < 1e-12);
    assert!((val.first.norm() - 1.0).abs() < 1e-10);

    let sys = field3(1.5);
    let flat = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 3.0);
    let val = dynamical_ii(&sys, &flat, &v(&[0.3, 0.2]), &v(&[1.0, 0.0, 0.0])).unwrap();
    assert!(val.first.norm() < 1e-14 && val.second.norm() < 1e-14);
}

#[test]
fn dynamical_ii_rejects_bad_vectors() {
    let sys = euclid3();
    let s = unit_sphere();
    let a = v(&[PI / 2.0, 0.0]);
    assert!(matches!(
        dynamical_ii(&sys, &s, &a, &v(&[0.0, 2.0, 0.0])),
        Err(Error::NonUnitVector { .. })
    ));
    assert!(matches!(
        dynamical_ii(&sys, &s, &a, &v(&[1.0, 0.0, 0.0])),
        Err(Error::NotTangent { .. })
    ));
}

#[test]
fn second_component_vanishes_and_parity_splits() {
    let sys = field3(0.8);
    let s = ParamSubmanifold::sphere(v(&[0.2, 0.0, 0.1]), 1.3, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let a = s.sample_parameter(&mut rng);
        let local = s
            .local(sys.manifold(), &a)
            .unwrap()
            .with_hessian(&s)
            .unwrap();
        let w = unit_tangent(&local, rng.random_range(0.0..2.0 * PI));
        let plus = dynamical_ii_at(&sys, &local, &w).unwrap();
        let minus = dynamical_ii_at(&sys, &local, &(-&w)).unwrap();
        assert!(plus.second.norm() < 1e-12 && minus.second.norm() < 1e-12);
        let even = (&plus.first + &minus.first) * 0.5;
        let odd = (&plus.first - &minus.first) * 0.5;
        let ii = local.second_fundamental_form(&w, &w).unwrap();
        let xv = local.normal(&sys.vertical_at(&local.f, &w).unwrap());
        assert!((even - ii).norm() < 1e-12);
        assert!((odd + &xv).norm() < 1e-12);
        assert!(xv.norm() > 1e-3 || w[2].abs() > 0.9);
    }
}

#[test]
fn invariance_defect_examples() {
    let disk = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 0.6);
    assert!(invariance_defect(&ball3(), &disk, 64, 7).unwrap().sup < 1e-10);

    let r = 2.0;
    let sphere = ParamSubmanifold::sphere(v(&[0.0, 0.0, 0.0]), r, 0.05).unwrap();
    let rep = invariance_defect(&euclid3(), &sphere, 64, 7).unwrap();
    assert!((rep.sup - 1.0 / (r * r)).abs() < 1e-6);
    assert!((rep.mean - 1.0 / (r * r)).abs() < 1e-6);

    let flat = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 3.0);
    assert!(invariance_defect(&field3(1.0), &flat, 64, 7).unwrap().sup < 1e-10);
}

#[test]
fn invariance_defect_is_thread_independent() {
    let sphere = ParamSubmanifold::sphere(v(&[0.3, 0.0, 0.0]), 1.1, 0.05).unwrap();
    let sys = field3(0.7);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| invariance_defect(&sys, &sphere, 50, 11).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.sup.to_bits(), four.sup.to_bits());
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
}

#[test]
fn defect_report_serializes() {
    let rep = DefectReport {
        sup: 0.5,
        mean: 0.25,
        samples: 3,
        integral: None,
        profile: Vec::new(),
    };
    assert_eq!(
        serde_json::to_string(&rep).unwrap(),
        r#"{"sup":0.5,"mean":0.25,"samples":3}"#
    );
}

#[test]
fn consistency_examples() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let flat = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 3.0);
    let d = dynamic_consistency_check(
        &field3(1.0),
        &flat,
        &v(&[0.0, 0.0]),
        &v(&[1.0, 0.0, 0.0]),
        5.0,
        &cfg,
    )
    .unwrap();
    assert!(d < 1e-6, "{d}");

    let s = unit_sphere();
    let d = dynamic_consistency_check(
        &euclid3(),
        &s,
        &v(&[PI / 2.0, 0.0]),
        &v(&[0.0, 1.0, 0.0]),
        1.0,
        &cfg,
    )
    .unwrap();
    assert!(d > 1e-2);
    assert!((d - (2.0_f64.sqrt() - 1.0)).abs() < 1e-6, "{d}");

    let full = ParamSubmanifold::new(
        3,
        3,
        |a| Ok(a.clone()),
        SampleRegion::Box(vec![(0.0, 1.0); 3]),
    );
    assert!(matches!(full, Err(Error::BadDimension(_))));
}

#[test]
fn defect_and_consistency_agree() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let sys = field3(1.0);
    let flat = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 4.0);
    let tilted = plane(&[0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]], 4.0);
    let start = v(&[0.0, 0.0]);
    let e1 = v(&[1.0, 0.0, 0.0]);
    assert!(invariance_defect(&sys, &flat, 32, 1).unwrap().sup < 1e-8);
    assert!(dynamic_consistency_check(&sys, &flat, &start, &e1, 2.0, &cfg).unwrap() < 1e-5);
    assert!(invariance_defect(&sys, &tilted, 32, 1).unwrap().sup > 1e-8);
    assert!(dynamic_consistency_check(&sys, &tilted, &start, &e1, 2.0, &cfg).unwrap() > 1e-5);
}

#[test]
fn candidate_examples() {
    let cfg = IntegratorConfig::rk4(1e-2);
    let x = v(&[0.1, -0.2, 0.3]);
    let sys = euclid3();
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), x.clone(), v(&[1.0, 1.0, 1.0])).unwrap();
    let s = candidate_hypersurface(&sys, &pi, 1.0, 5, &cfg).unwrap();
    let basis = pi.basis(sys.manifold()).unwrap();
    let a = v(&[0.3, -0.4]);
    let expect = &x + &basis[0] * 0.3 - &basis[1] * 0.4;
    assert!((s.point(&a).unwrap() - expect).norm() < 1e-12);

    let sys = ball3();
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    let s = candidate_hypersurface(&sys, &pi, 1.0, 5, &cfg).unwrap();
    assert!(invariance_defect(&sys, &s, 32, 3).unwrap().sup < 1e-8);

    let sys = field3(1.0);
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    let s = candidate_hypersurface(&sys, &pi, 1.0, 5, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        assert!(s.point(&s.sample_parameter(&mut rng)).unwrap()[2].abs() < 1e-14);
    }
    assert!(invariance_defect(&sys, &s, 32, 3).unwrap().sup < 1e-8);
}

#[test]
fn candidate_origin_uses_exact_plane() {
    let sys = field3(1.0);
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 1.0, 1.0])).unwrap();
    let s = candidate_hypersurface(&sys, &pi, 0.5, 5, &IntegratorConfig::rk4(1e-2)).unwrap();
    let j = s.jacobian(&v(&[0.0, 0.0])).unwrap();
    let basis = pi.basis(sys.manifold()).unwrap();
    assert_eq!(j, linalg::columns(&basis));
}

#[test]
fn augmented_exp_examples() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let sys = euclid3();
    let x = v(&[0.1, 0.2, 0.3]);
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), x.clone(), v(&[0.0, 0.0, 1.0])).unwrap();
    let dir = v(&[0.6, 0.8, 0.0]);
    let (y, pushed) = augmented_exp(&sys, &pi, &dir, 0.7, &cfg).unwrap();
    assert!((y - (&x + &dir * 0.7)).norm() < 1e-12);
    assert!((pushed.normal - &pi.normal).norm() < 1e-10);

    let sys = field3(1.0);
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    for (angle, t) in [(0.0, 0.5), (1.0, 2.0), (2.5, 3.0)] {
        let dir = v(&[f64::cos(angle), f64::sin(angle), 0.0]);
        let (y, pushed) = augmented_exp(&sys, &pi, &dir, t, &cfg).unwrap();
        assert!(y[2].abs() < 1e-14);
        assert!((pushed.normal - v(&[0.0, 0.0, 1.0])).norm() < 1e-10);
    }

    let sys = ball3();
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    let dir = &v(&[1.0, 1.0, 0.0]) * (0.5 / 2.0_f64.sqrt());
    let (y, pushed) = augmented_exp(&sys, &pi, &dir, 1.2, &cfg).unwrap();
    let conformal = 2.0 / (1.0 - y.norm_squared());
    assert!((pushed.normal - v(&[0.0, 0.0, 1.0 / conformal])).norm() < 1e-6);
}

#[test]
fn augmented_exp_rejects_bad_input() {
    let cfg = IntegratorConfig::rk4(1e-3);
    let sys = euclid3();
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    assert!(matches!(
        augmented_exp(&sys, &pi, &v(&[0.0, 0.0, 1.0]), 1.0, &cfg),
        Err(Error::NotTangent { .. })
    ));
    assert!(matches!(
        augmented_exp(&sys, &pi, &v(&[2.0, 0.0, 0.0]), 1.0, &cfg),
        Err(Error::NonUnitVector { .. })
    ));
    assert!(matches!(
        augmented_exp(&sys, &pi, &v(&[1.0, 0.0, 0.0]), 0.0, &cfg),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn hyperplane_requires_unit_normal() {
    let m = Manifold::euclidean(3).unwrap();
    assert!(matches!(
        HyperplaneElement::new(&m, v(&[0.0; 3]), v(&[0.0, 0.0, 1.1])),
        Err(Error::NonUnitVector { .. })
    ));
    let pi = HyperplaneElement::new(&m, v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    let basis = pi.basis(&m).unwrap();
    assert_eq!(basis.len(), 2);
    assert!(basis.iter().all(|b| b[2].abs() < 1e-15));
}

#[test]
fn alpha_examples() {
    let cfg = AlphaConfig::with_radius(1.0, 3);
    let sys = ball3();
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 0.0, 1.0])).unwrap();
    let rep = alpha_defect(&sys, &pi, &cfg).unwrap();
    assert!(rep.integral.unwrap() < 1e-8 && rep.sup < 1e-8);
    assert_eq!(rep.profile.len(), 3);

    let sys = euclid3();
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0, 0.0, 1.0]), v(&[0.0, 0.0, 1.0]))
            .unwrap();
    assert!(alpha_defect(&sys, &pi, &cfg).unwrap().sup < 1e-12);

    let sys = field3(1.0);
    let pi =
        HyperplaneElement::from_normal(sys.manifold(), v(&[0.0; 3]), v(&[0.0, 1.0, 0.0])).unwrap();
    let rep = alpha_defect(&sys, &pi, &cfg).unwrap();
    assert!(rep.integral.unwrap() > 1e-2, "{rep:?}");
}

#[test]
fn cartan_probe_examples() {
    let cfg = CartanConfig::default();
    for sys in [
        MagneticSystem::geodesic(Manifold::round_sphere_stereographic(3, 1.0).unwrap()),
        ball3(),
    ] {
        let rep = cartan_probe(&sys, 2, 12, 9, &cfg).unwrap();
        assert!(rep.planes.iter().all(|p| p.defect < 1e-6), "{rep:?}");
        assert_eq!(rep.invariant_fraction, 1.0);
        assert!(rep.curvature_variance < 1e-8);
        assert_eq!(rep.verdict, VERDICT_CONSISTENT);
    }
    let rep = cartan_probe(&field3(1.0), 2, 12, 9, &cfg).unwrap();
    assert!(rep.planes.iter().any(|p| p.defect > 1e-3));
    assert_eq!(rep.verdict, VERDICT_CONSISTENT);

    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("plane,defect,sectional,sec_variance\n"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn cartan_probe_dimension_guard() {
    let cfg = CartanConfig::default();
    assert!(matches!(
        cartan_probe(&euclid3(), 1, 4, 0, &cfg),
        Err(Error::BadDimension(_))
    ));
    assert!(matches!(
        cartan_probe(&euclid3(), 3, 4, 0, &cfg),
        Err(Error::BadDimension(_))
    ));
}
