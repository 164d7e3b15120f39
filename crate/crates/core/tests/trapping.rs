use kerr_core::geodesics::{circular_orbit_constants, classify_radial_potential, PotentialCase};
use kerr_core::geometry::KerrParams;
use kerr_core::symbolcheck::principal_symbol;
use kerr_core::trapping::*;
use kerr_core::Error;
use proptest::prelude::*;

fn scaled_residual(p: &KerrParams, r: f64, tau: f64, phi: f64) -> f64 {
    r_polynomial(p, r, tau, phi).abs() / (tau * tau * (3.0 * p.mass()).powi(5))
}

#[test]
fn sweep_stays_near_the_photon_sphere() {
    for a in [0.01, 0.05, 0.1, 0.2] {
        let p = KerrParams::new(1.0, a).unwrap();
        let table = trapped_set_table(&p, 401).unwrap();
        for row in &table {
            let r = row[2];
            assert!((r - 3.0).abs() <= 2.0 * a, "a={a} ratio={} r_a={r}", row[1]);
            assert!(scaled_residual(&p, r, 1.0, row[1]) < 1e-12);
            assert!((row[3] - (r - 3.0) / a).abs() < 1e-12);
        }
    }
}

#[test]
fn root_is_the_circular_photon_orbit() {
    // a ray with the circular constants has a double root at r, and its
    // covector (τ = −E, Φ = L) puts r_a at the same radius
    for a in [0.02, 0.05, 0.1] {
        let p = KerrParams::new(1.0, a).unwrap();
        for r in [2.96, 3.0, 3.03] {
            let Ok(c) = circular_orbit_constants(&p, r) else { continue };
            let cls = classify_radial_potential(&p, &c).unwrap();
            assert_eq!(cls.case, PotentialCase::B3DoubleRoot);
            let root = trapped_radius(&p, -c.energy, c.angular_momentum).unwrap();
            assert!((root.r_a - r).abs() < 1e-8, "a={a} r={r}: {}", root.r_a);
        }
    }
}

#[test]
fn characteristic_set_exceeds_the_cone_at_three_m() {
    // on {p = 0, ξ = 0} at r = 3M the ratio |Φ/τ| reaches 3√3 M in the
    // equatorial plane, so the cone |Φ| ≤ 4M|τ| cuts out part of the set
    let s = KerrParams::schwarzschild(1.0);
    let (t1, _) = tau_roots(&s, 3.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0, 1.0).unwrap();
    assert!((1.0 / t1.abs() - 27f64.sqrt()).abs() < 1e-12);
    assert!(1.0 / t1.abs() > CONE_RATIO);
    assert!(matches!(trapped_radius(&s, t1, 1.0), Err(Error::FrequencyCone { .. })));
}

#[test]
fn zero_covector_and_cone_errors() {
    let p = KerrParams::new(1.0, 0.05).unwrap();
    assert!(matches!(tau_roots(&p, 3.0, 1.0, 0.0, 0.0, 0.0), Err(Error::InvalidParams(_))));
    assert!(matches!(trapped_radius(&p, 1.0, -4.01), Err(Error::FrequencyCone { .. })));
}

#[test]
fn trapped_condition_marks_a_band_around_three_m() {
    let p = KerrParams::new(1.0, 0.1).unwrap();
    let theta = std::f64::consts::FRAC_PI_2;
    let inside: Vec<f64> = (0..2001)
        .map(|k| 2.5 + k as f64 * 5e-4)
        .filter(|&r| trapped_condition(&p, r, theta).0)
        .collect();
    let (lo, hi) = (inside[0], *inside.last().unwrap());
    assert!(lo < 3.0 && hi > 3.0);
    assert!(3.0 - lo <= 0.2 && hi - 3.0 <= 0.2);
    // on the axis the band shrinks to at most a single sampled radius
    let on_axis = (0..2001).filter(|&k| trapped_condition(&p, 2.5 + k as f64 * 5e-4, 0.0).0).count();
    assert!(on_axis <= 1);
}

proptest! {
    #[test]
    fn bound_and_residual(a in 0.001f64..0.2, ratio in -4.0f64..4.0, tau in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0]) {
        let p = KerrParams::new(1.0, a).unwrap();
        let root = trapped_radius(&p, tau, ratio * tau.abs()).unwrap();
        prop_assert!((root.r_a - 3.0).abs() <= 2.0 * a);
        prop_assert!(scaled_residual(&p, root.r_a, tau, ratio * tau.abs()) < 1e-12);
    }

    #[test]
    fn tau_roots_solve_the_symbol(a in 0.0f64..0.2, r in 2.5f64..3.5, theta in 0.1f64..3.0,
                                  xi in -2.0f64..2.0, big_theta in -2.0f64..2.0, phi in -3.0f64..3.0) {
        prop_assume!(xi.abs() + big_theta.abs() + phi.abs() > 1e-3);
        let p = KerrParams::new(1.0, a).unwrap();
        let (t1, t2) = tau_roots(&p, r, theta, xi, big_theta, phi).unwrap();
        prop_assert!(t1 > t2);
        let scale = xi * xi + big_theta * big_theta + phi * phi;
        for t in [t1, t2] {
            let v = principal_symbol(&p, r, theta, t, xi, big_theta, phi).unwrap();
            prop_assert!(v.abs() < 1e-12 * scale, "p = {v}");
        }
    }

    #[test]
    fn homogeneous_of_degree_zero(a in 0.01f64..0.2, ratio in -4.0f64..4.0, lambda in 0.1f64..10.0) {
        let p = KerrParams::new(1.0, a).unwrap();
        let r1 = trapped_radius(&p, 1.0, ratio).unwrap().r_a;
        let r2 = trapped_radius(&p, lambda, lambda * ratio).unwrap().r_a;
        prop_assert!((r1 - r2).abs() < 1e-12);
    }
}
