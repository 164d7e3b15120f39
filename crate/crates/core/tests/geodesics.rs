use kerr_core::geodesics::*;
use kerr_core::geometry::KerrParams;
use kerr_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

fn random_constants(rng: &mut ChaCha8Rng, a: f64) -> ConservedSet {
    let e = 1.0;
    let l: f64 = rng.gen_range(-7.0..7.0);
    // Θ² = K − (L − aE)² ≥ 0 on the equator
    let k = (l - a * e).powi(2) + rng.gen_range(0.0..40.0);
    ConservedSet::new(e, l, k)
}

#[test]
fn random_sets_classify() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut seen = [0usize; 4];
    for a in [0.0, 0.05, 0.1] {
        let p = KerrParams::new(1.0, a).unwrap();
        for _ in 0..1000 {
            let c = random_constants(&mut rng, a);
            let cls = classify_radial_potential(&p, &c).unwrap();
            seen[cls.case as usize] += 1;
            for root in &cls.roots {
                assert!(root.r >= p.r_plus() - 1e-9);
                let scale = 1.0 + c.carter * p.delta(root.r).abs() + radial_potential(&p, &ConservedSet::new(c.energy, c.angular_momentum, 0.0), root.r);
                assert!(radial_potential(&p, &c, root.r).abs() < 1e-8 * scale);
            }
        }
    }
    assert!(seen[PotentialCase::B1Monotone as usize] > 0);
    assert!(seen[PotentialCase::B2TwoRoots as usize] > 0);
}

#[test]
fn non_trapped_rays_are_eventually_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = KerrParams::new(1.0, 0.05).unwrap();
    let mut integrated = 0;
    while integrated < 25 {
        let c = random_constants(&mut rng, p.spin());
        let cls = classify_radial_potential(&p, &c).unwrap();
        if cls.case == PotentialCase::B3DoubleRoot {
            continue;
        }
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let start = match PhasePoint::from_constants(&p, 0.0, 12.0, FRAC_PI_2, 0.0, &c, sign, 1.0) {
            Ok(s) => s,
            Err(Error::ForbiddenStart(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        let rec = integrate_null_geodesic(&p, &start, &c, 3000.0, 1e-9).unwrap();
        assert!(rec.radial_turning_points() <= 1, "{:?} turned {} times", cls.case, rec.radial_turning_points());
        assert_ne!(rec.termination, Termination::Completed, "{:?} {:?}", cls.case, c);
        assert!(!conserved_drift(&rec).flagged);
        integrated += 1;
    }
}

fn dwell_fit(p: &KerrParams, r0: f64) -> (f64, f64) {
    let c = circular_orbit_constants(p, r0).unwrap();
    let offsets = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let pts: Vec<(f64, f64)> = offsets
        .iter()
        .map(|&d| {
            let start = PhasePoint::from_constants(p, 0.0, r0 + d, FRAC_PI_2, 0.0, &c, 1.0, 1.0).unwrap();
            let rec = integrate_null_geodesic(p, &start, &c, 400.0, 1e-11).unwrap();
            (d.ln(), rec.dwell_time(r0, 0.5))
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|q| q.0).sum::<f64>() / n;
    let my = pts.iter().map(|q| q.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|q| (q.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|q| (q.1 - my).powi(2)).sum();
    (sxy / sxx, sxy * sxy / (sxx * syy))
}

#[test]
fn trapped_dwell_grows_logarithmically() {
    for (a, r0) in [(0.0, 3.0), (0.05, 3.0)] {
        let p = KerrParams::new(1.0, a).unwrap();
        let (slope, r2) = dwell_fit(&p, r0);
        assert!(slope < 0.0, "dwell must grow as the offset shrinks");
        assert!(r2 > 0.9, "a={a}: R² = {r2}");
    }
}

#[test]
fn schwarzschild_dwell_rate_matches_the_lyapunov_exponent() {
    // near r = 3M, δ ∝ exp(λ s) with λ = √(P''/2)/ρ² = √27/9 in affine
    // parameter for E = 1
    let p = KerrParams::schwarzschild(1.0);
    let (slope, _) = dwell_fit(&p, 3.0);
    let lambda = 27f64.sqrt() / 9.0;
    assert!((-1.0 / slope - lambda).abs() < 0.05 * lambda, "{} vs {lambda}", -1.0 / slope);
}

#[test]
fn start_must_be_null_and_admissible() {
    let p = KerrParams::new(1.0, 0.05).unwrap();
    let c = ConservedSet::new(1.0, 6.0, 36.0);
    // between the two turning points P < 0
    let cls = classify_radial_potential(&p, &c).unwrap();
    assert_eq!(cls.case, PotentialCase::B2TwoRoots);
    let mid = 0.5 * (cls.roots[0].r + cls.roots[1].r);
    assert!(matches!(
        PhasePoint::from_constants(&p, 0.0, mid, FRAC_PI_2, 0.0, &c, 1.0, 1.0),
        Err(Error::ForbiddenStart(_))
    ));
    let mut start = PhasePoint::from_constants(&p, 0.0, 10.0, FRAC_PI_2, 0.0, &c, -1.0, 1.0).unwrap();
    start.xi *= 1.01;
    assert!(matches!(integrate_null_geodesic(&p, &start, &c, 10.0, 1e-10), Err(Error::NotNull { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn constants_are_conserved(l in -5.0f64..5.0, extra in 0.0f64..30.0, r0 in 6.0f64..15.0, sign in prop_oneof![Just(1.0), Just(-1.0)]) {
        let p = KerrParams::new(1.0, 0.1).unwrap();
        let c = ConservedSet::new(1.0, l, (l - 0.1).powi(2) + extra);
        let start = PhasePoint::from_constants(&p, 0.0, r0, FRAC_PI_2, 0.0, &c, sign, 1.0);
        prop_assume!(start.is_ok());
        let rec = integrate_null_geodesic(&p, &start.unwrap(), &c, 60.0, 1e-10).unwrap();
        prop_assert!(conserved_drift(&rec).max_drift < 1e-8);
        prop_assert!(rec.null_residual < 1e-8);
    }
}
