use kerr_core::diagnostics::Mesh;
use kerr_core::geometry::{KerrParams, Spacetime};
use kerr_core::wavesolver::*;
use num_complex::Complex64;

fn spacetime(a: f64) -> Spacetime {
    Spacetime::with_default_profiles(KerrParams::new(1.0, a).unwrap())
}

fn max_diff(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Radius of the largest |u| on the equator-most row beyond `r_min`,
/// refined by a parabola through the three nodes around the maximum.
fn peak_radius(mesh: &Mesh, u: &[Complex64], r_min: f64) -> f64 {
    let j = mesh.n_theta / 2;
    let amp = |i: usize| u[mesh.idx(i, j)].norm();
    let i = (1..mesh.n_r - 1)
        .filter(|&i| mesh.r(i) > r_min)
        .max_by(|&a, &b| amp(a).total_cmp(&amp(b)))
        .unwrap();
    let (r0, r1, r2) = (mesh.r(i - 1), mesh.r(i), mesh.r(i + 1));
    let (f0, f1, f2) = (amp(i - 1), amp(i), amp(i + 1));
    // vertex of the interpolating parabola on non-uniform nodes
    let num = (r1 - r0).powi(2) * (f1 - f2) - (r1 - r2).powi(2) * (f1 - f0);
    let den = (r1 - r0) * (f1 - f2) - (r1 - r2) * (f1 - f0);
    r1 - 0.5 * num / den
}

#[test]
fn far_zone_pulse_moves_at_the_coordinate_speed() {
    let st = spacetime(0.0);
    let grid = GridSpec::new(&st.params, 160.0, 1024, 16, 0, 40.0);
    let op = WaveOperator::new(&st, &grid).unwrap();
    let mesh = op.mesh().clone();
    let mut field = initial_data_gaussian(&st.params, &mesh, &GaussianData::new(80.0, 2.0, 1.0)).unwrap();
    let (dt, steps) = op.time_step(grid.cfl, grid.v_max);
    let mut stepper = Stepper::new(mesh.len());
    let mut fronts = Vec::new();
    for n in 1..=steps {
        stepper.step(&op, &mut field, dt, None).unwrap();
        if n == steps / 4 || n == steps {
            fronts.push((field.time, peak_radius(&mesh, &field.u, 82.0)));
        }
    }
    let ((t0, r0), (t1, r1)) = (fronts[0], fronts[1]);
    // outgoing rays obey dr/dṽ = 1 − 2M/r in this slicing; integrate it
    let mut r = r0;
    let h = (t1 - t0) / 1000.0;
    for _ in 0..1000 {
        let k = |r: f64| 1.0 - 2.0 / r;
        let (k1, k2) = (k(r), k(r + 0.5 * h * k(r)));
        let k3 = k(r + 0.5 * h * k2);
        let k4 = k(r + h * k3);
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let measured = (r1 - r0) / (t1 - t0);
    let predicted = (r - r0) / (t1 - t0);
    assert!((measured / predicted - 1.0).abs() < 0.02, "{measured} vs {predicted}");
}

#[test]
fn rk4_step_error_is_fifth_order_locally() {
    let st = spacetime(0.05);
    let grid = GridSpec::new(&st.params, 40.0, 256, 16, 1, 10.0);
    let op = WaveOperator::new(&st, &grid).unwrap();
    let data = initial_data_gaussian(&st.params, op.mesh(), &GaussianData::new(12.0, 2.0, 1.0)).unwrap();
    let (dt, _) = op.time_step(grid.cfl, grid.v_max);
    let gap = |h: f64| {
        let one = step(&op, &data, h, None).unwrap();
        let half = step(&op, &step(&op, &data, 0.5 * h, None).unwrap(), 0.5 * h, None).unwrap();
        max_diff(&one.u, &half.u).max(max_diff(&one.v, &half.v))
    };
    let (e1, e2) = (gap(dt), gap(0.5 * dt));
    let order = (e1 / e2).log2();
    assert!((order - 5.0).abs() < 0.5, "local order {order} ({e1:e}, {e2:e})");
}

#[test]
fn schwarzschild_pulse_exits_the_domain() {
    let st = spacetime(0.0);
    let grid = GridSpec::new(&st.params, 100.0, 1024, 16, 0, 150.0);
    let mesh = grid.mesh(&st).unwrap();
    let data = initial_data_gaussian(&st.params, &mesh, &GaussianData::new(6.0, 1.0, 1.0)).unwrap();
    let mut obs = Observers::new(&st.params);
    obs.series_every = 20;
    let rec = evolve(&st, &grid, &data, None, &obs).unwrap();
    let ratio = rec.final_energy() / rec.e_initial;
    assert!(ratio < 1e-3, "E(150)/E0 = {ratio:e}");
    // nothing is created: what left through either boundary was there at ṽ = 0
    let n = rec.times.len() - 1;
    let gone = rec.flux_horizon[n] + rec.flux_outer[n] + rec.energy[n];
    assert!(gone <= rec.e_initial * 1.01, "{gone} vs {}", rec.e_initial);
    assert!(rec.flux_horizon[n] > 0.0 && rec.flux_outer[n] > 0.0);
}

#[test]
fn zero_run_has_zero_series() {
    let st = spacetime(0.1);
    let grid = GridSpec::new(&st.params, 40.0, 64, 16, 2, 20.0);
    let mesh = grid.mesh(&st).unwrap();
    let data = initial_data_gaussian(&st.params, &mesh, &GaussianData::new(6.0, 1.0, 0.0)).unwrap();
    let rec = evolve(&st, &grid, &data, None, &Observers::new(&st.params)).unwrap();
    assert_eq!(rec.e_initial, 0.0);
    for s in [&rec.energy, &rec.energy_local, &rec.flux_horizon, &rec.flux_outer] {
        assert_eq!(s.len(), rec.times.len());
        assert!(s.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn causal_run_has_no_horizon_flux() {
    // data near r = 60 cannot reach r_e in ṽ ≤ 20
    let st = spacetime(0.05);
    let grid = GridSpec::new(&st.params, 100.0, 256, 16, 0, 20.0);
    let mesh = grid.mesh(&st).unwrap();
    let data = initial_data_gaussian(&st.params, &mesh, &GaussianData::new(60.0, 1.0, 1.0)).unwrap();
    let rec = evolve(&st, &grid, &data, None, &Observers::new(&st.params)).unwrap();
    assert!(rec.flux_horizon.last().unwrap().abs() < 1e-12 * rec.e_initial);
}

#[test]
fn oscillating_source_near_the_photon_sphere() {
    let st = spacetime(0.05);
    let grid = GridSpec::new(&st.params, 60.0, 256, 16, 1, 60.0);
    let mesh = grid.mesh(&st).unwrap();
    let data = ModeField::zeros(&mesh);
    let source = |t: f64, r: f64, theta: f64| {
        let bump = if (r - 3.0).abs() < 0.5 { (1.0 - ((r - 3.0) / 0.5).powi(2)).powi(4) } else { 0.0 };
        let ramp = if t < 10.0 { (std::f64::consts::PI * t / 20.0).sin().powi(2) } else { 1.0 };
        Complex64::from_polar(bump * ramp * theta.sin(), 0.4 * t)
    };
    let mut obs = Observers::new(&st.params);
    obs.series_every = 10;
    let rec = evolve(&st, &grid, &data, Some(&source), &obs).unwrap();
    let sup = rec.energy_sup();
    assert!(sup.is_finite() && sup > 0.0);
    assert!(rec.final_field.is_finite());
    assert!(rec.energy.iter().all(|&e| e >= 0.0));
}

/// Node lookup for sources defined on mesh nodes only.
fn node_table(mesh: &Mesh, values: Vec<Complex64>) -> impl Fn(f64, f64, f64) -> Complex64 + '_ {
    move |t: f64, r: f64, theta: f64| {
        let i = mesh.nodes().partition_point(|&x| x < r - 1e-12);
        let j = ((theta / mesh.dtheta()) - 0.5).round() as usize;
        (-t).exp() * values[mesh.idx(i, j)]
    }
}

#[test]
fn manufactured_solution() {
    // u = e^{−ṽ} w with f chosen through the discrete operator itself
    let st = spacetime(0.1);
    let grid = GridSpec::new(&st.params, 40.0, 128, 16, 1, 2.0);
    let op = WaveOperator::new(&st, &grid).unwrap();
    let mesh = op.mesh().clone();
    let mut w = initial_data_gaussian(&st.params, &mesh, &GaussianData::new(10.0, 1.5, 1.0)).unwrap();
    for k in 0..mesh.len() {
        w.u[k] *= Complex64::new(1.0, 0.3);
        w.v[k] = -w.u[k];
    }
    let unit = |_: f64, _: f64, _: f64| Complex64::new(1.0, 0.0);
    let free = apply_dalembertian(&op, &w, None);
    let per_unit = apply_dalembertian(&op, &w, Some(&unit));
    // ∂_ṽv = w at ṽ = 0, and the operator is affine in f
    let f: Vec<Complex64> = (0..mesh.len())
        .map(|k| {
            let gain = per_unit[k] - free[k];
            if gain.norm() > 0.0 {
                (w.u[k] - free[k]) / gain
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let src = node_table(&mesh, f);

    let t = 0.7;
    let mut at_t = w.clone();
    let s = (-t as f64).exp();
    at_t.u.iter_mut().chain(at_t.v.iter_mut()).for_each(|z| *z *= s);
    at_t.time = t;
    let dv = apply_dalembertian(&op, &at_t, Some(&src));
    let interior: Vec<usize> = (0..mesh.n_r - 1).flat_map(|i| (0..mesh.n_theta).map(move |j| (i, j))).map(|(i, j)| mesh.idx(i, j)).collect();
    let worst = interior.iter().map(|&k| (dv[k] - at_t.u[k]).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-12, "residual {worst:e}");

    // evolving reproduces the exact solution up to an O(dt⁴) error
    let (dt, steps) = op.time_step(grid.cfl, grid.v_max);
    let run = |dt: f64, steps: usize| {
        let mut field = w.clone();
        let mut stepper = Stepper::new(mesh.len());
        for _ in 0..steps {
            stepper.step(&op, &mut field, dt, Some(&src)).unwrap();
        }
        let s = (-field.time).exp();
        interior.iter().map(|&k| (field.u[k] - s * w.u[k]).norm()).fold(0.0, f64::max)
    };
    let (e1, e2) = (run(dt, steps), run(0.5 * dt, 2 * steps));
    assert!(e1 < 1e-6, "{e1:e}");
    let order = (e1 / e2).log2();
    assert!((order - 4.0).abs() < 0.5, "order {order} ({e1:e}, {e2:e})");
}
