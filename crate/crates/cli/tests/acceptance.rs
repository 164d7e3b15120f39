//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command as Process;
use std::time::Instant;

use kerr_cli::commands::{convergence_study, run_scenario, symbol_audit, taxonomy};
use kerr_cli::parse_config;
use kerr_core::diagnostics::{le_k_freq_norm, LeKOptions, Mesh, SpaceTimeField};
use kerr_core::geodesics::{circular_orbit_constants, classify_radial_potential, integrate_null_geodesic, PhasePoint};
use kerr_core::geometry::{bl_covariant, ChartId, KerrParams, Spacetime};
use kerr_core::trapping::{r_polynomial, trapped_radius, trapped_set_table};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn horizons_and_charts() -> Outcome {
    let mut worst_delta = 0.0f64;
    for a in [0.0, 0.01, 0.05, 0.1, 0.2, 0.3 - 1e-9] {
        let p = KerrParams::new(1.0, a).unwrap();
        let (rm, rp) = p.horizon_radii();
        worst_delta = worst_delta.max(p.delta(rm).abs()).max(p.delta(rp).abs());
    }

    // a = 0 against the Schwarzschild line element; each component carries
    // the conditioning factor of 1 − 2M/r
    let s = KerrParams::new(1.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_ulps = 0.0f64;
    for _ in 0..1000 {
        let r: f64 = rng.gen_range(2.05..60.0);
        let th: f64 = rng.gen_range(0.05..PI - 0.05);
        let g = bl_covariant(&s, r, th).unwrap();
        let f = 1.0 - 2.0 / r;
        let want = [-f, 1.0 / f, r * r, r * r * th.sin().powi(2)];
        for i in 0..4 {
            for j in 0..4 {
                let w = if i == j { want[i] } else { 0.0 };
                let scale = f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) * (1.0 + 1.0 / f);
                worst_ulps = worst_ulps.max((g[i][j] - w).abs() / scale);
            }
        }
    }

    let mut finite_smooth = true;
    let mut worst_identity = 0.0f64;
    for a in [0.0, 0.05, 0.1] {
        let st = Spacetime::with_default_profiles(KerrParams::new(1.0, a).unwrap());
        let rp = st.params.r_plus();
        let h = 1e-3;
        for k in -40..=40 {
            let r = rp + k as f64 * h;
            let at = |r: f64| st.metric_at(ChartId::HorizonPenetrating, r, 1.1).unwrap();
            let (gm, g0, gp) = (at(r - h), at(r), at(r + h));
            worst_identity = worst_identity.max(g0.identity_residual());
            for i in 0..4 {
                for j in 0..4 {
                    let second = (gp.ginv[i][j] - 2.0 * g0.ginv[i][j] + gm.ginv[i][j]) / (h * h);
                    finite_smooth &= g0.g[i][j].is_finite() && g0.ginv[i][j].is_finite() && second.abs() < 1e3;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let r: f64 = rng.gen_range(rp - 0.05..100.0);
            let th: f64 = rng.gen_range(0.01..PI - 0.01);
            for chart in [ChartId::BoyerLindquist, ChartId::HorizonPenetrating] {
                if chart == ChartId::BoyerLindquist && r <= rp + 0.05 {
                    continue;
                }
                worst_identity = worst_identity.max(st.metric_at(chart, r, th).unwrap().identity_residual());
            }
        }
    }
    outcome(
        worst_delta <= 1e-14 && worst_ulps <= 4.0 && finite_smooth && worst_identity < 1e-12,
        format!(
            "max |Delta(r±)| = {worst_delta:.1e}, a=0 components within {worst_ulps:.2} conditioned ulps, HP smooth = {finite_smooth}, max |g·ginv − I| = {worst_identity:.1e}"
        ),
    )
}

/// Newton on P(r) = P′(r) = 0 for a = 0, E = 1, with unknowns (r, K):
/// P = r⁴ − K(r² − 2Mr).
fn schwarzschild_double_root() -> (f64, f64) {
    let (mut r, mut k) = (2.8f64, 25.0f64);
    for _ in 0..50 {
        let f1 = r.powi(4) - k * (r * r - 2.0 * r);
        let f2 = 4.0 * r.powi(3) - k * (2.0 * r - 2.0);
        let (a11, a12) = (4.0 * r.powi(3) - k * (2.0 * r - 2.0), -(r * r - 2.0 * r));
        let (a21, a22) = (12.0 * r * r - 2.0 * k, -(2.0 * r - 2.0));
        let det = a11 * a22 - a12 * a21;
        r -= (f1 * a22 - a12 * f2) / det;
        k -= (a11 * f2 - a21 * f1) / det;
    }
    (r, k)
}

fn photon_sphere() -> Outcome {
    let p = KerrParams::schwarzschild(1.0);
    let (r_o, k_o) = schwarzschild_double_root();
    let c = circular_orbit_constants(&p, r_o).unwrap();
    let l_err = (c.angular_momentum.abs() - k_o.sqrt()).abs();
    let k_err = (c.carter - k_o).abs();
    let paper = (c.angular_momentum.abs() - 27f64.sqrt()).abs().max((c.carter - 27.0).abs());
    let root = classify_radial_potential(&p, &c).unwrap().double_root().unwrap_or(f64::NAN);
    let start = PhasePoint::from_constants(&p, 0.0, 3.0, FRAC_PI_2, 0.0, &c, 1.0, 1.0).unwrap();
    let rec = integrate_null_geodesic(&p, &start, &c, 100.0, 1e-10).unwrap();
    let span = rec.samples.last().map_or(0.0, |s| s.s);
    let dev = rec.max_radial_deviation(3.0);
    outcome(
        l_err < 1e-10 && k_err < 1e-10 && paper < 1e-10 && (root - 3.0).abs() < 1e-10 && dev < 1e-6 && span >= 100.0 - 1e-9,
        format!("oracle (r, K) = ({r_o}, {k_o}); |dL| = {l_err:.1e}, |dK| = {k_err:.1e}; max |r − 3M| = {dev:.1e} over affine span {span}"),
    )
}

fn trapped_bound() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    for a in [0.01, 0.05, 0.1, 0.2] {
        let p = KerrParams::new(1.0, a).unwrap();
        let table = trapped_set_table(&p, 401).unwrap();
        ok &= table.len() == 401;
        for row in &table {
            let off = (row[2] - 3.0).abs();
            let res = r_polynomial(&p, row[2], 1.0, row[1]).abs() / 3f64.powi(5);
            ok &= off <= 2.0 * a && res < 1e-12;
            worst.0 = worst.0.max(off / (2.0 * a));
            worst.1 = worst.1.max(res);
        }
    }
    outcome(ok, format!("max |r_a − 3M|/(2a) = {:.3}, max scaled |R_a| = {:.1e}", worst.0, worst.1))
}

fn taxonomy_check() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.0, 0.05] {
        let p = KerrParams::new(1.0, a).unwrap();
        let rep = taxonomy(&p, 10_000, 25, 42);
        ok &= rep.classify_errors == 0 && rep.non_monotone == 0 && rep.unfinished == 0 && rep.integrated == 25 && rep.dwell.r2 > 0.9;
        parts.push(format!(
            "a={a}: {:?}, errors {}, {} rays with {} non-monotone, dwell R² = {:.5}",
            rep.counts, rep.classify_errors, rep.integrated, rep.non_monotone, rep.dwell.r2
        ));
    }
    outcome(ok, parts.join("; "))
}

fn symbols() -> Outcome {
    let p = KerrParams::new(1.0, 0.05).unwrap();
    let rep = symbol_audit(&p, 10_000, 7);
    let f = rep.failures();
    outcome(
        f.is_empty() && rep.zero_hits > 0,
        format!(
            "sqss residual {:.1e}, fd residual {:.1e}, min bracket/|k|² on p=0 {:.1e}, {} zeros (max |ξ|/|k| {:.1e}, max |r − r_a| {:.1e}), {} violations",
            rep.sqss_max_residual.max(rep.sqss_max_sum_of_squares),
            rep.fd_max_residual,
            rep.characteristic_min_scaled,
            rep.zero_hits,
            rep.zero_max_xi,
            rep.zero_max_dr,
            rep.zero_violations
        ),
    )
}

struct RunStats {
    sup_ratio: f64,
    local_ratio: f64,
}

fn energy_runs() -> BTreeMap<(u32, i32), [RunStats; 2]> {
    let mut out = BTreeMap::new();
    for a in [0.0, 0.05, 0.1] {
        for m in [0, 1, 2] {
            let stats = [512usize, 1024].map(|n| {
                let text = format!(
                    "spin = {a}\ngrid.m = {m}\ngrid.n_r = {n}\ngrid.r_out = 120\ngrid.v_max = 200\ndata.center = 6\ndata.width = 1\nobserve.series_every = 5\n"
                );
                let cfg = parse_config(&text).unwrap();
                let rec = run_scenario(&cfg, None, None).unwrap();
                let k = rec.times.iter().position(|&t| t >= 100.0).unwrap();
                RunStats {
                    sup_ratio: rec.energy_sup() / rec.e_initial,
                    local_ratio: rec.energy_local[k] / rec.energy_local[0],
                }
            });
            out.insert(((a * 100.0f64).round() as u32, m), stats);
        }
    }
    out
}

fn energy_bound(runs: &BTreeMap<(u32, i32), [RunStats; 2]>) -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    for s in runs.values() {
        ok &= s[0].sup_ratio <= 2.0 && s[1].sup_ratio <= s[0].sup_ratio + 1e-12;
        worst = worst.max(s[0].sup_ratio).max(s[1].sup_ratio);
    }
    outcome(ok, format!("{} scenarios, max sup E/E(0) = {worst:.6} (N_r = 512, 1024), non-increasing under refinement", runs.len()))
}

fn local_decay(runs: &BTreeMap<(u32, i32), [RunStats; 2]>) -> Outcome {
    let worst = runs.values().flat_map(|s| s.iter().map(|x| x.local_ratio)).fold(0.0, f64::max);
    outcome(worst < 0.1, format!("max E_local(100M)/E_local(0) = {worst:.2e} over [2.5M, 10M]"))
}

fn degenerate_norm() -> Outcome {
    let n_t = 800;
    let dt = 0.25;
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 * dt).collect();
    let tau = 2.0 * PI * 16.0 / (n_t as f64 * dt);
    let p = KerrParams::new(1.0, 0.05).unwrap();
    let record = |mesh: &Mesh, g: &dyn Fn(f64) -> f64| {
        SpaceTimeField::from_fn(mesh.clone(), &times, |t, r, th| {
            let u = Complex64::from_polar(g(r) * th.sin().powi(mesh.m.abs()), tau * t);
            (u, u * Complex64::new(0.0, tau))
        })
        .unwrap()
    };
    let r_a = trapped_radius(&p, tau, 1.0).unwrap().r_a;
    let mesh = Mesh::uniform(2.5, 0.0025, 401, 8, 1);
    let widths = [0.2, 0.1, 0.05];
    let ratios: Vec<f64> = widths
        .iter()
        .map(|&w| {
            let f = record(&mesh, &|r| (-((r - r_a) / w).powi(2)).exp());
            le_k_freq_norm(&p, &f, LeKOptions::default()).unwrap().trapped_ratio()
        })
        .collect();
    let x: Vec<f64> = widths.iter().map(|w| w.ln()).collect();
    let y: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let (slope, _) = kerr_cli::commands::linear_fit(&x, &y);

    let far = Mesh::uniform(4.0, 0.02, 201, 8, 2);
    let f = record(&far, &|r| (PI * (r - 4.0) / 4.0).sin().powi(2));
    let rep = le_k_freq_norm(&p, &f, LeKOptions::default()).unwrap();
    let eq = (rep.total / rep.undegenerate - 1.0).abs();
    outcome(
        (slope - 1.0).abs() < 0.1 && eq < 0.01,
        format!("trapped ratios {ratios:.4?} for w = {widths:?}, log-slope {slope:.3}; |LE_K/undegenerate − 1| = {eq:.1e} on [4M, 8M]"),
    )
}

fn convergence() -> Outcome {
    let cfg = parse_config("spin = 0.05\ngrid.m = 1\ngrid.n_r = 512\ngrid.r_out = 120\ngrid.v_max = 50\nobserve.series_every = 100\n").unwrap();
    let s = convergence_study(&cfg).unwrap();
    let vals: Vec<f64> = s.levels.iter().map(|l| l.value).collect();
    match s.order {
        Some(o) => outcome((1.7..=2.3).contains(&o), format!("E(50M) at N_r = 512/1024/2048: {vals:.4?}, order {o:.3}")),
        None => outcome(false, format!("E(50M) {vals:?}: {}", s.error.unwrap_or_default())),
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("scenario.cfg");
    std::fs::write(
        &cfg_path,
        "spin = 0.05\nseed = 9\ngrid.m = 1\ngrid.n_r = 128\ngrid.r_out = 40\ngrid.v_max = 20\ndata.center = 8\n\
         observe.snapshot_every = 500\ngeodesic.mode = random\ngeodesic.samples = 2000\naudit.samples = 2000\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let bin = env!("CARGO_BIN_EXE_kerrlab");
    let cmds = ["evolve", "trapped-set", "symbol-audit", "geodesic", "diagnose", "converge"];
    let once = || {
        let _ = std::fs::remove_dir_all(&out);
        let mut codes = Vec::new();
        for c in cmds {
            let st = Process::new(bin).args([c, cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]).stdout(std::process::Stdio::null()).status().unwrap();
            codes.push(st.code());
        }
        (codes, read_tree(&out))
    };
    let (c1, t1) = once();
    let (c2, t2) = once();
    let embeds = t1.iter().all(|(_, b)| String::from_utf8_lossy(b).contains("spin"));
    outcome(
        c1.iter().all(|c| *c == Some(0)) && c1 == c2 && t1 == t2 && !t1.is_empty() && embeds,
        format!("{} files from {} subcommands byte-identical across two runs, config embedded in each", t1.len(), cmds.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((n, name, o, t.elapsed().as_secs_f64()));
        let (n, name, o, secs) = results.last().unwrap();
        println!("criterion {n:>2} {} {name} ({secs:.1} s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    timed(1, "horizons and charts", &mut horizons_and_charts);
    timed(2, "photon sphere", &mut photon_sphere);
    timed(3, "trapped-set bound", &mut trapped_bound);
    timed(4, "geodesic taxonomy", &mut taxonomy_check);
    timed(5, "symbol identities", &mut symbols);
    let t = Instant::now();
    let runs = energy_runs();
    let shared = t.elapsed().as_secs_f64();
    println!("             18 evolutions to 200M shared by criteria 6 and 7 took {shared:.1} s");
    timed(6, "uniform energy bound", &mut || energy_bound(&runs));
    timed(7, "local energy decay", &mut || local_decay(&runs));
    timed(8, "degenerate norm", &mut degenerate_norm);
    timed(9, "solver convergence", &mut convergence);
    timed(10, "determinism", &mut determinism);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
