//! The six subcommands. Each writes its artifacts under the configured
//! output directory and returns the list of files plus any failed
//! `--assert` checks.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;

use kerr_core::diagnostics::{lew_s_dual, norm_report, DualOptions, LeKOptions, Mesh, SpaceTimeField};
use kerr_core::geodesics::{
    circular_orbit_constants, classify_radial_potential, conserved_drift, integrate_null_geodesic, integrate_with,
    ConservedSet, GeodesicRecord, IntegrationOptions, PhasePoint, PotentialCase, Termination,
};
use kerr_core::geometry::{bl_inverse, KerrParams, Spacetime};
use kerr_core::scalar::{DoubleDouble, Scalar};
use kerr_core::symbolcheck::{
    kerr_bracket, kerr_sample, principal_symbol, schwarzschild_q_decomposition, MultiplierChoice, WINDOW, ZERO_BRACKET,
    ZERO_LOCUS,
};
use kerr_core::trapping::{r_polynomial, trapped_radius, trapped_set_table, CONE_RATIO};
use kerr_core::wavesolver::{evolve, initial_data_gaussian, BandCapture, RunRecord};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConvergeQuantity, GeodesicMode, Precision, ScenarioConfig, SourceKind};
use crate::output::{ensure_dir, write_csv, write_json};
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Evolve,
    Geodesic,
    TrappedSet,
    SymbolAudit,
    Diagnose,
    Converge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// `--assert` checks that did not hold
    pub failures: Vec<String>,
}

pub fn run(cmd: Command, cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    ensure_dir(&cfg.output)?;
    match cmd {
        Command::Evolve => cmd_evolve(cfg),
        Command::Geodesic => cmd_geodesic(cfg),
        Command::TrappedSet => cmd_trapped_set(cfg),
        Command::SymbolAudit => cmd_symbol_audit(cfg),
        Command::Diagnose => cmd_diagnose(cfg),
        Command::Converge => cmd_converge(cfg),
    }
}

// ---------------------------------------------------------------- evolve

/// Runs the configured evolution, optionally at another radial resolution
/// or with a band record for LE_K.
pub fn run_scenario(cfg: &ScenarioConfig, n_r: Option<usize>, band: Option<BandCapture>) -> Result<RunRecord, RunError> {
    let st = Spacetime::with_default_profiles(cfg.params);
    let mut grid = cfg.grid;
    if let Some(n) = n_r {
        grid.n_r = n;
    }
    let mesh = grid.mesh(&st)?;
    let data = initial_data_gaussian(&cfg.params, &mesh, &cfg.data)?;
    let mut obs = cfg.observers;
    if band.is_some() {
        obs.band = band;
    }
    let src = cfg.source;
    let m = grid.m;
    let f = move |t: f64, r: f64, th: f64| src.eval(m, t, r, th);
    let source: Option<&dyn Fn(f64, f64, f64) -> Complex64> = match src.kind {
        SourceKind::None => None,
        SourceKind::Oscillating => Some(&f),
    };
    Ok(evolve(&st, &grid, &data, source, &obs)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMeta {
    pub r_e: f64,
    pub r_out: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub cfl: f64,
    pub m: i32,
    pub v_max: f64,
    pub dissipation: f64,
    pub radial_map: String,
    pub dt: f64,
    pub steps: usize,
}

impl GridMeta {
    fn of(rec: &RunRecord) -> Self {
        let g = &rec.grid;
        Self {
            r_e: g.r_e,
            r_out: g.r_out,
            n_r: g.n_r,
            n_theta: g.n_theta,
            cfl: g.cfl,
            m: g.m,
            v_max: g.v_max,
            dissipation: g.dissipation,
            radial_map: format!("{:?}", g.radial_map),
            dt: rec.dt,
            steps: rec.steps,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveSummary {
    pub grid: GridMeta,
    pub e_initial: f64,
    pub e_sup: f64,
    pub e_min: f64,
    pub e_final: f64,
    pub sup_ratio: f64,
    pub flux_horizon: f64,
    pub flux_outer: f64,
    /// E(0) − E(ṽ_max) − both boundary fluxes
    pub bookkeeping_deficit: f64,
    pub e_local_initial: f64,
    pub e_local_probe: Option<f64>,
    pub probe_time: Option<f64>,
    pub local_ratio: Option<f64>,
    /// r_out ≥ r₀ + ṽ_max/2 + 10M
    pub outer_rule: bool,
    pub snapshot_times: Vec<f64>,
}

impl EvolveSummary {
    pub fn of(cfg: &ScenarioConfig, rec: &RunRecord) -> Self {
        let rep = rec.energy_report();
        let (_, f_h) = rec.energy_boundary();
        let f_o = rec.flux_outer.last().copied().unwrap_or(0.0);
        let probe = (cfg.local_probe <= rec.grid.v_max + 1e-9).then(|| {
            let k = rec
                .times
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - cfg.local_probe).abs().total_cmp(&(b.1 - cfg.local_probe).abs()))
                .map_or(0, |x| x.0);
            (rec.times[k], rec.energy_local[k])
        });
        let e_loc0 = rec.energy_local.first().copied().unwrap_or(0.0);
        let m = cfg.params.mass();
        Self {
            grid: GridMeta::of(rec),
            e_initial: rep.e_initial,
            e_sup: rep.e_sup,
            e_min: rec.energy.iter().copied().fold(f64::INFINITY, f64::min),
            e_final: rec.final_energy(),
            sup_ratio: rep.sup_ratio,
            flux_horizon: f_h,
            flux_outer: f_o,
            bookkeeping_deficit: rep.e_initial - rec.final_energy() - f_h - f_o,
            e_local_initial: e_loc0,
            e_local_probe: probe.map(|p| p.1),
            probe_time: probe.map(|p| p.0),
            local_ratio: probe.and_then(|p| (e_loc0 > 0.0).then(|| p.1 / e_loc0)),
            outer_rule: rec.grid.r_out >= cfg.data.center + 0.5 * rec.grid.v_max + 10.0 * m,
            snapshot_times: rec.snapshots.iter().map(|s| s.time).collect(),
        }
    }
}

fn series_csv(cfg: &ScenarioConfig, rec: &RunRecord) -> Result<PathBuf, RunError> {
    let rows = (0..rec.times.len()).map(|k| [rec.times[k], rec.energy[k], rec.energy_local[k], rec.flux_outer[k], rec.flux_horizon[k]]);
    write_csv(cfg, &cfg.output.join("series.csv"), &["v_tilde", "E", "E_local", "flux_outer", "flux_horizon"], rows)
}

fn cmd_evolve(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    let rec = run_scenario(cfg, None, None)?;
    let summary = EvolveSummary::of(cfg, &rec);
    let mut files = vec![series_csv(cfg, &rec)?];
    if !rec.snapshots.is_empty() {
        let dir = cfg.output.join("snapshots");
        ensure_dir(&dir)?;
        let mesh = record_mesh(&rec)?;
        for (k, snap) in rec.snapshots.iter().enumerate() {
            let rows = (0..mesh.n_r).flat_map(|i| {
                let mesh = &mesh;
                (0..mesh.n_theta).map(move |j| {
                    let u = snap.u[mesh.idx(i, j)];
                    [mesh.r(i), mesh.theta(j), u.re, u.im]
                })
            });
            files.push(write_csv(cfg, &dir.join(format!("snapshot_{k:05}.csv")), &["r", "theta", "re_u", "im_u"], rows)?);
        }
    }
    files.push(write_json(cfg, &cfg.output.join("summary.json"), &summary)?);

    let mut failures = Vec::new();
    if summary.sup_ratio > 2.0 {
        failures.push(format!("energy bound: sup E / E0 = {} > 2", summary.sup_ratio));
    }
    if cfg.source.kind == SourceKind::None {
        if let Some(r) = summary.local_ratio {
            if !(r < 0.1) {
                failures.push(format!("local energy decay: E_local ratio {r} at ṽ = {:?}", summary.probe_time));
            }
        }
    }
    if !rec.energy.iter().all(|e| e.is_finite() && *e >= 0.0) {
        failures.push("energy series must be finite and nonnegative".into());
    }
    Ok(Outcome { files, failures })
}

fn record_mesh(rec: &RunRecord) -> Result<Mesh, RunError> {
    let st = Spacetime::with_default_profiles(rec.params);
    Ok(rec.grid.mesh(&st)?)
}

// ---------------------------------------------------------------- geodesic

#[derive(Debug, Clone, Serialize)]
pub struct RootOut {
    pub r: f64,
    pub multiplicity: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicSummary {
    pub mode: String,
    pub precision: String,
    pub energy: f64,
    pub angular_momentum: f64,
    pub carter: f64,
    pub case: String,
    pub roots: Vec<RootOut>,
    pub termination: String,
    pub samples: usize,
    pub turning_points: usize,
    pub null_residual: f64,
    pub conserved_drift: f64,
    pub drift_flagged: bool,
    /// circular mode only
    pub max_deviation: Option<f64>,
    pub dwell_time: Option<f64>,
}

fn integrate_ray(cfg: &ScenarioConfig, r0: f64, c: &ConservedSet) -> Result<GeodesicRecord, RunError> {
    let g = &cfg.geodesic;
    let p = &cfg.params;
    Ok(match g.precision {
        Precision::F64 => {
            let start = PhasePoint::from_constants(p, 0.0, r0, g.theta0, 0.0, c, g.radial_sign, 1.0)?;
            integrate_null_geodesic(p, &start, c, g.s_max, g.tol)?
        }
        Precision::DoubleDouble => {
            let d = |x: f64| DoubleDouble::from_f64(x);
            let cd = ConservedSet::new(d(c.energy), d(c.angular_momentum), d(c.carter));
            let start = PhasePoint::from_constants(p, d(0.0), d(r0), d(g.theta0), d(0.0), &cd, g.radial_sign, 1.0)?;
            integrate_with(p, &start, &cd, &IntegrationOptions::new(g.s_max, g.tol))?
        }
    })
}

fn cmd_geodesic(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    let g = &cfg.geodesic;
    if g.mode == GeodesicMode::Random {
        let rep = taxonomy(&cfg.params, g.samples, g.integrate, cfg.seed);
        let mut failures = Vec::new();
        if rep.classify_errors > 0 {
            failures.push(format!("{} sets failed to classify", rep.classify_errors));
        }
        if rep.non_monotone > 0 || rep.unfinished > 0 {
            failures.push(format!("{} rays turned twice, {} never left", rep.non_monotone, rep.unfinished));
        }
        if !(rep.dwell.r2 > 0.9) {
            failures.push(format!("dwell fit R² = {}", rep.dwell.r2));
        }
        let files = vec![write_json(cfg, &cfg.output.join("taxonomy.json"), &rep)?];
        return Ok(Outcome { files, failures });
    }
    let (c, r0) = match g.mode {
        GeodesicMode::Constants => (ConservedSet::new(g.energy, g.l, g.k), g.r0),
        _ => (circular_orbit_constants(&cfg.params, g.r_circular)?, g.r_circular + g.offset),
    };
    let cls = classify_radial_potential(&cfg.params, &c)?;
    let rec = integrate_ray(cfg, r0, &c)?;
    let drift = conserved_drift(&rec);
    let circular = g.mode == GeodesicMode::Circular;
    let summary = GeodesicSummary {
        mode: format!("{:?}", g.mode),
        precision: format!("{:?}", g.precision),
        energy: c.energy,
        angular_momentum: c.angular_momentum,
        carter: c.carter,
        case: format!("{:?}", cls.case),
        roots: cls.roots.iter().map(|x| RootOut { r: x.r, multiplicity: x.multiplicity }).collect(),
        termination: format!("{:?}", rec.termination),
        samples: rec.samples.len(),
        turning_points: rec.radial_turning_points(),
        null_residual: rec.null_residual,
        conserved_drift: drift.max_drift,
        drift_flagged: drift.flagged,
        max_deviation: circular.then(|| rec.max_radial_deviation(g.r_circular)),
        dwell_time: circular.then(|| rec.dwell_time(g.r_circular, 0.5 * cfg.params.mass())),
    };
    let rows = rec.samples.iter().map(|s| [s.s, s.t, s.r, s.theta, s.phi, s.xi, s.big_theta, s.p_residual]);
    let files = vec![
        write_csv(cfg, &cfg.output.join("trajectory.csv"), &["s", "t", "r", "theta", "phi", "xi", "big_theta", "p_residual"], rows)?,
        write_json(cfg, &cfg.output.join("geodesic.json"), &summary)?,
    ];
    let mut failures = Vec::new();
    if drift.flagged {
        failures.push(format!("conserved drift {} above 10·tol", drift.max_drift));
    }
    if circular && g.offset == 0.0 {
        let dev = summary.max_deviation.unwrap_or(f64::INFINITY);
        if !(dev < 1e-6 * cfg.params.mass()) {
            failures.push(format!("photon orbit drifted by {dev}"));
        }
    }
    Ok(Outcome { files, failures })
}

#[derive(Debug, Clone, Serialize)]
pub struct DwellFit {
    pub center: f64,
    pub offsets: Vec<f64>,
    pub dwell_times: Vec<f64>,
    /// d(dwell)/d(ln offset)
    pub slope: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaxonomyReport {
    pub samples: usize,
    pub counts: BTreeMap<String, usize>,
    pub classify_errors: usize,
    pub integrated: usize,
    pub non_monotone: usize,
    /// rays that neither escaped nor reached the horizon
    pub unfinished: usize,
    pub dwell: DwellFit,
}

/// Least-squares line y = α + βx: (β, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxy / sxx, if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) })
}

/// Dwell time near the spherical photon orbit at 3M against ln δ for
/// starts at 3M + δ.
pub fn dwell_fit(params: &KerrParams) -> DwellFit {
    let center = 3.0 * params.mass();
    let offsets = vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let dwell_times: Vec<f64> = match circular_orbit_constants(params, center) {
        Ok(c) => offsets
            .iter()
            .map(|&d| {
                PhasePoint::from_constants(params, 0.0, center + d * params.mass(), FRAC_PI_2, 0.0, &c, 1.0, 1.0)
                    .and_then(|s| integrate_null_geodesic(params, &s, &c, 400.0 * params.mass(), 1e-11))
                    .map_or(f64::NAN, |rec| rec.dwell_time(center, 0.5 * params.mass()))
            })
            .collect(),
        Err(_) => vec![f64::NAN; offsets.len()],
    };
    let x: Vec<f64> = offsets.iter().map(|d: &f64| d.ln()).collect();
    let (slope, r2) = linear_fit(&x, &dwell_times);
    DwellFit {
        center,
        offsets,
        dwell_times,
        slope,
        r2: if r2.is_finite() { r2 } else { 0.0 },
    }
}

/// Classifies `samples` random conserved sets and integrates `integrate`
/// non-trapped rays from r = 12M.
pub fn taxonomy(params: &KerrParams, samples: usize, integrate: usize, seed: u64) -> TaxonomyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = params.spin();
    let m = params.mass();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut errors = 0;
    let mut candidates = Vec::new();
    for n in 0..samples {
        // one set in a hundred has E = 0
        let e = if n % 100 == 99 { 0.0 } else { 1.0 };
        let l = rng.gen_range(-6.0..6.0) * m;
        let k_min = (l - a * e).powi(2);
        let k = rng.gen_range(k_min..k_min.max(100.0 * m * m) + 1e-9);
        let c = ConservedSet::new(e, l, k);
        match classify_radial_potential(params, &c) {
            Ok(cls) => {
                *counts.entry(format!("{:?}", cls.case)).or_default() += 1;
                if e != 0.0 && cls.case != PotentialCase::B3DoubleRoot {
                    candidates.push((c, rng.gen_bool(0.5)));
                }
            }
            Err(_) => errors += 1,
        }
    }
    let (mut integrated, mut non_monotone, mut unfinished) = (0, 0, 0);
    for (c, outward) in candidates {
        if integrated >= integrate {
            break;
        }
        let sign = if outward { 1.0 } else { -1.0 };
        let Ok(start) = PhasePoint::from_constants(params, 0.0, 12.0 * m, FRAC_PI_2, 0.0, &c, sign, 1.0) else {
            continue;
        };
        let Ok(rec) = integrate_null_geodesic(params, &start, &c, 3000.0 * m, 1e-9) else {
            unfinished += 1;
            integrated += 1;
            continue;
        };
        integrated += 1;
        if rec.radial_turning_points() > 1 {
            non_monotone += 1;
        }
        if rec.termination == Termination::Completed {
            unfinished += 1;
        }
    }
    TaxonomyReport {
        samples,
        counts,
        classify_errors: errors,
        integrated,
        non_monotone,
        unfinished,
        dwell: dwell_fit(params),
    }
}

// ---------------------------------------------------------------- trapped set

#[derive(Debug, Clone, Serialize)]
pub struct TrappedSummary {
    pub rows: usize,
    pub bound: f64,
    pub max_offset: f64,
    pub max_scaled_residual: f64,
}

fn cmd_trapped_set(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    let p = &cfg.params;
    let m = p.mass();
    let table = trapped_set_table(p, cfg.trapped_rows)?;
    let max_offset = table.iter().map(|r| (r[2] * m - 3.0 * m).abs()).fold(0.0, f64::max);
    let max_scaled_residual = table
        .iter()
        .map(|r| r_polynomial(p, r[2] * m, 1.0, r[1] * m).abs() / (3.0 * m).powi(5))
        .fold(0.0, f64::max);
    let summary = TrappedSummary {
        rows: table.len(),
        bound: 2.0 * p.spin().abs(),
        max_offset,
        max_scaled_residual,
    };
    let files = vec![
        write_csv(cfg, &cfg.output.join("trapped_set.csv"), &["a_over_m", "ratio", "r_a_over_m", "F"], &table)?,
        write_json(cfg, &cfg.output.join("trapped_set.json"), &summary)?,
    ];
    let mut failures = Vec::new();
    if max_offset > summary.bound {
        failures.push(format!("|r_a - 3M| = {max_offset} exceeds 2a = {}", summary.bound));
    }
    if !(max_scaled_residual < 1e-12) {
        failures.push(format!("scaled R_a residual {max_scaled_residual}"));
    }
    Ok(Outcome { files, failures })
}

// ---------------------------------------------------------------- symbol audit

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    pub sqss_max_residual: f64,
    pub sqss_max_sum_of_squares: f64,
    pub fd_max_residual: f64,
    /// smallest bracket / |k|² over samples on {p = 0}
    pub characteristic_min_scaled: f64,
    pub characteristic_samples: usize,
    /// samples drawn close to {ξ = 0, r = r_a}
    pub near_trapped_samples: usize,
    pub zero_hits: usize,
    pub zero_violations: usize,
    /// largest |ξ|/|k| and |r − r_a| among zeros
    pub zero_max_xi: f64,
    pub zero_max_dr: f64,
}

impl AuditReport {
    pub fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        if !(self.sqss_max_residual < 1e-10 && self.sqss_max_sum_of_squares < 1e-10) {
            f.push(format!("sum-of-squares residual {} / {}", self.sqss_max_residual, self.sqss_max_sum_of_squares));
        }
        if !(self.fd_max_residual < 1e-6) {
            f.push(format!("finite-difference bracket disagreement {}", self.fd_max_residual));
        }
        if !(self.characteristic_min_scaled >= -ZERO_BRACKET) {
            f.push(format!("negative bracket on p = 0: {}", self.characteristic_min_scaled));
        }
        if self.zero_violations > 0 {
            f.push(format!("{} bracket zeros outside the trapped set", self.zero_violations));
        }
        f
    }
}

/// ξ ≥ 0 with p(τ, ξ, Θ, Φ) = 0, if one exists.
fn null_xi(p: &KerrParams, r: f64, theta: f64, tau: f64, big_theta: f64, big_phi: f64) -> Option<f64> {
    let g = bl_inverse(p, r, theta).ok()?;
    let rest = principal_symbol(p, r, theta, tau, 0.0, big_theta, big_phi).ok()?;
    (rest <= 0.0).then(|| (-rest / g.rr).sqrt())
}

pub fn symbol_audit(params: &KerrParams, samples: usize, seed: u64) -> AuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = params.mass();
    let (lo, hi) = (WINDOW.0 * m, WINDOW.1 * m);
    let choice = MultiplierChoice::standard(m);
    let mut rep = AuditReport {
        samples,
        sqss_max_residual: 0.0,
        sqss_max_sum_of_squares: 0.0,
        fd_max_residual: 0.0,
        characteristic_min_scaled: f64::INFINITY,
        characteristic_samples: 0,
        near_trapped_samples: 0,
        zero_hits: 0,
        zero_violations: 0,
        zero_max_xi: 0.0,
        zero_max_dr: 0.0,
    };
    let tau_of = |rng: &mut ChaCha8Rng| {
        let t: f64 = rng.gen_range(0.2..2.0);
        if rng.gen_bool(0.5) {
            t
        } else {
            -t
        }
    };
    let zero_check = |rep: &mut AuditReport, r: f64, theta: f64, tau: f64, xi: f64, big_theta: f64, big_phi: f64| {
        let Ok(b) = kerr_bracket(params, r, theta, tau, xi, big_theta, big_phi) else { return };
        let Ok(ra) = trapped_radius(params, tau, big_phi) else { return };
        let k2 = tau * tau + xi * xi + big_theta * big_theta + big_phi * big_phi;
        rep.characteristic_samples += 1;
        rep.characteristic_min_scaled = rep.characteristic_min_scaled.min(b / k2);
        if b <= ZERO_LOCUS * k2 {
            rep.zero_hits += 1;
            let (xs, dr) = (xi.abs() / k2.sqrt(), (r - ra.r_a).abs());
            rep.zero_max_xi = rep.zero_max_xi.max(xs);
            rep.zero_max_dr = rep.zero_max_dr.max(dr);
            if !(xs < 1e-8 && dr < 1e-6 * m) {
                rep.zero_violations += 1;
            }
        }
    };
    for _ in 0..samples {
        // Schwarzschild regrouping
        let r = rng.gen_range(lo..hi);
        let s = schwarzschild_q_decomposition(&choice, r, rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-6.0..6.0) * m);
        if let Ok(s) = s {
            rep.sqss_max_residual = rep.sqss_max_residual.max(s.get("residual"));
            rep.sqss_max_sum_of_squares = rep.sqss_max_sum_of_squares.max(s.get("residual_sum_of_squares"));
        }

        // closed form against differences at a generic covector
        let (r, theta, tau) = (rng.gen_range(lo..hi), rng.gen_range(0.1..PI - 0.1), tau_of(&mut rng));
        let big_phi = rng.gen_range(-CONE_RATIO..CONE_RATIO) * m * tau.abs();
        let (xi, big_theta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0) * m);
        if let Ok(s) = kerr_sample(params, r, theta, tau, xi, big_theta, big_phi) {
            rep.fd_max_residual = rep.fd_max_residual.max(s.get("residual"));
        }

        // a generic point of the characteristic set
        let big_theta = rng.gen_range(-6.0..6.0) * m;
        if let Some(x) = null_xi(params, r, theta, tau, big_theta, big_phi) {
            let x = if rng.gen_bool(0.5) { x } else { -x };
            zero_check(&mut rep, r, theta, tau, x, big_theta, big_phi);
        }

        // and one near the trapped set: r = r_a + δ, ξ² = ε
        let Ok(ra) = trapped_radius(params, tau, big_phi) else { continue };
        let delta = 10f64.powf(rng.gen_range(-12.0..-2.0)) * m * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let r = (ra.r_a + delta).clamp(lo, hi);
        let eps = 10f64.powf(rng.gen_range(-24.0..-4.0));
        let Ok(g) = bl_inverse(params, r, theta) else { continue };
        let Ok(rest) = principal_symbol(params, r, theta, tau, 0.0, 0.0, big_phi) else { continue };
        let t2 = (-g.rr * eps - rest) / g.theta_theta;
        if t2 < 0.0 {
            continue;
        }
        let big_theta = t2.sqrt();
        let Some(x) = null_xi(params, r, theta, tau, big_theta, big_phi) else { continue };
        rep.near_trapped_samples += 1;
        zero_check(&mut rep, r, theta, tau, if rng.gen_bool(0.5) { x } else { -x }, big_theta, big_phi);
    }
    rep
}

fn cmd_symbol_audit(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    let rep = symbol_audit(&cfg.params, cfg.audit_samples, cfg.seed);
    let files = vec![write_json(cfg, &cfg.output.join("symbol_audit.json"), &rep)?];
    Ok(Outcome {
        files,
        failures: rep.failures(),
    })
}

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Clone, Serialize)]
pub struct ShellOut {
    pub j: i32,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LeKOut {
    pub total: f64,
    pub undegenerate: f64,
    pub trapped_ratio: f64,
    pub nondegenerate: f64,
    pub theta_proxy: f64,
    pub window: f64,
    pub bandwidth: f64,
    pub nyquist: f64,
    pub band: (f64, f64),
    pub cadence: f64,
    pub low_frequency_weight: f64,
    /// proxies used for the pseudodifferential factors
    pub quantization: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseSummary {
    pub grid: GridMeta,
    pub energy: EvolveSummary,
    pub le_m: f64,
    pub le_m_sup_shell: Option<i32>,
    pub le_m_dropped: Vec<(f64, f64, usize)>,
    pub shells: Vec<ShellOut>,
    pub lew_s: f64,
    pub lew_s_dual_source: Option<f64>,
    pub dual_floor: f64,
    pub le_k: Option<LeKOut>,
    pub le_k_error: Option<String>,
}

fn cmd_diagnose(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    // band record at a cadence near M/4 unless configured
    let st = Spacetime::with_default_profiles(cfg.params);
    let op_dt = {
        let op = kerr_core::wavesolver::WaveOperator::new(&st, &cfg.grid)?;
        op.time_step(cfg.grid.cfl, cfg.grid.v_max).0
    };
    let band = cfg.observers.band.unwrap_or(BandCapture {
        r_lo: 2.5 * cfg.params.mass(),
        r_hi: 3.5 * cfg.params.mass(),
        every: ((0.25 * cfg.params.mass() / op_dt).ceil() as usize).max(1),
    });
    let rec = run_scenario(cfg, None, Some(band))?;
    let opts = LeKOptions {
        low_frequency_weight: cfg.low_frequency_weight,
        ..LeKOptions::default()
    };
    let no_band = norm_report(&cfg.params, &rec.accumulator, None, opts)?;
    let (le_k, le_k_error) = match rec.band.as_ref().map(|b| kerr_core::diagnostics::le_k_freq_norm(&cfg.params, b, opts)) {
        Some(Ok(k)) => (
            Some(LeKOut {
                total: k.total,
                undegenerate: k.undegenerate,
                trapped_ratio: k.trapped_ratio(),
                nondegenerate: k.nondegenerate,
                theta_proxy: k.theta_proxy,
                window: k.window,
                bandwidth: k.bandwidth,
                nyquist: k.nyquist,
                band: (band.r_lo, band.r_hi),
                cadence: op_dt * band.every as f64,
                low_frequency_weight: cfg.low_frequency_weight,
                quantization: "xi = 0, Theta = Rayleigh quotient of d/dtheta".into(),
            }),
            None,
        ),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, Some("band outside the grid".into())),
    };
    let lew_s_dual_source = if cfg.source.kind == SourceKind::None {
        None
    } else {
        let mesh = record_mesh(&rec)?;
        let times: Vec<f64> = (0..=(cfg.grid.v_max.floor() as usize)).map(|k| k as f64).collect();
        let src = cfg.source;
        let m = cfg.grid.m;
        let field = SpaceTimeField::from_fn(mesh, &times, |t, r, th| (src.eval(m, t, r, th), Complex64::new(0.0, 0.0)))?;
        Some(lew_s_dual(
            &cfg.params,
            &field,
            DualOptions {
                floor: cfg.dual_floor,
                ..DualOptions::default()
            },
        )?)
    };
    let summary = DiagnoseSummary {
        grid: GridMeta::of(&rec),
        energy: EvolveSummary::of(cfg, &rec),
        le_m: no_band.le_m.value,
        le_m_sup_shell: no_band.le_m.sup_shell,
        le_m_dropped: no_band.le_m.dropped.clone(),
        shells: rec
            .accumulator
            .shells()
            .iter()
            .map(|s| ShellOut {
                j: s.j,
                lo: s.lo,
                hi: s.hi,
                nodes: s.nodes.len(),
            })
            .collect(),
        lew_s: no_band.lew_s,
        lew_s_dual_source,
        dual_floor: cfg.dual_floor,
        le_k,
        le_k_error,
    };
    let files = vec![series_csv(cfg, &rec)?, write_json(cfg, &cfg.output.join("norms.json"), &summary)?];
    let mut failures = Vec::new();
    if let Some(e) = &summary.le_k_error {
        failures.push(format!("le_k: {e}"));
    }
    if let Some(k) = &summary.le_k {
        if k.total > k.undegenerate * (1.0 + 1e-12) {
            failures.push("degenerate norm exceeds its undegenerate counterpart".into());
        }
    }
    Ok(Outcome { files, failures })
}

// ---------------------------------------------------------------- converge

#[derive(Debug, Clone, Serialize)]
pub struct Level {
    pub n_r: usize,
    pub dt: f64,
    pub steps: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeSummary {
    pub quantity: String,
    pub levels: Vec<Level>,
    pub order: Option<f64>,
    pub error: Option<String>,
}

pub fn convergence_study(cfg: &ScenarioConfig) -> Result<ConvergeSummary, RunError> {
    let mut levels = Vec::new();
    for k in 0..3 {
        let n_r = cfg.grid.n_r << k;
        let rec = run_scenario(cfg, Some(n_r), None)?;
        let value = match cfg.converge_quantity {
            ConvergeQuantity::FinalEnergy => rec.final_energy(),
            ConvergeQuantity::EnergySup => rec.energy_sup(),
        };
        levels.push(Level {
            n_r,
            dt: rec.dt,
            steps: rec.steps,
            value,
        });
    }
    let order = kerr_core::diagnostics::convergence_order(levels[0].value, levels[1].value, levels[2].value);
    Ok(ConvergeSummary {
        quantity: format!("{:?}", cfg.converge_quantity),
        levels,
        order: order.as_ref().ok().copied(),
        error: order.err().map(|e| e.to_string()),
    })
}

fn cmd_converge(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    let summary = convergence_study(cfg)?;
    let files = vec![write_json(cfg, &cfg.output.join("converge.json"), &summary)?];
    let failures = match summary.order {
        Some(o) if (1.7..=2.3).contains(&o) => Vec::new(),
        Some(o) => vec![format!("observed order {o} outside [1.7, 2.3]")],
        None => vec![format!("no order: {}", summary.error.clone().unwrap_or_default())],
    };
    Ok(Outcome { files, failures })
}
