//! Flat `key = value` scenario files.
//!
//! Every key has a default, so an empty file is a valid scenario. Parsing
//! collects all problems before failing: syntax, duplicate and unknown keys
//! and malformed values are parse errors with line numbers, violated module
//! preconditions are validation errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use kerr_core::geometry::KerrParams;
use kerr_core::wavesolver::{GaussianData, GridSpec, Observers, RadialMap, MIN_NODES};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub kind: ErrorKind,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Parse => "ParseError",
            ErrorKind::Validation => "ValidationError",
        };
        write!(f, "{kind}")?;
        if let Some(l) = self.line {
            write!(f, " (line {l})")?;
        }
        if let Some(k) = &self.key {
            write!(f, " [{k}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Recognised keys and their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("mass", "1"),
    ("spin", "0"),
    ("seed", "0"),
    ("output", "out"),
    ("grid.r_e", "auto"),
    ("grid.r_out", "120"),
    ("grid.n_r", "512"),
    ("grid.n_theta", "16"),
    ("grid.cfl", "0.25"),
    ("grid.m", "0"),
    ("grid.v_max", "200"),
    ("grid.dissipation", "0"),
    ("grid.radial_map", "characteristic"),
    ("data.center", "6"),
    ("data.width", "1"),
    ("data.amplitude", "1"),
    ("data.theta_power", "auto"),
    ("data.velocity", "0"),
    ("source.kind", "none"),
    ("source.amplitude", "1"),
    ("source.center", "3"),
    ("source.width", "0.5"),
    ("source.frequency", "0.4"),
    ("source.ramp", "10"),
    ("observe.series_every", "10"),
    ("observe.local_lo", "2.5"),
    ("observe.local_hi", "10"),
    ("observe.local_probe", "100"),
    ("observe.snapshot_every", "0"),
    ("observe.band_every", "0"),
    ("observe.band_lo", "2.5"),
    ("observe.band_hi", "3.5"),
    ("geodesic.mode", "circular"),
    ("geodesic.energy", "1"),
    ("geodesic.l", "0"),
    ("geodesic.k", "27"),
    ("geodesic.r_circular", "3"),
    ("geodesic.offset", "0"),
    ("geodesic.r0", "10"),
    ("geodesic.theta0", "1.5707963267948966"),
    ("geodesic.radial_sign", "-1"),
    ("geodesic.s_max", "100"),
    ("geodesic.tol", "1e-10"),
    ("geodesic.precision", "f64"),
    ("geodesic.samples", "10000"),
    ("geodesic.integrate", "25"),
    ("trapped.rows", "401"),
    ("audit.samples", "10000"),
    ("diagnose.dual_floor", "1e-3"),
    ("diagnose.low_frequency_weight", "1e-2"),
    ("converge.quantity", "final_energy"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    None,
    /// smooth bump in r times sin^{|m|}θ, ramped on, oscillating as e^{iωṽ}
    Oscillating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub frequency: f64,
    pub ramp: f64,
}

impl SourceSpec {
    pub fn eval(&self, m: i32, t: f64, r: f64, theta: f64) -> Complex64 {
        let x = (r - self.center) / self.width;
        if self.kind == SourceKind::None || x.abs() >= 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let ramp = if t < self.ramp {
            (std::f64::consts::FRAC_PI_2 * t / self.ramp).sin().powi(2)
        } else {
            1.0
        };
        let mag = self.amplitude * (1.0 - x * x).powi(4) * ramp * theta.sin().powi(m.abs());
        Complex64::from_polar(mag, self.frequency * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeodesicMode {
    /// (E, L, K) from the file
    Constants,
    /// the spherical photon orbit at geodesic.r_circular, started at r + offset
    Circular,
    /// taxonomy of random conserved sets
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    DoubleDouble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSpec {
    pub mode: GeodesicMode,
    pub energy: f64,
    pub l: f64,
    pub k: f64,
    pub r_circular: f64,
    pub offset: f64,
    pub r0: f64,
    pub theta0: f64,
    pub radial_sign: f64,
    pub s_max: f64,
    pub tol: f64,
    pub precision: Precision,
    pub samples: usize,
    pub integrate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergeQuantity {
    FinalEnergy,
    EnergySup,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: KerrParams,
    pub seed: u64,
    pub output: PathBuf,
    pub grid: GridSpec,
    pub data: GaussianData,
    pub source: SourceSpec,
    pub observers: Observers,
    /// ṽ at which E_local is compared with its initial value
    pub local_probe: f64,
    pub geodesic: GeodesicSpec,
    pub trapped_rows: usize,
    pub audit_samples: usize,
    pub dual_floor: f64,
    pub low_frequency_weight: f64,
    pub converge_quantity: ConvergeQuantity,
    resolved: BTreeMap<String, String>,
}

impl ScenarioConfig {
    /// Every key with its effective value, defaults included.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn set_output(&mut self, dir: PathBuf) {
        self.resolved.insert("output".into(), dir.display().to_string());
        self.output = dir;
    }
}

struct Raw {
    values: BTreeMap<String, (String, Option<usize>)>,
    errors: Vec<ConfigError>,
}

impl Raw {
    fn parse_err(&mut self, key: &str, message: String) {
        let line = self.values.get(key).and_then(|v| v.1);
        self.errors.push(ConfigError {
            kind: ErrorKind::Parse,
            line,
            key: Some(key.into()),
            message,
        });
    }

    fn str(&self, key: &str) -> &str {
        &self.values[key].0
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let text = self.str(key).to_string();
        match text.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.parse_err(key, format!("cannot parse {text:?}: {e}"));
                None
            }
        }
    }

    fn auto<T: FromStr>(&mut self, key: &str) -> Option<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.str(key) == "auto" {
            Some(None)
        } else {
            self.get(key).map(Some)
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let text = self.str(key).to_string();
        match options.iter().find(|(name, _)| *name == text) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|o| o.0).collect();
                self.parse_err(key, format!("{text:?} is not one of {}", names.join(", ")));
                None
            }
        }
    }
}

fn lex(text: &str) -> Raw {
    let mut raw = Raw {
        values: BTreeMap::new(),
        errors: Vec::new(),
    };
    let known: BTreeMap<&str, &str> = KEYS.iter().copied().collect();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |message: String, key: Option<String>| ConfigError {
            kind: ErrorKind::Parse,
            line: Some(lineno),
            key,
            message,
        };
        let Some((k, v)) = body.split_once('=') else {
            raw.errors.push(err(format!("expected `key = value`, got {body:?}"), None));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            raw.errors.push(err("empty key".into(), None));
            continue;
        }
        if !known.contains_key(k) {
            raw.errors.push(err(format!("unknown key {k:?}"), Some(k.into())));
            continue;
        }
        if let Some(first) = seen.get(k) {
            raw.errors.push(err(format!("duplicate key, first set on line {first}"), Some(k.into())));
            continue;
        }
        if v.is_empty() {
            raw.errors.push(err("empty value".into(), Some(k.into())));
            continue;
        }
        seen.insert(k.into(), lineno);
        raw.values.insert(k.into(), (v.into(), Some(lineno)));
    }
    for (k, d) in KEYS {
        raw.values.entry((*k).into()).or_insert_with(|| ((*d).into(), None));
    }
    raw
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let mut raw = lex(text);

    let mass: Option<f64> = raw.get("mass");
    let spin: Option<f64> = raw.get("spin");
    let seed: Option<u64> = raw.get("seed");
    let output = PathBuf::from(raw.str("output"));

    let r_e: Option<Option<f64>> = raw.auto("grid.r_e");
    let r_out: Option<f64> = raw.get("grid.r_out");
    let n_r: Option<usize> = raw.get("grid.n_r");
    let n_theta: Option<usize> = raw.get("grid.n_theta");
    let cfl: Option<f64> = raw.get("grid.cfl");
    let m: Option<i32> = raw.get("grid.m");
    let v_max: Option<f64> = raw.get("grid.v_max");
    let dissipation: Option<f64> = raw.get("grid.dissipation");
    let radial_map = raw.choice(
        "grid.radial_map",
        &[("characteristic", RadialMap::CharacteristicSpeed), ("uniform", RadialMap::Uniform)],
    );

    let center: Option<f64> = raw.get("data.center");
    let width: Option<f64> = raw.get("data.width");
    let amplitude: Option<f64> = raw.get("data.amplitude");
    let theta_power: Option<Option<u32>> = raw.auto("data.theta_power");
    let velocity: Option<f64> = raw.get("data.velocity");

    let source_kind = raw.choice("source.kind", &[("none", SourceKind::None), ("oscillating", SourceKind::Oscillating)]);
    let s_amp: Option<f64> = raw.get("source.amplitude");
    let s_center: Option<f64> = raw.get("source.center");
    let s_width: Option<f64> = raw.get("source.width");
    let s_freq: Option<f64> = raw.get("source.frequency");
    let s_ramp: Option<f64> = raw.get("source.ramp");

    let series_every: Option<usize> = raw.get("observe.series_every");
    let local_lo: Option<f64> = raw.get("observe.local_lo");
    let local_hi: Option<f64> = raw.get("observe.local_hi");
    let local_probe: Option<f64> = raw.get("observe.local_probe");
    let snapshot_every: Option<usize> = raw.get("observe.snapshot_every");
    let band_every: Option<usize> = raw.get("observe.band_every");
    let band_lo: Option<f64> = raw.get("observe.band_lo");
    let band_hi: Option<f64> = raw.get("observe.band_hi");

    let g_mode = raw.choice(
        "geodesic.mode",
        &[
            ("constants", GeodesicMode::Constants),
            ("circular", GeodesicMode::Circular),
            ("random", GeodesicMode::Random),
        ],
    );
    let g_energy: Option<f64> = raw.get("geodesic.energy");
    let g_l: Option<f64> = raw.get("geodesic.l");
    let g_k: Option<f64> = raw.get("geodesic.k");
    let g_rc: Option<f64> = raw.get("geodesic.r_circular");
    let g_offset: Option<f64> = raw.get("geodesic.offset");
    let g_r0: Option<f64> = raw.get("geodesic.r0");
    let g_theta0: Option<f64> = raw.get("geodesic.theta0");
    let g_sign: Option<f64> = raw.get("geodesic.radial_sign");
    let g_smax: Option<f64> = raw.get("geodesic.s_max");
    let g_tol: Option<f64> = raw.get("geodesic.tol");
    let g_prec = raw.choice("geodesic.precision", &[("f64", Precision::F64), ("double-double", Precision::DoubleDouble)]);
    let g_samples: Option<usize> = raw.get("geodesic.samples");
    let g_integrate: Option<usize> = raw.get("geodesic.integrate");

    let trapped_rows: Option<usize> = raw.get("trapped.rows");
    let audit_samples: Option<usize> = raw.get("audit.samples");
    let dual_floor: Option<f64> = raw.get("diagnose.dual_floor");
    let lfw: Option<f64> = raw.get("diagnose.low_frequency_weight");
    let quantity = raw.choice(
        "converge.quantity",
        &[("final_energy", ConvergeQuantity::FinalEnergy), ("energy_sup", ConvergeQuantity::EnergySup)],
    );

    let resolved: BTreeMap<String, String> = raw.values.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect();
    let mut errors = raw.errors;
    let parsed = (|| {
        Some((
            (mass?, spin?, seed?),
            (r_e?, r_out?, n_r?, n_theta?, cfl?, m?, v_max?, dissipation?, radial_map?),
            (center?, width?, amplitude?, theta_power?, velocity?),
            (source_kind?, s_amp?, s_center?, s_width?, s_freq?, s_ramp?),
            (series_every?, local_lo?, local_hi?, local_probe?, snapshot_every?, band_every?, band_lo?, band_hi?),
            (g_mode?, g_energy?, g_l?, g_k?, g_rc?, g_offset?, g_r0?, g_theta0?, g_sign?, g_smax?, g_tol?, g_prec?, g_samples?, g_integrate?),
            (trapped_rows?, audit_samples?, dual_floor?, lfw?, quantity?),
        ))
    })();
    let Some(parsed) = parsed else {
        return Err(ConfigErrors(errors));
    };
    let (
        (mass, spin, seed),
        (r_e, r_out, n_r, n_theta, cfl, m, v_max, dissipation, radial_map),
        (center, width, amplitude, theta_power, velocity),
        (source_kind, s_amp, s_center, s_width, s_freq, s_ramp),
        (series_every, local_lo, local_hi, local_probe, snapshot_every, band_every, band_lo, band_hi),
        (g_mode, g_energy, g_l, g_k, g_rc, g_offset, g_r0, g_theta0, g_sign, g_smax, g_tol, g_prec, g_samples, g_integrate),
        (trapped_rows, audit_samples, dual_floor, lfw, quantity),
    ) = parsed;

    let mut invalid = |key: &str, message: String| {
        errors.push(ConfigError {
            kind: ErrorKind::Validation,
            line: None,
            key: Some(key.into()),
            message,
        })
    };

    let params = match KerrParams::new(mass, spin) {
        Ok(p) => Some(p),
        Err(e) => {
            invalid("spin", format!("geometry: {e}"));
            None
        }
    };
    let params_or_unit = params.unwrap_or_else(|| KerrParams::schwarzschild(if mass > 0.0 { mass } else { 1.0 }));
    let mut grid = GridSpec::new(&params_or_unit, r_out, n_r, n_theta, m, v_max);
    if let Some(r_e) = r_e {
        grid.r_e = r_e;
    }
    grid.cfl = cfl;
    grid.dissipation = dissipation;
    grid.radial_map = radial_map;
    if params.is_some() {
        if let Err(e) = grid.validate(&params_or_unit) {
            invalid("grid", format!("wavesolver: {e}"));
        }
    }
    if n_r < MIN_NODES || n_theta < MIN_NODES {
        // validate reports this as well; keep the key precise
        invalid("grid.n_r", format!("wavesolver: N_r and N_theta must be at least {MIN_NODES}"));
    }
    if !(v_max > 0.0) {
        invalid("grid.v_max", "wavesolver: v_max must be positive".into());
    }
    if !(dissipation >= 0.0) {
        invalid("grid.dissipation", "wavesolver: dissipation must be nonnegative".into());
    }

    let r_plus = params_or_unit.r_plus();
    if !(width > 0.0) || !(center > r_plus + width && center < r_out - width) {
        invalid(
            "data.center",
            format!("wavesolver: OutOfBand, need r+ + width < center < r_out - width ({r_plus} + {width} < {center} < {r_out} - {width})"),
        );
    }
    if !amplitude.is_finite() || !velocity.is_finite() {
        invalid("data.amplitude", "wavesolver: data must be finite".into());
    }
    let mut data = GaussianData::new(center, width, amplitude);
    data.theta_power = theta_power;
    data.velocity_factor = Complex64::new(velocity, 0.0);

    if source_kind == SourceKind::Oscillating && !(s_width > 0.0 && s_amp.is_finite() && s_ramp > 0.0) {
        invalid("source", "wavesolver: source needs positive width and ramp, finite amplitude".into());
    }
    let source = SourceSpec {
        kind: source_kind,
        amplitude: s_amp,
        center: s_center,
        width: s_width,
        frequency: s_freq,
        ramp: s_ramp,
    };

    if series_every == 0 {
        invalid("observe.series_every", "observers: cadence must be at least 1".into());
    }
    if !(local_lo < local_hi) {
        invalid("observe.local_lo", "observers: local window must have lo < hi".into());
    }
    if !(band_lo < band_hi) {
        invalid("observe.band_lo", "observers: band must have lo < hi".into());
    }
    let mut observers = Observers::new(&params_or_unit);
    observers.series_every = series_every.max(1);
    observers.local_window = (local_lo, local_hi);
    observers.snapshot_every = (snapshot_every > 0).then_some(snapshot_every);
    observers.band = (band_every > 0).then_some(kerr_core::wavesolver::BandCapture {
        r_lo: band_lo,
        r_hi: band_hi,
        every: band_every,
    });

    if !(g_smax > 0.0) {
        invalid("geodesic.s_max", "geodesics: s_max must be positive".into());
    }
    if !(g_tol > 0.0 && g_tol <= 1e-3) {
        invalid("geodesic.tol", "geodesics: tol must lie in (0, 1e-3]".into());
    }
    if g_sign != 1.0 && g_sign != -1.0 {
        invalid("geodesic.radial_sign", "geodesics: radial_sign must be 1 or -1".into());
    }
    if g_mode == GeodesicMode::Constants && !(g_r0 > r_plus) {
        invalid("geodesic.r0", format!("geodesics: start must lie outside r+ = {r_plus}"));
    }
    if g_mode == GeodesicMode::Random && g_samples == 0 {
        invalid("geodesic.samples", "geodesics: need at least one sample".into());
    }
    if trapped_rows == 0 {
        invalid("trapped.rows", "trapping: need at least one row".into());
    }
    if audit_samples == 0 {
        invalid("audit.samples", "symbolcheck: need at least one sample".into());
    }
    if !(dual_floor >= 0.0) {
        invalid("diagnose.dual_floor", "diagnostics: floor must be nonnegative".into());
    }
    if !(lfw >= 0.0) {
        invalid("diagnose.low_frequency_weight", "diagnostics: weight must be nonnegative".into());
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(ScenarioConfig {
        params: params_or_unit,
        seed,
        output,
        grid,
        data,
        source,
        observers,
        local_probe,
        geodesic: GeodesicSpec {
            mode: g_mode,
            energy: g_energy,
            l: g_l,
            k: g_k,
            r_circular: g_rc,
            offset: g_offset,
            r0: g_r0,
            theta0: g_theta0,
            radial_sign: g_sign,
            s_max: g_smax,
            tol: g_tol,
            precision: g_prec,
            samples: g_samples,
            integrate: g_integrate,
        },
        trapped_rows,
        audit_samples,
        dual_floor,
        low_frequency_weight: lfw,
        converge_quantity: quantity,
        resolved,
    })
}
