//! Null geodesics of Kerr in Boyer–Lindquist coordinates.
//!
//! Rays are integrated as the Hamiltonian flow of H = ½ g^{ij} k_i k_j with
//! covector k = (τ, ξ, Θ, Φ). Since τ and Φ are conserved the state is the
//! six-vector (t, r, θ, φ, ξ, Θ). The separated (Carter) form is used to build
//! initial data and to audit conserved quantities.
//!
//! With τ = −E, Φ = L the Carter constant is K = Θ² + (Φ + aτ sin²θ)²/sin²θ and
//! Δ²ξ² = P(r) = −KΔ + ((r² + a²)E − aL)².

use crate::error::{Error, Result};
use crate::geometry::KerrParams;
use crate::scalar::Scalar;

#[inline]
fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x)
}

/// (E, L, K). The default instantiation is plain f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedSet<S: Scalar = f64> {
    pub energy: S,
    pub angular_momentum: S,
    pub carter: S,
}

impl<S: Scalar> ConservedSet<S> {
    pub fn new(energy: S, angular_momentum: S, carter: S) -> Self {
        Self {
            energy,
            angular_momentum,
            carter,
        }
    }

    pub fn to_f64(&self) -> ConservedSet {
        ConservedSet::new(
            self.energy.to_f64(),
            self.angular_momentum.to_f64(),
            self.carter.to_f64(),
        )
    }

    fn is_degenerate(&self) -> bool {
        let z = S::zero();
        self.energy == z && self.angular_momentum == z && self.carter == z
    }
}

/// Position (t, r, θ, φ) and covector (τ, ξ, Θ, Φ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint<S: Scalar = f64> {
    pub t: S,
    pub r: S,
    pub theta: S,
    pub phi: S,
    pub tau: S,
    pub xi: S,
    pub big_theta: S,
    pub big_phi: S,
}

/// Separated pieces of ρ²p at one phase point.
struct Separated<S> {
    delta: S,
    rho2: S,
    sin: S,
    cos: S,
    sum: S,
    /// (r² + a²)τ + aΦ
    w: S,
    /// Φ + aτ sin²θ
    v: S,
    /// ρ² p
    n: S,
}

fn separate<S: Scalar>(a: S, m: S, r: S, theta: S, tau: S, xi: S, big_theta: S, big_phi: S) -> Separated<S> {
    let (sin, cos) = theta.sin_cos();
    let s2 = sin * sin;
    let sum = r * r + a * a;
    let delta = sum - lit::<S>(2.0) * m * r;
    let rho2 = r * r + a * a * cos * cos;
    let w = sum * tau + a * big_phi;
    let v = big_phi + a * tau * s2;
    let n = delta * xi * xi + big_theta * big_theta - w * w / delta + v * v / s2;
    Separated {
        delta,
        rho2,
        sin,
        cos,
        sum,
        w,
        v,
        n,
    }
}

impl<S: Scalar> PhasePoint<S> {
    fn split(&self, params: &KerrParams) -> Separated<S> {
        separate(
            lit(params.spin()),
            lit(params.mass()),
            self.r,
            self.theta,
            self.tau,
            self.xi,
            self.big_theta,
            self.big_phi,
        )
    }

    /// Principal symbol p = g^{ij} k_i k_j.
    pub fn symbol(&self, params: &KerrParams) -> S {
        let sp = self.split(params);
        sp.n / sp.rho2
    }

    /// |p| / (|τ| + |ξ| + |Θ| + |Φ|)².
    pub fn null_residual(&self, params: &KerrParams) -> f64 {
        let norm = self.tau.abs() + self.xi.abs() + self.big_theta.abs() + self.big_phi.abs();
        let norm = norm.to_f64();
        if norm == 0.0 {
            return 0.0;
        }
        self.symbol(params).to_f64().abs() / (norm * norm)
    }

    pub fn conserved(&self, params: &KerrParams) -> ConservedSet<S> {
        let a: S = lit(params.spin());
        let (sin, _) = self.theta.sin_cos();
        let s2 = sin * sin;
        let v = self.big_phi + a * self.tau * s2;
        ConservedSet::new(
            -self.tau,
            self.big_phi,
            self.big_theta * self.big_theta + v * v / s2,
        )
    }

    /// Null covector at (t, r, θ, φ) with the given constants. The signs pick
    /// the branches of ξ and Θ; zero is treated as positive.
    #[allow(clippy::too_many_arguments)]
    pub fn from_constants(
        params: &KerrParams,
        t: S,
        r: S,
        theta: S,
        phi: S,
        c: &ConservedSet<S>,
        radial_sign: f64,
        polar_sign: f64,
    ) -> Result<Self> {
        let r_plus = params.r_plus();
        if !(r.to_f64() > r_plus) {
            return Err(Error::DomainError {
                r: r.to_f64(),
                bound: r_plus,
            });
        }
        let a: S = lit(params.spin());
        let m: S = lit(params.mass());
        let (sin, _) = theta.sin_cos();
        let s2 = sin * sin;
        let tau = -c.energy;
        let v = c.angular_momentum + a * tau * s2;
        let theta2 = c.carter - v * v / s2;
        let sum = r * r + a * a;
        let delta = sum - lit::<S>(2.0) * m * r;
        let w = sum * c.energy - a * c.angular_momentum;
        let p = w * w - c.carter * delta;
        let scale = (w * w + (c.carter * delta).abs() + c.carter.abs()).to_f64().max(1e-300);
        let slack = 64.0 * S::epsilon() * scale;
        if theta2.to_f64() < -slack {
            return Err(Error::ForbiddenStart(format!(
                "polar equation has Theta^2 = {} at theta = {}",
                theta2.to_f64(),
                theta.to_f64()
            )));
        }
        if p.to_f64() < -slack {
            return Err(Error::ForbiddenStart(format!(
                "radial potential P = {} < 0 at r = {}",
                p.to_f64(),
                r.to_f64()
            )));
        }
        let clamp = |x: S| if x < S::zero() { S::zero() } else { x };
        let xi = clamp(p).sqrt() / delta;
        let big_theta = clamp(theta2).sqrt();
        Ok(Self {
            t,
            r,
            theta,
            phi,
            tau,
            xi: if radial_sign < 0.0 { -xi } else { xi },
            big_theta: if polar_sign < 0.0 { -big_theta } else { big_theta },
            big_phi: c.angular_momentum,
        })
    }
}

/// Radial potential P(r) = −KΔ + ((r² + a²)E − aL)².
pub fn radial_potential(params: &KerrParams, c: &ConservedSet, r: f64) -> f64 {
    poly_eval(&potential_coefficients(params, c), r)
}

/// Same polynomial at extended precision.
pub fn radial_potential_in<S: Scalar>(params: &KerrParams, c: &ConservedSet<S>, r: S) -> S {
    let a: S = lit(params.spin());
    let m: S = lit(params.mass());
    let w = (r * r + a * a) * c.energy - a * c.angular_momentum;
    let delta = r * r - lit::<S>(2.0) * m * r + a * a;
    w * w - c.carter * delta
}

/// Ascending coefficients of P.
pub fn potential_coefficients(params: &KerrParams, c: &ConservedSet) -> [f64; 5] {
    let a = params.spin();
    let m = params.mass();
    let (e, l, k) = (c.energy, c.angular_momentum, c.carter);
    let w0 = e * a * a - a * l;
    [w0 * w0 - k * a * a, 2.0 * m * k, 2.0 * e * w0 - k, 0.0, e * e]
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &ci)| k as f64 * ci).collect()
}

fn trim(c: &[f64]) -> &[f64] {
    let mut n = c.len();
    while n > 0 && c[n - 1] == 0.0 {
        n -= 1;
    }
    &c[..n]
}

fn bisect(c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = poly_eval(c, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = poly_eval(c, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots of a polynomial in [lo, hi], isolated between the roots of its
/// derivative.
fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim(coeffs);
    match c.len() {
        0 | 1 => return Vec::new(),
        2 => {
            let x = -c[0] / c[1];
            return if (lo..=hi).contains(&x) { vec![x] } else { Vec::new() };
        }
        _ => {}
    }
    let mut knots = vec![lo];
    knots.extend(real_roots_in(&poly_derivative(c), lo, hi));
    knots.push(hi);
    let mut roots: Vec<f64> = Vec::new();
    for pair in knots.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        let (f0, f1) = (poly_eval(c, x0), poly_eval(c, x1));
        if f0 == 0.0 {
            if roots.last() != Some(&x0) {
                roots.push(x0);
            }
        } else if f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            roots.push(bisect(c, x0, x1));
        }
    }
    if poly_eval(c, hi) == 0.0 && roots.last() != Some(&hi) {
        roots.push(hi);
    }
    roots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PotentialCase {
    /// E = 0
    ATurning,
    /// no root beyond the horizon
    B1Monotone,
    /// simple roots only
    B2TwoRoots,
    /// a double root: trapped orbit
    B3DoubleRoot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialRoot {
    pub r: f64,
    pub multiplicity: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialClassification {
    pub case: PotentialCase,
    /// sorted roots in [r₊, ∞)
    pub roots: Vec<PotentialRoot>,
}

impl PotentialClassification {
    pub fn double_root(&self) -> Option<f64> {
        self.roots.iter().find(|x| x.multiplicity >= 2).map(|x| x.r)
    }
}

/// Relative size of |P| below which a critical point counts as a double root.
pub const DOUBLE_ROOT_TOL: f64 = 1e-9;

pub fn classify_radial_potential(params: &KerrParams, c: &ConservedSet) -> Result<PotentialClassification> {
    if c.is_degenerate() {
        return Err(Error::DegenerateInput);
    }
    let coeffs = potential_coefficients(params, c);
    let m = params.mass();
    let r_plus = params.r_plus();
    let lead = trim(&coeffs);
    let hi = match lead.len() {
        0 | 1 => r_plus + m,
        n => {
            let top = lead[n - 1].abs();
            let bound = 1.0 + lead[..n - 1].iter().map(|x| x.abs() / top).fold(0.0, f64::max);
            bound.max(r_plus + m)
        }
    };
    let scale = |r: f64| {
        let a = params.spin();
        let w = (r * r + a * a) * c.energy - a * c.angular_momentum;
        (c.carter * params.delta(r)).abs() + w * w
    };

    let mut simple = real_roots_in(&coeffs, r_plus, hi);
    let mut doubles: Vec<f64> = Vec::new();
    for x in real_roots_in(&poly_derivative(&coeffs), r_plus, hi) {
        let px = poly_eval(&coeffs, x);
        if px.abs() <= DOUBLE_ROOT_TOL * scale(x).max(f64::MIN_POSITIVE) {
            doubles.push(x);
            if px < 0.0 {
                // round-off split the double root into a close pair
                if let Some(i) = simple.iter().rposition(|&s| s < x) {
                    simple.remove(i);
                }
                if let Some(i) = simple.iter().position(|&s| s > x) {
                    simple.remove(i);
                }
            }
            simple.retain(|&s| (s - x).abs() > 1e-6 * m);
        }
    }
    // coincident simple roots also count as double
    let mut merged: Vec<PotentialRoot> = Vec::new();
    for s in simple {
        if let Some(last) = merged.last_mut() {
            if last.multiplicity == 1 && (s - last.r).abs() <= 1e-6 * m {
                last.r = 0.5 * (last.r + s);
                last.multiplicity = 2;
                continue;
            }
        }
        merged.push(PotentialRoot { r: s, multiplicity: 1 });
    }
    merged.extend(doubles.into_iter().map(|r| PotentialRoot { r, multiplicity: 2 }));
    merged.sort_by(|x, y| x.r.total_cmp(&y.r));

    let case = if c.energy == 0.0 {
        PotentialCase::ATurning
    } else if merged.iter().any(|x| x.multiplicity >= 2) {
        PotentialCase::B3DoubleRoot
    } else if merged.is_empty() {
        PotentialCase::B1Monotone
    } else {
        PotentialCase::B2TwoRoots
    };
    Ok(PotentialClassification { case, roots: merged })
}

/// Constants (E = 1, L, K) of the spherical photon orbit at radius r, from
/// P(r) = P′(r) = 0. At a = 0 the equatorial orbit (K = L²) is returned.
pub fn circular_orbit_constants(params: &KerrParams, r: f64) -> Result<ConservedSet> {
    circular_orbit_constants_in::<f64>(params, r)
}

pub fn circular_orbit_constants_in<S: Scalar>(params: &KerrParams, r: S) -> Result<ConservedSet<S>> {
    let m = params.mass();
    let a_f = params.spin();
    let rf = r.to_f64();
    let off = (rf - 3.0 * m).abs();
    if off > 2.0 * a_f.abs() + 1e-9 * m {
        return Err(Error::NoDoubleRoot {
            r: rf,
            reason: format!("|r - 3M| = {off} exceeds 2|a| = {}", 2.0 * a_f.abs()),
        });
    }
    let a: S = lit(a_f);
    let two: S = lit(2.0);
    let sum = r * r + a * a;
    let delta = sum - two * lit::<S>(m) * r;
    let d_delta = two * (r - lit::<S>(m));
    // unknowns ℓ = aL and K; with E = 1, W = S − ℓ
    let mut ell = S::zero();
    let mut k: S = lit(27.0 * m * m);
    let tol = 16.0 * S::epsilon();
    let mut converged = false;
    for _ in 0..50 {
        let w = sum - ell;
        let f1 = w * w - k * delta;
        let f2 = lit::<S>(4.0) * r * w - k * d_delta;
        // ∂F/∂(ℓ, K)
        let j11 = -two * w;
        let j12 = -delta;
        let j21 = -lit::<S>(4.0) * r;
        let j22 = -d_delta;
        let det = j11 * j22 - j12 * j21;
        if det.to_f64() == 0.0 || !det.to_f64().is_finite() {
            break;
        }
        let d_ell = (f1 * j22 - f2 * j12) / det;
        let d_k = (j11 * f2 - j21 * f1) / det;
        ell = ell - d_ell;
        k = k - d_k;
        let size = d_ell.abs().to_f64() / sum.to_f64() + d_k.abs().to_f64() / k.abs().to_f64().max(m * m);
        if size <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoDoubleRoot {
            r: rf,
            reason: "Newton iteration for (L, K) did not converge in 50 steps".into(),
        });
    }
    let w = sum - ell;
    let res1 = (w * w - k * delta).to_f64().abs() / (sum * sum).to_f64();
    let res2 = (lit::<S>(4.0) * r * w - k * d_delta).to_f64().abs() / (lit::<S>(4.0) * r * sum).to_f64();
    if res1.max(res2) > 1e-10 {
        return Err(Error::NoDoubleRoot {
            r: rf,
            reason: format!("residuals ({res1}, {res2}) too large"),
        });
    }
    let l = if a_f == 0.0 {
        if ell.to_f64().abs() > 1e-9 * sum.to_f64() {
            return Err(Error::NoDoubleRoot {
                r: rf,
                reason: "no spherical photon orbit off r = 3M when a = 0".into(),
            });
        }
        k.sqrt()
    } else {
        ell / a
    };
    // the polar equation needs K ≥ min over sin²θ ∈ (0, 1] of (L − a sin²θ)²/sin²θ
    let (lf, kf) = (l.to_f64(), k.to_f64());
    let need = if a_f == 0.0 || (lf / a_f).abs() >= 1.0 {
        (lf - a_f) * (lf - a_f)
    } else {
        2.0 * ((a_f * lf).abs() - a_f * lf)
    };
    if kf < need - 1e-10 * kf.abs().max(m * m) {
        return Err(Error::NoDoubleRoot {
            r: rf,
            reason: format!("polar equation inadmissible: K = {kf} < {need}"),
        });
    }
    Ok(ConservedSet::new(S::one(), l, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    HorizonApproach,
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSample {
    pub s: f64,
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub tau: f64,
    pub xi: f64,
    pub big_theta: f64,
    pub big_phi: f64,
    pub p_residual: f64,
}

impl GeodesicSample {
    fn point(&self) -> PhasePoint {
        PhasePoint {
            t: self.t,
            r: self.r,
            theta: self.theta,
            phi: self.phi,
            tau: self.tau,
            xi: self.xi,
            big_theta: self.big_theta,
            big_phi: self.big_phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicRecord {
    pub params: KerrParams,
    pub constants: ConservedSet,
    pub samples: Vec<GeodesicSample>,
    pub termination: Termination,
    pub null_residual: f64,
    pub conserved_drift: f64,
    pub tol: f64,
}

impl GeodesicRecord {
    /// Number of sign changes of ṙ (equivalently of ξ outside the horizon).
    pub fn radial_turning_points(&self) -> usize {
        let mut count = 0;
        let mut last = 0.0f64;
        for s in &self.samples {
            let dir = s.xi.signum() * if s.xi == 0.0 { 0.0 } else { 1.0 };
            if dir != 0.0 {
                if last != 0.0 && dir != last {
                    count += 1;
                }
                last = dir;
            }
        }
        count
    }

    /// Affine parameter at which r first leaves (center − half_width, center + half_width),
    /// or the final s if it never does.
    pub fn dwell_time(&self, center: f64, half_width: f64) -> f64 {
        self.samples
            .iter()
            .find(|s| (s.r - center).abs() >= half_width)
            .or(self.samples.last())
            .map_or(0.0, |s| s.s)
    }

    pub fn max_radial_deviation(&self, center: f64) -> f64 {
        self.samples.iter().map(|s| (s.r - center).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub s_max: f64,
    pub tol: f64,
    /// in units of M
    pub max_step: f64,
    /// stop once r ≤ r₊ + horizon_margin·M
    pub horizon_margin: f64,
    /// stop once r ≥ escape_radius·M
    pub escape_radius: f64,
    pub max_steps: usize,
}

impl IntegrationOptions {
    pub fn new(s_max: f64, tol: f64) -> Self {
        Self {
            s_max,
            tol,
            max_step: 1.0,
            horizon_margin: 1e-3,
            escape_radius: 1e3,
            max_steps: 2_000_000,
        }
    }
}

type State<S> = [S; 6];

/// Hamilton's equations for (t, r, θ, φ, ξ, Θ); τ and Φ are constants.
fn hamilton_rhs<S: Scalar>(a: S, m: S, tau: S, big_phi: S, y: &State<S>) -> State<S> {
    let [_, r, theta, _, xi, big_theta] = *y;
    let two: S = lit(2.0);
    let sp = separate(a, m, r, theta, tau, xi, big_theta, big_phi);
    let s2 = sp.sin * sp.sin;
    let rho4 = sp.rho2 * sp.rho2;
    let t_dot = (a * sp.v - sp.w * sp.sum / sp.delta) / sp.rho2;
    let phi_dot = (-a * sp.w / sp.delta + sp.v / s2) / sp.rho2;
    let r_dot = sp.delta * xi / sp.rho2;
    let theta_dot = big_theta / sp.rho2;
    let d_delta = two * (r - m);
    let w_r = two * r * tau;
    let n_r = d_delta * xi * xi - (two * sp.w * w_r * sp.delta - sp.w * sp.w * d_delta) / (sp.delta * sp.delta);
    let xi_dot = -n_r / (two * sp.rho2) + sp.n * r / rho4;
    let n_th = lit::<S>(4.0) * a * tau * sp.v * sp.cos / sp.sin - two * sp.v * sp.v * sp.cos / (s2 * sp.sin);
    let d_rho2 = -two * a * a * sp.cos * sp.sin;
    let big_theta_dot = -n_th / (two * sp.rho2) + sp.n * d_rho2 / (two * rho4);
    [t_dot, r_dot, theta_dot, phi_dot, xi_dot, big_theta_dot]
}

// Dormand–Prince 5(4) tableau as exact ratios; the system is autonomous so
// the nodes are not needed.
const A: [[(f64, f64); 6]; 7] = [
    [(0., 1.); 6],
    [(1., 5.), (0., 1.), (0., 1.), (0., 1.), (0., 1.), (0., 1.)],
    [(3., 40.), (9., 40.), (0., 1.), (0., 1.), (0., 1.), (0., 1.)],
    [(44., 45.), (-56., 15.), (32., 9.), (0., 1.), (0., 1.), (0., 1.)],
    [(19372., 6561.), (-25360., 2187.), (64448., 6561.), (-212., 729.), (0., 1.), (0., 1.)],
    [(9017., 3168.), (-355., 33.), (46732., 5247.), (49., 176.), (-5103., 18656.), (0., 1.)],
    [(35., 384.), (0., 1.), (500., 1113.), (125., 192.), (-2187., 6784.), (11., 84.)],
];
// fifth-order weights minus embedded fourth-order weights
const E: [(f64, f64); 7] = [
    (71., 57600.),
    (0., 1.),
    (-71., 16695.),
    (71., 1920.),
    (-17253., 339200.),
    (22., 525.),
    (-1., 40.),
];

fn ratio<S: Scalar>(q: (f64, f64)) -> S {
    lit::<S>(q.0) / lit::<S>(q.1)
}

struct Tableau<S> {
    a: [[S; 6]; 7],
    e: [S; 7],
}

impl<S: Scalar> Tableau<S> {
    fn new() -> Self {
        let mut a = [[S::zero(); 6]; 7];
        for (i, row) in A.iter().enumerate() {
            for (j, q) in row.iter().enumerate() {
                a[i][j] = ratio(*q);
            }
        }
        let mut e = [S::zero(); 7];
        for (i, q) in E.iter().enumerate() {
            e[i] = ratio(*q);
        }
        Self { a, e }
    }
}

/// Integrates a null ray from `start`, whose covector must carry the constants `c`.
pub fn integrate_null_geodesic(
    params: &KerrParams,
    start: &PhasePoint,
    c: &ConservedSet,
    s_max: f64,
    tol: f64,
) -> Result<GeodesicRecord> {
    integrate_with(params, start, c, &IntegrationOptions::new(s_max, tol))
}

pub fn integrate_with<S: Scalar>(
    params: &KerrParams,
    start: &PhasePoint<S>,
    c: &ConservedSet<S>,
    opts: &IntegrationOptions,
) -> Result<GeodesicRecord> {
    let m_f = params.mass();
    let r_plus = params.r_plus();
    let r_stop = r_plus + opts.horizon_margin * m_f;
    if !(start.r.to_f64() > r_stop) {
        return Err(Error::DomainError {
            r: start.r.to_f64(),
            bound: r_stop,
        });
    }
    let residual0 = start.null_residual(params);
    if residual0 > opts.tol.max(64.0 * S::epsilon()) {
        return Err(Error::NotNull { residual: residual0 });
    }
    let own = start.conserved(params);
    let mismatch = |x: S, y: S| {
        let d = (x - y).abs().to_f64();
        d > 1e-8 * (1.0 + y.abs().to_f64())
    };
    if mismatch(own.energy, c.energy) || mismatch(own.angular_momentum, c.angular_momentum) || mismatch(own.carter, c.carter) {
        return Err(Error::InvalidParams(format!(
            "start covector carries {:?}, expected {:?}",
            own.to_f64(),
            c.to_f64()
        )));
    }

    let a: S = lit(params.spin());
    let m: S = lit(m_f);
    let (tau, big_phi) = (start.tau, start.big_phi);
    let tab = Tableau::<S>::new();
    let rhs = |y: &State<S>| hamilton_rhs(a, m, tau, big_phi, y);

    let sample = |s: f64, y: &State<S>| -> (GeodesicSample, f64) {
        let pt = PhasePoint {
            t: y[0],
            r: y[1],
            theta: y[2],
            phi: y[3],
            tau,
            xi: y[4],
            big_theta: y[5],
            big_phi,
        };
        let res = pt.null_residual(params);
        let k = pt.conserved(params).carter;
        let k0 = c.carter.abs().to_f64();
        let drift = (k - c.carter).abs().to_f64() / if k0 == 0.0 { 1.0 } else { k0 };
        (
            GeodesicSample {
                s,
                t: y[0].to_f64(),
                r: y[1].to_f64(),
                theta: y[2].to_f64(),
                phi: y[3].to_f64(),
                tau: tau.to_f64(),
                xi: y[4].to_f64(),
                big_theta: y[5].to_f64(),
                big_phi: big_phi.to_f64(),
                p_residual: res,
            },
            drift,
        )
    };

    let mut y: State<S> = [start.t, start.r, start.theta, start.phi, start.xi, start.big_theta];
    let mut s = 0.0f64;
    let (first, mut drift) = sample(0.0, &y);
    let mut null_residual = first.p_residual;
    let mut samples = vec![first];
    let max_step = opts.max_step * m_f;
    let mut h = (0.01 * m_f).min(max_step).min(opts.s_max);
    let mut k1 = rhs(&y);
    let mut termination = Termination::Completed;
    let mut steps = 0usize;

    while s < opts.s_max {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepFailure {
                s,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        if s + h > opts.s_max {
            h = opts.s_max - s;
        }
        let hs: S = lit(h);
        let mut k = [k1; 7];
        let mut y_new = y;
        for stage in 1..7 {
            let mut yi = y;
            for (comp, v) in yi.iter_mut().enumerate() {
                let mut acc = S::zero();
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc = acc + tab.a[stage][j] * kj[comp];
                }
                *v = *v + hs * acc;
            }
            k[stage] = rhs(&yi);
            if stage == 6 {
                y_new = yi;
            }
        }
        let mut err = 0.0f64;
        for comp in 0..6 {
            let mut acc = S::zero();
            for (j, kj) in k.iter().enumerate() {
                acc = acc + tab.e[j] * kj[comp];
            }
            let e = (hs * acc).to_f64().abs();
            let sc = opts.tol + opts.tol * y[comp].to_f64().abs().max(y_new[comp].to_f64().abs());
            err = err.max(e / sc);
        }
        let r_new = y_new[1].to_f64();
        if !err.is_finite() || y_new.iter().any(|v| !v.to_f64().is_finite()) || r_new <= r_plus + 0.5 * opts.horizon_margin * m_f {
            h *= 0.25;
            if h < 1e-14 * m_f.max(s.abs()) {
                return Err(Error::StepFailure {
                    s,
                    reason: "step size underflow".into(),
                });
            }
            continue;
        }
        if err <= 1.0 {
            s += h;
            y = y_new;
            k1 = k[6];
            let (smp, d) = sample(s, &y);
            null_residual = null_residual.max(smp.p_residual);
            drift = drift.max(d);
            samples.push(smp);
            if r_new <= r_stop {
                termination = Termination::HorizonApproach;
                break;
            }
            if r_new >= opts.escape_radius * m_f {
                termination = Termination::Escaped;
                break;
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * fac).min(max_step);
        if h < 1e-14 * m_f.max(s.abs()) {
            return Err(Error::StepFailure {
                s,
                reason: "tolerance unachievable".into(),
            });
        }
    }

    Ok(GeodesicRecord {
        params: *params,
        constants: c.to_f64(),
        samples,
        termination,
        null_residual,
        conserved_drift: drift,
        tol: opts.tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub max_drift: f64,
    pub worst_sample: usize,
    /// drift above 10·tol
    pub flagged: bool,
}

/// Recomputes (E, L, K) from every sample and reports the largest drift
/// relative to the record's constants.
pub fn conserved_drift(record: &GeodesicRecord) -> DriftReport {
    let c = record.constants;
    let m = record.params.mass();
    let rel = |x: f64, y: f64, unit: f64| (x - y).abs() / y.abs().max(unit);
    let mut worst = (0.0f64, 0usize);
    for (i, s) in record.samples.iter().enumerate() {
        let own = s.point().conserved(&record.params);
        let d = rel(own.energy, c.energy, 1e-300)
            .max(rel(own.angular_momentum, c.angular_momentum, m * 1e-300))
            .max(rel(own.carter, c.carter, 1e-300));
        let d = if d.is_finite() { d } else { f64::INFINITY };
        if d > worst.0 {
            worst = (d, i);
        }
    }
    DriftReport {
        max_drift: worst.0,
        worst_sample: worst.1,
        flagged: worst.0 > 10.0 * record.tol,
    }
}
