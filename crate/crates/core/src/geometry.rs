//! Kerr background in Boyer–Lindquist and horizon-penetrating charts.
//!
//! Coordinates are ordered (time, r, θ, azimuth) in every chart. The
//! horizon-penetrating chart uses (ṽ, r, θ, φ̃) with
//! ṽ = v₊ − μ(r) and φ̃ = ζ(r) φ₊ + (1 − ζ(r)) φ; it coincides with
//! Boyer–Lindquist wherever μ = r* and ζ = 0.

use nalgebra::Matrix4;

use crate::error::{Error, Result};

/// Largest |a|/M accepted by [`KerrParams::new`].
pub const DEFAULT_MAX_SPIN_RATIO: f64 = 0.3;

pub type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrParams {
    mass: f64,
    spin: f64,
}

impl KerrParams {
    /// Mass `mass` and specific angular momentum `spin`, restricted to the
    /// small angular momentum regime |a|/M ≤ 0.3.
    pub fn new(mass: f64, spin: f64) -> Result<Self> {
        Self::with_spin_limit(mass, spin, DEFAULT_MAX_SPIN_RATIO)
    }

    pub fn with_spin_limit(mass: f64, spin: f64, max_spin_ratio: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParams(format!("mass must be positive, got {mass}")));
        }
        if !spin.is_finite() {
            return Err(Error::InvalidParams("spin must be finite".into()));
        }
        if spin.abs() >= mass {
            return Err(Error::InvalidParams(format!(
                "subextremal |a| < M required, got a/M = {}",
                spin / mass
            )));
        }
        if spin.abs() / mass > max_spin_ratio {
            return Err(Error::InvalidParams(format!(
                "|a|/M = {} exceeds the small angular momentum limit {max_spin_ratio}",
                spin.abs() / mass
            )));
        }
        Ok(Self { mass, spin })
    }

    pub fn schwarzschild(mass: f64) -> Self {
        assert!(mass > 0.0);
        Self { mass, spin: 0.0 }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spin(&self) -> f64 {
        self.spin
    }

    pub fn spin_ratio(&self) -> f64 {
        self.spin / self.mass
    }

    #[inline]
    pub fn delta(&self, r: f64) -> f64 {
        r * r - 2.0 * self.mass * r + self.spin * self.spin
    }

    #[inline]
    pub fn rho2(&self, r: f64, theta: f64) -> f64 {
        let c = theta.cos();
        r * r + self.spin * self.spin * c * c
    }

    /// (r₋, r₊) = M ∓ √(M² − a²).
    pub fn horizon_radii(&self) -> (f64, f64) {
        let m = self.mass;
        let r_plus = m + (m * m - self.spin * self.spin).sqrt();
        // r₋ r₊ = a², avoids cancellation for small a
        let r_minus = self.spin * self.spin / r_plus;
        (r_minus, r_plus)
    }

    pub fn r_plus(&self) -> f64 {
        self.horizon_radii().1
    }
}

pub fn horizon_radii(params: &KerrParams) -> (f64, f64) {
    params.horizon_radii()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChartId {
    BoyerLindquist,
    HorizonPenetrating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricAtPoint {
    pub chart: ChartId,
    pub r: f64,
    pub theta: f64,
    pub g: Mat4,
    pub ginv: Mat4,
    pub sqrt_neg_det: f64,
}

impl MetricAtPoint {
    /// max-abs entry of g·ginv − I.
    pub fn identity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += self.g[i][k] * self.ginv[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// C² polynomial step clamped to [0, 1]: returns (s, s′).
pub fn smooth_step(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0)
    } else {
        let x2 = x * x;
        let x3 = x2 * x;
        (
            x3 * (10.0 - 15.0 * x + 6.0 * x2),
            30.0 * x2 * (1.0 - 2.0 * x + x2),
        )
    }
}

/// Tortoise coordinate r* = ∫ (r² + a²)/Δ dr, normalised so that
/// r*(3M) = 0 in the Schwarzschild limit.
pub fn tortoise(params: &KerrParams, r: f64) -> Result<f64> {
    let (r_minus, r_plus) = params.horizon_radii();
    if !(r > r_plus) {
        return Err(Error::DomainError { r, bound: r_plus });
    }
    let m = params.mass();
    let width = r_plus - r_minus;
    let a_plus = 2.0 * m * r_plus / width;
    let a_minus = 2.0 * m * r_minus / width;
    let minus_term = if a_minus == 0.0 {
        0.0
    } else {
        a_minus * ((r - r_minus) / m).ln()
    };
    Ok(r + a_plus * ((r - r_plus) / m).ln() - minus_term - 3.0 * m)
}

/// Knobs of the horizon-penetrating chart, all in units of M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileConfig {
    /// centre of the μ′ transition step
    pub step_center: f64,
    /// width of the μ′ transition step
    pub step_width: f64,
    /// ζ = 1 on [r_e, r₊ + zeta_inner]
    pub zeta_inner: f64,
    /// ζ = 0 for r ≥ r₊ + zeta_outer
    pub zeta_outer: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            step_center: 2.3,
            step_width: 0.4,
            zeta_inner: 0.5,
            zeta_outer: 1.0,
        }
    }
}

/// Radial profiles μ, ζ, λ and r* of the horizon-penetrating chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartProfiles {
    params: KerrParams,
    config: ProfileConfig,
    r_minus: f64,
    r_plus: f64,
}

impl ChartProfiles {
    /// Builds the profiles without sampling the chart conditions.
    pub fn unchecked(params: KerrParams, config: ProfileConfig) -> Self {
        let (r_minus, r_plus) = params.horizon_radii();
        Self {
            params,
            config,
            r_minus,
            r_plus,
        }
    }

    pub fn params(&self) -> &KerrParams {
        &self.params
    }

    pub fn config(&self) -> &ProfileConfig {
        &self.config
    }

    /// Upper edge of the μ′ transition; μ = r* above it.
    pub fn mu_equality_radius(&self) -> f64 {
        self.params.mass() * (self.config.step_center + 0.5 * self.config.step_width)
    }

    fn h(&self, r: f64) -> f64 {
        let m = self.params.mass();
        smooth_step((self.mu_equality_radius() - r) / (self.config.step_width * m)).0
    }

    /// μ′(r) = (r² + a²)/(Δ + h(r)(r² + a²)).
    pub fn mu_prime(&self, r: f64) -> f64 {
        let s = r * r + self.params.spin() * self.params.spin();
        s / (self.params.delta(r) + self.h(r) * s)
    }

    /// (μ, μ′). Below the equality radius μ is integrated down from r*.
    pub fn mu(&self, r: f64) -> (f64, f64) {
        let r_hi = self.mu_equality_radius();
        let mu_prime = self.mu_prime(r);
        if r >= r_hi {
            let rs = tortoise(&self.params, r).expect("equality radius lies outside the horizon");
            return (rs, mu_prime);
        }
        let top = tortoise(&self.params, r_hi).expect("equality radius lies outside the horizon");
        // composite Simpson on [r, r_hi]
        let n = 2 * (((r_hi - r) / (0.002 * self.params.mass())).ceil() as usize).max(4);
        let h = (r_hi - r) / n as f64;
        let mut acc = self.mu_prime(r) + self.mu_prime(r_hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.mu_prime(r + k as f64 * h);
        }
        (top - acc * h / 3.0, mu_prime)
    }

    /// (ζ, ζ′).
    pub fn zeta(&self, r: f64) -> (f64, f64) {
        let m = self.params.mass();
        let lo = self.r_plus + self.config.zeta_inner * m;
        let width = (self.config.zeta_outer - self.config.zeta_inner) * m;
        let (s, ds) = smooth_step((r - lo) / width);
        (1.0 - s, -ds / width)
    }

    /// λ(r) = a ∫ Δ⁻¹ dr in closed form; only defined for r > r₊.
    pub fn lambda_shift(&self, r: f64) -> f64 {
        let a = self.params.spin();
        if a == 0.0 {
            return 0.0;
        }
        a / (self.r_plus - self.r_minus) * ((r - self.r_plus) / (r - self.r_minus)).ln()
    }

    pub fn rstar(&self, r: f64) -> Result<f64> {
        tortoise(&self.params, r)
    }

    /// dφ₊ = dφ̃ + C(r) dr; C vanishes where ζ ≡ 1.
    fn azimuth_shift_rate(&self, r: f64) -> f64 {
        let (z, dz) = self.zeta(r);
        if z == 1.0 {
            return 0.0;
        }
        let a = self.params.spin();
        -dz * self.lambda_shift(r) + (1.0 - z) * a / self.params.delta(r)
    }

    /// 2 − (1 − 2Mr/ρ²) μ′(r): positive iff ṽ-slices are spacelike.
    pub fn slice_margin(&self, r: f64, theta: f64) -> f64 {
        let p = &self.params;
        2.0 - (1.0 - 2.0 * p.mass() * r / p.rho2(r, theta)) * self.mu_prime(r)
    }
}

/// Builds and validates the chart profiles on [r_min, r_max] by sampling
/// 512 radii (μ′ > 0, spacelike slices, μ ≥ r* outside the horizon).
pub fn chart_profiles(
    params: &KerrParams,
    config: ProfileConfig,
    r_min: f64,
    r_max: f64,
) -> Result<ChartProfiles> {
    let m = params.mass();
    if !(config.step_width > 0.0 && config.zeta_inner > 0.0 && config.zeta_outer > config.zeta_inner) {
        return Err(Error::ProfileViolation(format!("inconsistent profile knobs {config:?}")));
    }
    let profiles = ChartProfiles::unchecked(*params, config);
    if profiles.mu_equality_radius() > 2.5 * m + 1e-12 {
        return Err(Error::ProfileViolation(format!(
            "mu must equal r* for r > 5M/2 but the step ends at {}",
            profiles.mu_equality_radius()
        )));
    }
    let (_, r_plus) = params.horizon_radii();
    if profiles.mu_equality_radius() - config.step_width * m <= r_plus {
        return Err(Error::ProfileViolation("mu step overlaps the horizon".into()));
    }
    if !(r_max > r_min) {
        return Err(Error::ProfileViolation(format!("empty radial range [{r_min}, {r_max}]")));
    }
    const SAMPLES: usize = 512;
    for k in 0..SAMPLES {
        let r = r_min + (r_max - r_min) * k as f64 / (SAMPLES - 1) as f64;
        let mp = profiles.mu_prime(r);
        if !(mp > 0.0 && mp.is_finite()) {
            return Err(Error::ProfileViolation(format!("mu'({r}) = {mp} not positive")));
        }
        for theta in [0.0, std::f64::consts::FRAC_PI_2] {
            let margin = profiles.slice_margin(r, theta);
            if !(margin > 0.0) {
                return Err(Error::ProfileViolation(format!(
                    "slice not spacelike at r={r}, theta={theta}: margin {margin}"
                )));
            }
        }
        if r > r_plus + 1e-6 * m && r < profiles.mu_equality_radius() {
            let (mu, _) = profiles.mu(r);
            let rs = tortoise(params, r)?;
            if mu < rs - 1e-10 * m {
                return Err(Error::ProfileViolation(format!("mu({r}) = {mu} < r* = {rs}")));
            }
        }
    }
    Ok(profiles)
}

/// Closed-form contravariant Boyer–Lindquist components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlInverse {
    pub tt: f64,
    pub t_phi: f64,
    pub rr: f64,
    pub theta_theta: f64,
    pub phi_phi: f64,
}

pub fn bl_inverse(params: &KerrParams, r: f64, theta: f64) -> Result<BlInverse> {
    let a = params.spin();
    let m = params.mass();
    let delta = params.delta(r);
    let rho2 = params.rho2(r, theta);
    let s = theta.sin();
    if delta.abs() < 1e-14 * m * m {
        return Err(Error::ChartSingular { r, theta, component: "g^tt" });
    }
    if s.abs() < 1e-14 {
        return Err(Error::ChartSingular { r, theta, component: "g^phiphi" });
    }
    let s2 = s * s;
    let sum = r * r + a * a;
    Ok(BlInverse {
        tt: -(sum * sum - a * a * delta * s2) / (rho2 * delta),
        t_phi: -a * 2.0 * m * r / (rho2 * delta),
        rr: delta / rho2,
        theta_theta: 1.0 / rho2,
        phi_phi: (delta - a * a * s2) / (rho2 * delta * s2),
    })
}

/// Covariant Boyer–Lindquist components. The off-diagonal entry is the
/// symmetric component, half the dt dφ coefficient of the line element.
pub fn bl_covariant(params: &KerrParams, r: f64, theta: f64) -> Result<Mat4> {
    let a = params.spin();
    let m = params.mass();
    let delta = params.delta(r);
    let rho2 = params.rho2(r, theta);
    if delta.abs() < 1e-14 * m * m {
        return Err(Error::ChartSingular { r, theta, component: "g_rr" });
    }
    let s2 = theta.sin().powi(2);
    let sum = r * r + a * a;
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -(delta - a * a * s2) / rho2;
    g[0][3] = -2.0 * a * m * r * s2 / rho2;
    g[3][0] = g[0][3];
    g[1][1] = rho2 / delta;
    g[2][2] = rho2;
    g[3][3] = (sum * sum - a * a * delta * s2) * s2 / rho2;
    Ok(g)
}

/// Covariant components in the ingoing (v₊, r, θ, φ₊) chart.
pub fn ingoing_covariant(params: &KerrParams, r: f64, theta: f64) -> Mat4 {
    let a = params.spin();
    let m = params.mass();
    let rho2 = params.rho2(r, theta);
    let s2 = theta.sin().powi(2);
    let sum = r * r + a * a;
    let delta = params.delta(r);
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -(1.0 - 2.0 * m * r / rho2);
    g[0][1] = 1.0;
    g[0][3] = -2.0 * a * m * r * s2 / rho2;
    g[1][3] = -a * s2;
    g[2][2] = rho2;
    g[3][3] = (sum * sum - delta * a * a * s2) * s2 / rho2;
    symmetrize(&mut g);
    g
}

fn symmetrize(g: &mut Mat4) {
    for i in 0..4 {
        for j in 0..i {
            g[i][j] = g[j][i];
        }
    }
}

/// gᵀ-style pullback: result = Jᵀ g J.
pub fn pullback(g: &Mat4, jac: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += jac[i][a] * g[i][j] * jac[j][b];
                }
            }
            out[a][b] = s;
        }
    }
    out
}

fn invert(g: &Mat4, r: f64, theta: f64) -> Result<(Mat4, f64)> {
    let m = Matrix4::from_fn(|i, j| g[i][j]);
    let det = m.determinant();
    let inv = m
        .try_inverse()
        .ok_or(Error::ChartSingular { r, theta, component: "det g" })?;
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = inv[(i, j)];
        }
    }
    symmetrize(&mut out);
    if !(det < 0.0) {
        return Err(Error::ChartSingular { r, theta, component: "det g" });
    }
    Ok((out, (-det).sqrt()))
}

/// Background geometry with a fixed set of chart profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacetime {
    pub params: KerrParams,
    pub profiles: ChartProfiles,
}

impl Spacetime {
    pub fn new(params: KerrParams, profiles: ChartProfiles) -> Self {
        Self { params, profiles }
    }

    /// Default profiles, unchecked.
    pub fn with_default_profiles(params: KerrParams) -> Self {
        Self::new(params, ChartProfiles::unchecked(params, ProfileConfig::default()))
    }

    pub fn covariant(&self, chart: ChartId, r: f64, theta: f64) -> Result<Mat4> {
        match chart {
            ChartId::BoyerLindquist => {
                if theta.sin().abs() < 1e-14 {
                    return Err(Error::ChartSingular { r, theta, component: "g^phiphi" });
                }
                bl_covariant(&self.params, r, theta)
            }
            ChartId::HorizonPenetrating => {
                if !(r > 0.0) {
                    return Err(Error::DomainError { r, bound: 0.0 });
                }
                let g_in = ingoing_covariant(&self.params, r, theta);
                let mut jac = [[0.0; 4]; 4];
                for (i, row) in jac.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                jac[0][1] = self.profiles.mu_prime(r);
                jac[3][1] = self.profiles.azimuth_shift_rate(r);
                Ok(pullback(&g_in, &jac))
            }
        }
    }

    pub fn metric_at(&self, chart: ChartId, r: f64, theta: f64) -> Result<MetricAtPoint> {
        let g = self.covariant(chart, r, theta)?;
        let (ginv, sqrt_neg_det) = invert(&g, r, theta)?;
        for row in &ginv {
            for v in row {
                if !v.is_finite() {
                    return Err(Error::ChartSingular { r, theta, component: "ginv" });
                }
            }
        }
        Ok(MetricAtPoint {
            chart,
            r,
            theta,
            g,
            ginv,
            sqrt_neg_det,
        })
    }
}

/// Metric at (r, θ) using the default chart profiles.
pub fn metric_at(params: &KerrParams, chart: ChartId, r: f64, theta: f64) -> Result<MetricAtPoint> {
    Spacetime::with_default_profiles(*params).metric_at(chart, r, theta)
}
