//! Trapped set in phase space: the polynomial R_a, its root r_a(τ, Φ) near
//! the photon sphere, the spatial trapping inequality and the factorisation of
//! the principal symbol in τ.

use crate::error::{Error, Result};
use crate::geometry::{bl_inverse, KerrParams};

/// Largest |Φ|/(M|τ|) accepted by the trapped-radius queries.
pub const CONE_RATIO: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPair {
    pub tau: f64,
    pub big_phi: f64,
}

impl FrequencyPair {
    pub fn new(tau: f64, big_phi: f64) -> Self {
        Self { tau, big_phi }
    }

    /// Φ/(Mτ).
    pub fn ratio(&self, params: &KerrParams) -> f64 {
        self.big_phi / (params.mass() * self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrappedRoot {
    pub r_a: f64,
    /// (r_a − 3M)/a, absent when a = 0
    pub f_value: Option<f64>,
    pub newton_iters: usize,
}

/// R_a(r, τ, Φ) = (r² + a²)(r³ − 3Mr² + a²r + a²M)τ² − 2aM(r² − a²)τΦ − a²(r − M)Φ².
pub fn r_polynomial(params: &KerrParams, r: f64, tau: f64, big_phi: f64) -> f64 {
    let a = params.spin();
    let m = params.mass();
    let a2 = a * a;
    (r * r + a2) * (r * r * r - 3.0 * m * r * r + a2 * r + a2 * m) * tau * tau
        - 2.0 * a * m * (r * r - a2) * tau * big_phi
        - a2 * (r - m) * big_phi * big_phi
}

fn r_polynomial_dr(params: &KerrParams, r: f64, tau: f64, big_phi: f64) -> f64 {
    let a = params.spin();
    let m = params.mass();
    let a2 = a * a;
    let cubic = r * r * r - 3.0 * m * r * r + a2 * r + a2 * m;
    let d_cubic = 3.0 * r * r - 6.0 * m * r + a2;
    (2.0 * r * cubic + (r * r + a2) * d_cubic) * tau * tau - 4.0 * a * m * r * tau * big_phi - a2 * big_phi * big_phi
}

fn check_cone(params: &KerrParams, tau: f64, big_phi: f64) -> Result<()> {
    let ratio = if big_phi == 0.0 {
        0.0
    } else {
        big_phi / (params.mass() * tau)
    };
    if !(ratio.abs() <= CONE_RATIO) {
        return Err(Error::FrequencyCone { ratio });
    }
    Ok(())
}

/// Simple root of R_a near 3M. Newton from 3M, bisection on
/// [3M − 2.5|a|, 3M + 2.5|a|] if Newton wanders off.
pub fn trapped_radius(params: &KerrParams, tau: f64, big_phi: f64) -> Result<TrappedRoot> {
    check_cone(params, tau, big_phi)?;
    let m = params.mass();
    let a = params.spin();
    let scale = tau * tau * (3.0 * m).powi(5);
    let (lo, hi) = (3.0 * m - 2.5 * a.abs(), 3.0 * m + 2.5 * a.abs());
    let done = |r: f64, iters: usize| TrappedRoot {
        r_a: r,
        f_value: (a != 0.0).then(|| (r - 3.0 * m) / a),
        newton_iters: iters,
    };

    let mut r = 3.0 * m;
    for it in 0..30 {
        let f = r_polynomial(params, r, tau, big_phi);
        if f.abs() <= 1e-14 * scale {
            return Ok(done(r, it));
        }
        let df = r_polynomial_dr(params, r, tau, big_phi);
        let next = r - f / df;
        if !next.is_finite() || next < lo || next > hi {
            break;
        }
        if (next - r).abs() <= 4.0 * f64::EPSILON * r {
            let f = r_polynomial(params, next, tau, big_phi);
            if f.abs() <= 1e-12 * scale {
                return Ok(done(next, it + 1));
            }
        }
        r = next;
    }

    let (f_lo, f_hi) = (r_polynomial(params, lo, tau, big_phi), r_polynomial(params, hi, tau, big_phi));
    if (f_lo < 0.0) == (f_hi < 0.0) {
        return Err(Error::NoConvergence { iterations: 30 });
    }
    let (mut x0, mut x1) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (x0 + x1);
        if mid <= x0 || mid >= x1 {
            break;
        }
        if (r_polynomial(params, mid, tau, big_phi) < 0.0) == (f_lo < 0.0) {
            x0 = mid;
        } else {
            x1 = mid;
        }
    }
    let r = 0.5 * (x0 + x1);
    if r_polynomial(params, r, tau, big_phi).abs() > 1e-12 * scale {
        return Err(Error::NoConvergence { iterations: 30 });
    }
    Ok(done(r, 30))
}

/// Returns (holds, margin) with margin = 4a²r²Δ sin²θ − (2rΔ − (r − M)ρ²)².
pub fn trapped_condition(params: &KerrParams, r: f64, theta: f64) -> (bool, f64) {
    let a = params.spin();
    let m = params.mass();
    let delta = params.delta(r);
    let rho2 = params.rho2(r, theta);
    let s = theta.sin();
    let lhs = 2.0 * r * delta - (r - m) * rho2;
    let margin = 4.0 * a * a * r * r * delta * s * s - lhs * lhs;
    (margin >= 0.0, margin)
}

/// Real roots τ₁ > τ₂ of p(r, θ; ·, ξ, Θ, Φ) = 0.
pub fn tau_roots(params: &KerrParams, r: f64, theta: f64, xi: f64, big_theta: f64, big_phi: f64) -> Result<(f64, f64)> {
    if xi == 0.0 && big_theta == 0.0 && big_phi == 0.0 {
        return Err(Error::InvalidParams("covector (xi, Theta, Phi) vanishes".into()));
    }
    let g = bl_inverse(params, r, theta)?;
    let qa = g.tt;
    let qb = 2.0 * g.t_phi * big_phi;
    let qc = g.phi_phi * big_phi * big_phi + g.rr * xi * xi + g.theta_theta * big_theta * big_theta;
    let disc = qb * qb - 4.0 * qa * qc;
    if !(disc > 0.0) {
        return Err(Error::ComplexRoots { discriminant: disc });
    }
    // cancellation-free pair
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    let (x, y) = if q == 0.0 {
        let h = (-qc / qa).sqrt();
        (h, -h)
    } else {
        (q / qa, qc / q)
    };
    Ok((x.max(y), x.min(y)))
}

/// c_i = r − r_a(τ_i, Φ) for the two τ-roots.
pub fn c_symbols(params: &KerrParams, r: f64, theta: f64, xi: f64, big_theta: f64, big_phi: f64) -> Result<(f64, f64)> {
    let (t1, t2) = tau_roots(params, r, theta, xi, big_theta, big_phi)?;
    let r1 = trapped_radius(params, t1, big_phi)?.r_a;
    let r2 = trapped_radius(params, t2, big_phi)?.r_a;
    Ok((r - r1, r - r2))
}

/// One row per ratio Φ/(Mτ) in [−4, 4] (τ = 1): (a/M, ratio, r_a/M, F).
pub fn trapped_set_table(params: &KerrParams, rows: usize) -> Result<Vec<[f64; 4]>> {
    let m = params.mass();
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let ratio = if rows == 1 {
            0.0
        } else {
            -CONE_RATIO + 2.0 * CONE_RATIO * i as f64 / (rows - 1) as f64
        };
        let root = trapped_radius(params, 1.0, ratio * m)?;
        out.push([params.spin_ratio(), ratio, root.r_a / m, root.f_value.unwrap_or(0.0)]);
    }
    Ok(out)
}
