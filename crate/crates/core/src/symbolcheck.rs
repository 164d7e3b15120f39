//! Pointwise checks of the multiplier symbol identities near the photon sphere.
//!
//! Poisson brackets use {f, g} = f_ξ g_r − f_r g_ξ in the (r, ξ) pair; the
//! other pairs drop out because none of the symbols involved depend on t, φ
//! or on θ and Θ together.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{bl_inverse, KerrParams};
use crate::trapping::{r_polynomial, trapped_radius};

type RadialFn<T> = Arc<dyn Fn(f64) -> T + Send + Sync>;

/// Multiplier data (b, q, ν) for X = i b(r)(1 − 3M/r) ξ.
#[derive(Clone)]
pub struct MultiplierChoice {
    mass: f64,
    b: RadialFn<(f64, f64)>,
    q: RadialFn<f64>,
    nu: RadialFn<f64>,
}

impl std::fmt::Debug for MultiplierChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiplierChoice").field("mass", &self.mass).finish_non_exhaustive()
    }
}

impl MultiplierChoice {
    pub fn new(
        mass: f64,
        b: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
        nu: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            mass,
            b: Arc::new(b),
            q: Arc::new(q),
            nu: Arc::new(nu),
        }
    }

    /// b ≡ 1, ν ≡ ½ and the q that makes the pair consistent:
    /// q = (r − 3M)/r + (r − 3M)²/(2r²(r − 2M)).
    pub fn standard(mass: f64) -> Self {
        let m = mass;
        Self::new(
            mass,
            |_| (1.0, 0.0),
            move |r| (r - 3.0 * m) / r + (r - 3.0 * m).powi(2) / (2.0 * r * r * (r - 2.0 * m)),
            |_| 0.5,
        )
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// (b, b′)
    pub fn b(&self, r: f64) -> (f64, f64) {
        (self.b)(r)
    }

    pub fn q(&self, r: f64) -> f64 {
        (self.q)(r)
    }

    pub fn nu(&self, r: f64) -> f64 {
        (self.nu)(r)
    }

    pub fn alpha2(&self, r: f64) -> f64 {
        let m = self.mass;
        let (b, _) = self.b(r);
        r * b * (r - 3.0 * m).powi(2) / (r - 2.0 * m).powi(2)
    }

    pub fn beta2(&self, r: f64) -> f64 {
        let m = self.mass;
        let (b, db) = self.b(r);
        let f = r * r - 2.0 * m * r;
        3.0 * m / (r * r) * b * f + (1.0 - 3.0 * m / r) * (db * f - b * (r - m))
    }

    /// q̃ = q − r⁻¹ b (r − 3M)
    pub fn q_tilde(&self, r: f64) -> f64 {
        self.q(r) - self.b(r).0 * (r - 3.0 * self.mass) / r
    }

    /// |r³ q̃/(r − 2M) − ν α²|, zero for a consistent triple.
    pub fn consistency_residual(&self, r: f64) -> f64 {
        let m = self.mass;
        (r.powi(3) / (r - 2.0 * m) * self.q_tilde(r) - self.nu(r) * self.alpha2(r)).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSample {
    pub r: f64,
    pub theta: f64,
    /// (τ, ξ, Θ, Φ); for Schwarzschild samples Θ holds λ and Φ is zero
    pub covector: [f64; 4],
    pub values: BTreeMap<&'static str, f64>,
}

impl SymbolSample {
    pub fn get(&self, key: &str) -> f64 {
        self.values.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// Evaluation window for the symbol identities, in units of M.
pub const WINDOW: (f64, f64) = (2.5, 3.5);

fn in_window(mass: f64, r: f64) -> Result<()> {
    if r < WINDOW.0 * mass || r > WINDOW.1 * mass {
        return Err(Error::DomainError {
            r,
            bound: WINDOW.0 * mass,
        });
    }
    Ok(())
}

/// p = g^{tt}τ² + 2g^{tφ}τΦ + g^{φφ}Φ² + g^{rr}ξ² + g^{θθ}Θ².
pub fn principal_symbol(params: &KerrParams, r: f64, theta: f64, tau: f64, xi: f64, big_theta: f64, big_phi: f64) -> Result<f64> {
    let g = bl_inverse(params, r, theta)?;
    Ok(g.tt * tau * tau
        + 2.0 * g.t_phi * tau * big_phi
        + g.phi_phi * big_phi * big_phi
        + g.rr * xi * xi
        + g.theta_theta * big_theta * big_theta)
}

/// Schwarzschild symbol r²p and its r, ξ partials.
fn r2p_schwarzschild(m: f64, r: f64, tau: f64, xi: f64, lambda: f64) -> (f64, f64, f64) {
    let f = r * r - 2.0 * m * r;
    let val = -r.powi(3) / (r - 2.0 * m) * tau * tau + f * xi * xi + lambda * lambda;
    let d_r = -2.0 * r * r * (r - 3.0 * m) / (r - 2.0 * m).powi(2) * tau * tau + (2.0 * r - 2.0 * m) * xi * xi;
    let d_xi = 2.0 * f * xi;
    (val, d_r, d_xi)
}

/// r²q^S = (1/2i){r²p, X} + q̃ r²p against the α_S²/β_S² form and the
/// sum-of-squares regrouping.
pub fn schwarzschild_q_decomposition(choice: &MultiplierChoice, r: f64, tau: f64, xi: f64, lambda: f64) -> Result<SymbolSample> {
    let m = choice.mass();
    in_window(m, r)?;
    let inconsistency = choice.consistency_residual(r);
    if inconsistency > 1e-10 * m {
        return Err(Error::ChoiceInconsistent {
            r,
            residual: inconsistency,
        });
    }
    let (r2p, r2p_r, r2p_xi) = r2p_schwarzschild(m, r, tau, xi, lambda);
    let (b, db) = choice.b(r);
    let y = b * (1.0 - 3.0 * m / r);
    let y_r = db * (1.0 - 3.0 * m / r) + 3.0 * m * b / (r * r);
    // X/i = y ξ
    let bracket = 0.5 * (r2p_xi * y_r * xi - r2p_r * y);
    let qt = choice.q_tilde(r);
    let r2qs = bracket + qt * r2p;

    let alpha2 = choice.alpha2(r);
    let beta2 = choice.beta2(r);
    let nu = choice.nu(r);
    let nu1 = (r - 2.0 * m) / r.powi(3) * nu;
    let squares = alpha2 * tau * tau + beta2 * xi * xi;
    let regrouped = (1.0 - nu) * alpha2 * tau * tau
        + beta2 * xi * xi
        + nu1 * alpha2 * (lambda * lambda + (r * r - 2.0 * r * m) * xi * xi);
    let scale = (alpha2 * tau * tau).abs() + (beta2 * xi * xi).abs() + (qt * r2p).abs();
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut values = BTreeMap::new();
    values.insert("p", r2p / (r * r));
    values.insert("r2p", r2p);
    values.insert("qS", r2qs / (r * r));
    values.insert("alpha2", alpha2);
    values.insert("beta2", beta2);
    values.insert("q_tilde", qt);
    values.insert("bracket", bracket);
    values.insert("residual", (r2qs - (squares + qt * r2p)).abs() / scale);
    values.insert("residual_sum_of_squares", (r2qs - regrouped).abs() / scale);
    Ok(SymbolSample {
        r,
        theta: std::f64::consts::FRAC_PI_2,
        covector: [tau, xi, lambda, 0.0],
        values,
    })
}

/// x(r) = b(r)(r − r_a)/r and x′(r).
fn trapped_weight(b: (f64, f64), r: f64, r_a: f64) -> (f64, f64) {
    let (b, db) = b;
    (b * (r - r_a) / r, db * (r - r_a) / r + b * r_a / (r * r))
}

fn kerr_admissible(params: &KerrParams, r: f64, tau: f64, big_phi: f64) -> Result<f64> {
    in_window(params.mass(), r)?;
    Ok(trapped_radius(params, tau, big_phi)?.r_a)
}

/// (1/2i){ρ²p, s̃} for s̃ = i r⁻¹ b (r − r_a(τ, Φ)) ξ with b ≡ 1:
/// x R_a Δ⁻² + (Δ x′ − (r − M) x) ξ².
pub fn kerr_bracket(params: &KerrParams, r: f64, theta: f64, tau: f64, xi: f64, big_theta: f64, big_phi: f64) -> Result<f64> {
    kerr_bracket_with(&MultiplierChoice::standard(params.mass()), params, r, theta, tau, xi, big_theta, big_phi)
}

#[allow(clippy::too_many_arguments)]
pub fn kerr_bracket_with(
    choice: &MultiplierChoice,
    params: &KerrParams,
    r: f64,
    _theta: f64,
    tau: f64,
    xi: f64,
    _big_theta: f64,
    big_phi: f64,
) -> Result<f64> {
    let r_a = kerr_admissible(params, r, tau, big_phi)?;
    let m = params.mass();
    let delta = params.delta(r);
    let (x, dx) = trapped_weight(choice.b(r), r, r_a);
    Ok(x * r_polynomial(params, r, tau, big_phi) / (delta * delta) + (delta * dx - (r - m) * x) * xi * xi)
}

/// The same bracket from centred differences of ρ²p and s̃/i, Richardson
/// extrapolated.
#[allow(clippy::too_many_arguments)]
pub fn fd_kerr_bracket(
    choice: &MultiplierChoice,
    params: &KerrParams,
    r: f64,
    theta: f64,
    tau: f64,
    xi: f64,
    big_theta: f64,
    big_phi: f64,
) -> Result<f64> {
    let r_a = kerr_admissible(params, r, tau, big_phi)?;
    let f = |rr: f64, xx: f64| -> Result<f64> {
        Ok(params.rho2(rr, theta) * principal_symbol(params, rr, theta, tau, xx, big_theta, big_phi)?)
    };
    let g = |rr: f64, xx: f64| choice.b(rr).0 * (rr - r_a) / rr * xx;
    let h0 = 1e-6 * params.mass();
    let central = |h: f64| -> Result<f64> {
        let f_r = (f(r + h, xi)? - f(r - h, xi)?) / (2.0 * h);
        let hx = h * (1.0 + xi.abs()) / params.mass();
        let f_xi = (f(r, xi + hx)? - f(r, xi - hx)?) / (2.0 * hx);
        let g_r = (g(r + h, xi) - g(r - h, xi)) / (2.0 * h);
        let g_xi = (g(r, xi + hx) - g(r, xi - hx)) / (2.0 * hx);
        Ok(0.5 * (f_xi * g_r - f_r * g_xi))
    };
    let coarse = central(h0)?;
    let fine = central(0.5 * h0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Tolerance for negative bracket values, relative to |k|².
pub const ZERO_BRACKET: f64 = 1e-14;

/// Bracket values below ZERO_LOCUS·|k|² count as zeros of the bracket.
pub const ZERO_LOCUS: f64 = 1e-17;

/// Kerr bracket sample on an arbitrary covector, with the finite-difference
/// cross-check and the characteristic-set value of p.
#[allow(clippy::too_many_arguments)]
pub fn kerr_sample(params: &KerrParams, r: f64, theta: f64, tau: f64, xi: f64, big_theta: f64, big_phi: f64) -> Result<SymbolSample> {
    let choice = MultiplierChoice::standard(params.mass());
    let closed = kerr_bracket_with(&choice, params, r, theta, tau, xi, big_theta, big_phi)?;
    let fd = fd_kerr_bracket(&choice, params, r, theta, tau, xi, big_theta, big_phi)?;
    let p = principal_symbol(params, r, theta, tau, xi, big_theta, big_phi)?;
    let r_a = trapped_radius(params, tau, big_phi)?.r_a;
    let k2 = tau * tau + xi * xi + big_theta * big_theta + big_phi * big_phi;
    let mut values = BTreeMap::new();
    values.insert("p", p);
    values.insert("rho2p", params.rho2(r, theta) * p);
    values.insert("bracket", closed);
    values.insert("bracket_fd", fd);
    values.insert("r_a", r_a);
    values.insert("norm2", k2);
    values.insert("residual", (closed - fd).abs() / closed.abs().max(ZERO_BRACKET * k2));
    Ok(SymbolSample {
        r,
        theta,
        covector: [tau, xi, big_theta, big_phi],
        values,
    })
}
