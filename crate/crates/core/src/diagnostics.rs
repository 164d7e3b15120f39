//! Energies, local-energy norms and convergence estimates for single-mode
//! fields on an (r, θ) mesh.
//!
//! All quadratures share one convention: trapezoid in r, midpoint in θ
//! (staggered nodes) with weight sinθ Δθ, a factor 2π from the azimuth and
//! trapezoid in ṽ. Derivatives at nodes are centred, one-sided at the radial
//! ends, with the parity ghost u(−θ) = (−1)^m u(θ) across the axis.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::KerrParams;
use crate::trapping::{tau_roots, trapped_radius, CONE_RATIO};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Increasing radial nodes r_i and staggered polar nodes
/// θ_j = (j + ½)π/n_theta.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Arc<[f64]>,
    pub n_r: usize,
    pub n_theta: usize,
    pub m: i32,
}

impl Mesh {
    pub fn uniform(r_min: f64, dr: f64, n_r: usize, n_theta: usize, m: i32) -> Self {
        Self::from_nodes((0..n_r).map(|i| r_min + i as f64 * dr).collect(), n_theta, m)
    }

    pub fn from_nodes(nodes: Vec<f64>, n_theta: usize, m: i32) -> Self {
        assert!(nodes.windows(2).all(|w| w[1] > w[0]), "radial nodes must increase");
        Self {
            n_r: nodes.len(),
            nodes: nodes.into(),
            n_theta,
            m,
        }
    }

    /// Keeps radial nodes first..first+len.
    pub fn radial_slice(&self, first: usize, len: usize) -> Self {
        Self::from_nodes(self.nodes[first..first + len].to_vec(), self.n_theta, self.m)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn r(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.n_r - 1]
    }

    /// Smallest radial spacing.
    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn dtheta(&self) -> f64 {
        std::f64::consts::PI / self.n_theta as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dtheta()
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    /// Trapezoid weight of radial node i.
    pub fn r_weight(&self, i: usize) -> f64 {
        let lo = if i == 0 { self.nodes[0] } else { self.nodes[i - 1] };
        let hi = if i + 1 == self.n_r { self.nodes[i] } else { self.nodes[i + 1] };
        0.5 * (hi - lo)
    }

    /// Second-order ∂_r of a nodal sequence at node i, one-sided at the ends.
    pub fn radial_derivative(&self, f: impl Fn(usize) -> Complex64, i: usize) -> Complex64 {
        let n = self.n_r;
        let r = &self.nodes;
        if n < 3 {
            return Complex64::new(0.0, 0.0);
        }
        if i == 0 {
            let (h1, h2) = (r[1] - r[0], r[2] - r[1]);
            -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f(0) + (h1 + h2) / (h1 * h2) * f(1) - h1 / (h2 * (h1 + h2)) * f(2)
        } else if i + 1 == n {
            let (h1, h2) = (r[n - 1] - r[n - 2], r[n - 2] - r[n - 3]);
            (2.0 * h1 + h2) / (h1 * (h1 + h2)) * f(n - 1) - (h1 + h2) / (h1 * h2) * f(n - 2)
                + h1 / (h2 * (h1 + h2)) * f(n - 3)
        } else {
            let (h1, h2) = (r[i] - r[i - 1], r[i + 1] - r[i]);
            -h2 / (h1 * (h1 + h2)) * f(i - 1) + (h2 - h1) / (h1 * h2) * f(i) + h1 / (h2 * (h1 + h2)) * f(i + 1)
        }
    }

    /// 2π sinθ_j Δθ.
    pub fn omega_weight(&self, j: usize) -> f64 {
        TWO_PI * self.theta(j).sin() * self.dtheta()
    }

    fn parity(&self) -> f64 {
        if self.m.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Value of the reflected node across the nearer axis.
    pub fn axis_ghost(&self, u_adjacent: Complex64) -> Complex64 {
        u_adjacent * self.parity()
    }
}

/// Pointwise channels entering every energy and norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeChannels {
    pub ur: Complex64,
    pub v: Complex64,
    /// |∇̸u|² = |∂_θu|²/r² + m²|u|²/(r² sin²θ)
    pub ang2: f64,
    pub u: Complex64,
}

impl NodeChannels {
    /// |∂_r u|² + |∂_ṽ u|² + |∇̸u|²
    pub fn energy_density(&self) -> f64 {
        self.ur.norm_sqr() + self.v.norm_sqr() + self.ang2
    }
}

pub fn node_channels(mesh: &Mesh, u: &[Complex64], v: &[Complex64], i: usize, j: usize) -> NodeChannels {
    let at = |ii: usize, jj: usize| u[mesh.idx(ii, jj)];
    let ur = mesh.radial_derivative(|ii| at(ii, j), i);
    let nt = mesh.n_theta;
    let below = if j == 0 { mesh.axis_ghost(at(i, 0)) } else { at(i, j - 1) };
    let above = if j + 1 == nt {
        mesh.axis_ghost(at(i, nt - 1))
    } else {
        at(i, j + 1)
    };
    let ut = (above - below) / (2.0 * mesh.dtheta());
    let r = mesh.r(i);
    let s = mesh.theta(j).sin();
    let uu = at(i, j);
    let m2 = (mesh.m as f64).powi(2);
    NodeChannels {
        ur,
        v: v[mesh.idx(i, j)],
        ang2: (ut.norm_sqr() + m2 * uu.norm_sqr() / (s * s)) / (r * r),
        u: uu,
    }
}

/// Energy of a slice over radial nodes with r in [r_lo, r_hi]; the
/// trapezoid is applied on the sub-range.
pub fn energy_in_range(mesh: &Mesh, u: &[Complex64], v: &[Complex64], r_lo: f64, r_hi: f64) -> f64 {
    let eps = 1e-9 * mesh.min_spacing();
    let nodes: Vec<usize> = (0..mesh.n_r)
        .filter(|&i| mesh.r(i) >= r_lo - eps && mesh.r(i) <= r_hi + eps)
        .collect();
    if nodes.is_empty() {
        return 0.0;
    }
    let (first, last) = (nodes[0], *nodes.last().unwrap());
    let mut total = 0.0;
    for &i in &nodes {
        let lo = if i == first { mesh.r(i) } else { mesh.r(i - 1) };
        let hi = if i == last { mesh.r(i) } else { mesh.r(i + 1) };
        let w = 0.5 * (hi - lo);
        let r = mesh.r(i);
        for j in 0..mesh.n_theta {
            total += w * r * r * mesh.omega_weight(j) * node_channels(mesh, u, v, i, j).energy_density();
        }
    }
    total
}

/// E[u] on a ṽ-slice: ∫ (|∂_r u|² + |∂_ṽ u|² + |∇̸u|²) r² dr dω.
pub fn energy_slice(mesh: &Mesh, u: &[Complex64], v: &[Complex64]) -> f64 {
    energy_in_range(mesh, u, v, mesh.r_min(), mesh.r_max())
}

/// ∫ (|∂_r u|² + |∂_ṽ u|² + |∇̸u|²) r² dω on the radial node i.
pub fn sphere_flux_density(mesh: &Mesh, u: &[Complex64], v: &[Complex64], i: usize) -> f64 {
    let r = mesh.r(i);
    (0..mesh.n_theta)
        .map(|j| r * r * mesh.omega_weight(j) * node_channels(mesh, u, v, i, j).energy_density())
        .sum()
}

/// Space-time samples of one mode on a fixed mesh with uniform cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub mesh: Mesh,
    pub times: Vec<f64>,
    pub u: Vec<Vec<Complex64>>,
    pub v: Vec<Vec<Complex64>>,
}

impl SpaceTimeField {
    pub fn new(mesh: Mesh) -> Self {
        Self {
            mesh,
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, u: Vec<Complex64>, v: Vec<Complex64>) -> Result<()> {
        if u.len() != self.mesh.len() || v.len() != self.mesh.len() {
            return Err(Error::ShapeMismatch(format!(
                "slice of {} / {} values on a mesh of {}",
                u.len(),
                v.len(),
                self.mesh.len()
            )));
        }
        if let Some(&last) = self.times.last() {
            if !(time > last) {
                return Err(Error::ShapeMismatch("times must increase".into()));
            }
        }
        self.times.push(time);
        self.u.push(u);
        self.v.push(v);
        Ok(())
    }

    /// Samples a closure (ṽ, r, θ) ↦ (u, ∂_ṽu) at the given times.
    pub fn from_fn(mesh: Mesh, times: &[f64], f: impl Fn(f64, f64, f64) -> (Complex64, Complex64)) -> Result<Self> {
        let mut out = Self::new(mesh.clone());
        for &t in times {
            let mut u = Vec::with_capacity(mesh.len());
            let mut v = Vec::with_capacity(mesh.len());
            for i in 0..mesh.n_r {
                for j in 0..mesh.n_theta {
                    let (a, b) = f(t, mesh.r(i), mesh.theta(j));
                    u.push(a);
                    v.push(b);
                }
            }
            out.push(t, u, v)?;
        }
        Ok(out)
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Multiplies every sample by λ.
    pub fn scaled(&self, lambda: f64) -> Self {
        let sc = |xs: &Vec<Vec<Complex64>>| xs.iter().map(|s| s.iter().map(|z| z * lambda).collect()).collect();
        Self {
            mesh: self.mesh.clone(),
            times: self.times.clone(),
            u: sc(&self.u),
            v: sc(&self.v),
        }
    }

    pub fn accumulate(&self, params: &KerrParams) -> SpaceTimeAccumulator {
        let mut acc = SpaceTimeAccumulator::new(params, self.mesh.clone());
        for k in 0..self.times.len() {
            acc.add(self.times[k], &self.u[k], &self.v[k]);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// ∂_ṽ u
    Time,
    /// ∂_r u
    Radial,
    /// ∇̸u
    Angular,
    /// u/r
    ZeroOrder,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Time, Channel::Radial, Channel::Angular, Channel::ZeroOrder];

    fn index(self) -> usize {
        self as usize
    }
}

/// Dyadic shell {2^{j−1} ≤ r/M < 2^j} intersected with the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Shell {
    pub j: i32,
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<usize>,
    /// the shell reaches past the mesh
    pub partial: bool,
}

fn shells_for(mesh: &Mesh, mass: f64) -> Vec<Shell> {
    let mut shells: Vec<Shell> = Vec::new();
    for i in 0..mesh.n_r {
        let x = mesh.r(i) / mass;
        if x <= 0.0 {
            continue;
        }
        let j = x.log2().floor() as i32 + 1;
        match shells.last_mut() {
            Some(s) if s.j == j => s.nodes.push(i),
            _ => {
                let lo = mass * 2f64.powi(j - 1);
                let hi = mass * 2f64.powi(j);
                shells.push(Shell {
                    j,
                    lo,
                    hi,
                    nodes: vec![i],
                    partial: lo < mesh.r_min() - 1e-12 || hi > mesh.r_max() + 1e-12,
                });
            }
        }
    }
    shells
}

/// Running space-time integrals, trapezoid in ṽ. Holds per-shell channel
/// integrals for the dyadic norm and the weighted LEW integral.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeAccumulator {
    mass: f64,
    mesh: Mesh,
    shells: Vec<Shell>,
    /// per shell, per channel: ∫∫ |ch|² r² dr dω dṽ
    shell_sums: Vec<[f64; 4]>,
    lew: f64,
    last: Option<(f64, Vec<f64>)>,
    t_first: Option<f64>,
}

impl SpaceTimeAccumulator {
    pub fn new(params: &KerrParams, mesh: Mesh) -> Self {
        let shells = shells_for(&mesh, params.mass());
        let n = shells.len();
        Self {
            mass: params.mass(),
            mesh,
            shells,
            shell_sums: vec![[0.0; 4]; n],
            lew: 0.0,
            last: None,
            t_first: None,
        }
    }

    fn slice_values(&self, u: &[Complex64], v: &[Complex64]) -> Vec<f64> {
        let mesh = &self.mesh;
        let m3 = 3.0 * self.mass;
        let mut out = vec![0.0; 4 * self.shells.len() + 1];
        for (k, shell) in self.shells.iter().enumerate() {
            for &i in &shell.nodes {
                let r = mesh.r(i);
                let wr = mesh.r_weight(i) * r * r;
                let trap = (1.0 - m3 / r).powi(2);
                for j in 0..mesh.n_theta {
                    let w = wr * mesh.omega_weight(j);
                    let c = node_channels(mesh, u, v, i, j);
                    let (t, rr, a, z) = (c.v.norm_sqr(), c.ur.norm_sqr(), c.ang2, c.u.norm_sqr() / (r * r));
                    out[4 * k] += w * t;
                    out[4 * k + 1] += w * rr;
                    out[4 * k + 2] += w * a;
                    out[4 * k + 3] += w * z;
                    out[4 * self.shells.len()] += w * (rr / (r * r) + trap * (t / (r * r) + a / r) + z / (r * r));
                }
            }
        }
        out
    }

    pub fn add(&mut self, time: f64, u: &[Complex64], v: &[Complex64]) {
        let cur = self.slice_values(u, v);
        if let Some((t0, prev)) = &self.last {
            let half = 0.5 * (time - t0);
            let ns = self.shells.len();
            for k in 0..ns {
                for c in 0..4 {
                    self.shell_sums[k][c] += half * (prev[4 * k + c] + cur[4 * k + c]);
                }
            }
            self.lew += half * (prev[4 * ns] + cur[4 * ns]);
        } else {
            self.t_first = Some(time);
        }
        self.last = Some((time, cur));
    }

    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    pub fn duration(&self) -> f64 {
        match (self.t_first, &self.last) {
            (Some(a), Some((b, _))) => b - a,
            _ => 0.0,
        }
    }

    /// ∫∫ |channel|² over shell k.
    pub fn shell_integral(&self, k: usize, channel: Channel) -> f64 {
        self.shell_sums[k][channel.index()]
    }

    /// LEW_S¹ norm squared.
    pub fn lew_integral(&self) -> f64 {
        self.lew
    }
}

/// Minimum radial nodes for a shell to contribute.
pub const MIN_SHELL_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct LeMReport {
    pub value: f64,
    /// shell index attaining the sup
    pub sup_shell: Option<i32>,
    /// partial edge shells skipped for having too few nodes: (lo, hi, nodes)
    pub dropped: Vec<(f64, f64, usize)>,
}

/// sup_j 2^{−j/2} ‖channel‖_{L²(shell j)} over the accumulated run. Several
/// channels are summed as norms (the H¹ version uses all four).
pub fn le_m_norm(acc: &SpaceTimeAccumulator, channels: &[Channel]) -> Result<LeMReport> {
    let mut best = (0.0f64, None);
    let mut dropped = Vec::new();
    for (k, shell) in acc.shells.iter().enumerate() {
        if shell.nodes.len() < MIN_SHELL_NODES {
            if shell.partial {
                dropped.push((shell.lo, shell.hi, shell.nodes.len()));
                continue;
            }
            return Err(Error::ShellTooThin {
                lo: shell.lo,
                hi: shell.hi,
                nodes: shell.nodes.len(),
            });
        }
        let norm: f64 = channels.iter().map(|&c| acc.shell_integral(k, c).sqrt()).sum();
        let val = 2f64.powf(-0.5 * shell.j as f64) * norm;
        if val > best.0 || best.1.is_none() {
            best = (val, Some(shell.j));
        }
    }
    Ok(LeMReport {
        value: best.0,
        sup_shell: best.1,
        dropped,
    })
}

/// ‖u‖_{LEW_S¹}: the square root of
/// ∫ (r⁻²|∂_r u|² + (1 − 3M/r)²(r⁻²|∂_ṽu|² + r⁻¹|∇̸u|²) + r⁻⁴|u|²) r² dr dṽ dω.
pub fn lew_s_norm(acc: &SpaceTimeAccumulator) -> f64 {
    acc.lew_integral().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptions {
    /// replaces (1 − 3M/r)⁻² by min((1 − 3M/r)⁻², floor⁻²); 0 disables
    pub floor: f64,
    /// largest accepted value of the squared norm without a floor
    pub cap: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { floor: 1e-3, cap: 1e12 }
    }
}

/// ‖f‖_{LEW_S*} = (∫ r²(1 − 3M/r)⁻²|f|² r² dr dṽ dω)^{1/2}; `source.u` holds f.
pub fn lew_s_dual(params: &KerrParams, source: &SpaceTimeField, opts: DualOptions) -> Result<f64> {
    let mesh = &source.mesh;
    let m3 = 3.0 * params.mass();
    let mut per_time = Vec::with_capacity(source.times.len());
    for f in &source.u {
        let mut s = 0.0;
        for i in 0..mesh.n_r {
            let r = mesh.r(i);
            let x = 1.0 - m3 / r;
            let weight = if opts.floor > 0.0 {
                (1.0 / (x * x)).min(1.0 / (opts.floor * opts.floor))
            } else {
                1.0 / (x * x)
            };
            for j in 0..mesh.n_theta {
                let val = f[mesh.idx(i, j)].norm_sqr();
                if val == 0.0 {
                    continue;
                }
                s += mesh.r_weight(i) * mesh.omega_weight(j) * r.powi(4) * weight * val;
            }
        }
        per_time.push(s);
    }
    let total = trapezoid(&source.times, &per_time);
    if opts.floor <= 0.0 && !(total <= opts.cap) {
        return Err(Error::DualDivergence { value: total });
    }
    Ok(total.sqrt())
}

/// ⟨u, f⟩ = ∫ u f̄ dr dṽ dω, the pairing under which the LEW_S¹ and LEW_S*
/// norms satisfy Cauchy–Schwarz for r ≥ M.
pub fn pairing(u: &SpaceTimeField, f: &SpaceTimeField) -> Result<Complex64> {
    if u.mesh != f.mesh || u.times != f.times {
        return Err(Error::ShapeMismatch("pairing needs identical meshes and times".into()));
    }
    let mesh = &u.mesh;
    let per_time: Vec<Complex64> = u
        .u
        .iter()
        .zip(&f.u)
        .map(|(a, b)| {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..mesh.n_r {
                for j in 0..mesh.n_theta {
                    let k = mesh.idx(i, j);
                    s += mesh.r_weight(i) * mesh.omega_weight(j) * a[k] * b[k].conj();
                }
            }
            s
        })
        .collect();
    let re: Vec<f64> = per_time.iter().map(|z| z.re).collect();
    let im: Vec<f64> = per_time.iter().map(|z| z.im).collect();
    Ok(Complex64::new(trapezoid(&u.times, &re), trapezoid(&u.times, &im)))
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(tt, yy)| 0.5 * (tt[1] - tt[0]) * (yy[0] + yy[1])).sum()
}

/// Smooth cutoff: 1 on [2.75M, 3.25M], 0 outside [2.5M, 3.5M].
pub fn trapping_cutoff(mass: f64, r: f64) -> f64 {
    let x = (r / mass - 3.0).abs();
    crate::geometry::smooth_step((0.5 - x) / 0.25).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeKOptions {
    /// stand-in for the H⁻¹ term, as a multiple of the unweighted channel
    pub low_frequency_weight: f64,
    /// fraction of spectral power allowed above the measured bandwidth
    pub bandwidth_tail: f64,
}

impl Default for LeKOptions {
    fn default() -> Self {
        Self {
            low_frequency_weight: 1e-2,
            bandwidth_tail: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeKReport {
    /// degenerate norm
    pub total: f64,
    /// the same with c_i replaced by 1
    pub undegenerate: f64,
    /// squared contributions of the two χ(D_t − τ_i)χ channels
    pub trapped: f64,
    pub trapped_undegenerate: f64,
    /// squared contributions of (1−χ²)∂_ṽ, (1−χ²)∇̸, ∂_r, r⁻¹
    pub nondegenerate: f64,
    /// Θ used for the τ-roots at ξ = 0 (Rayleigh quotient of ∂_θ)
    pub theta_proxy: f64,
    pub window: f64,
    pub bandwidth: f64,
    pub nyquist: f64,
}

impl LeKReport {
    /// √(trapped / trapped_undegenerate), the effect of the degenerate weight.
    pub fn trapped_ratio(&self) -> f64 {
        if self.trapped_undegenerate == 0.0 {
            return 0.0;
        }
        (self.trapped / self.trapped_undegenerate).sqrt()
    }
}

/// Minimum window length, in units of M.
pub const MIN_WINDOW: f64 = 20.0;

/// Frequency-domain realisation of the degenerate LE_K norm on a record.
pub fn le_k_freq_norm(params: &KerrParams, field: &SpaceTimeField, opts: LeKOptions) -> Result<LeKReport> {
    let mass = params.mass();
    let window = field.duration();
    if window < MIN_WINDOW * mass {
        return Err(Error::WindowTooShort { length: window });
    }
    let n_t = field.times.len();
    let dt = window / (n_t - 1) as f64;
    if field.times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::ShapeMismatch("le_k_freq_norm needs a uniform cadence".into()));
    }
    let mesh = &field.mesh;
    let m = mesh.m as f64;

    // ξ = 0 proxy needs a polar wavenumber: Rayleigh quotient of ∂_θ
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n_t {
        for i in 0..mesh.n_r {
            for j in 0..mesh.n_theta {
                let c = node_channels(mesh, &field.u[k], &field.v[k], i, j);
                let r = mesh.r(i);
                let w = mesh.omega_weight(j);
                let ut2 = c.ang2 * r * r - m * m * c.u.norm_sqr() / mesh.theta(j).sin().powi(2);
                num += w * ut2.max(0.0);
                den += w * c.u.norm_sqr();
            }
        }
    }
    let theta_proxy = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    let taper: Vec<f64> = (0..n_t)
        .map(|k| (std::f64::consts::PI * k as f64 / (n_t - 1) as f64).sin().powi(2))
        .collect();
    let taper_power = taper.iter().map(|w| w * w).sum::<f64>() / n_t as f64;
    let freqs: Vec<f64> = (0..n_t)
        .map(|k| {
            let kk = if k <= n_t / 2 { k as f64 } else { k as f64 - n_t as f64 };
            TWO_PI * kk / (n_t as f64 * dt)
        })
        .collect();
    let nyquist = std::f64::consts::PI / dt;
    let fft = FftPlanner::new().plan_fft_forward(n_t);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_t];
    let mut power = vec![0.0; n_t];
    let eta2 = opts.low_frequency_weight.powi(2);

    // r_a depends on τ only through the spectrum; cache per frequency
    let r_a: Vec<Option<f64>> = freqs
        .iter()
        .map(|&tau| {
            if tau == 0.0 || m.abs() > CONE_RATIO * mass * tau.abs() {
                None
            } else {
                trapped_radius(params, tau, m).ok().map(|x| x.r_a)
            }
        })
        .collect();

    let (mut trapped, mut trapped_undeg) = (0.0, 0.0);
    for i in 0..mesh.n_r {
        let r = mesh.r(i);
        let chi = trapping_cutoff(mass, r);
        if chi == 0.0 {
            continue;
        }
        for j in 0..mesh.n_theta {
            let theta = mesh.theta(j);
            let (t1, t2) = if theta_proxy == 0.0 && m == 0.0 {
                (0.0, 0.0)
            } else {
                tau_roots(params, r, theta, 0.0, theta_proxy, m)?
            };
            for k in 0..n_t {
                buf[k] = field.u[k][mesh.idx(i, j)] * taper[k];
            }
            fft.process(&mut buf);
            let w = mesh.r_weight(i) * r * r * mesh.omega_weight(j) * chi.powi(4) * dt / (n_t as f64 * taper_power);
            for k in 0..n_t {
                let p = buf[k].norm_sqr();
                power[k] += p;
                let tau = freqs[k];
                let cone = (tau - t2).powi(2) + (tau - t1).powi(2);
                let c2 = r_a[k].map_or(1.0, |ra| (r - ra).powi(2));
                trapped += w * (c2 + eta2) * cone * p;
                trapped_undeg += w * (1.0 + eta2) * cone * p;
            }
        }
    }

    let total_power: f64 = power.iter().sum();
    let mut order: Vec<usize> = (0..n_t).collect();
    order.sort_by(|&a, &b| freqs[a].abs().total_cmp(&freqs[b].abs()));
    let mut bandwidth = 0.0;
    let mut acc = 0.0;
    for &k in &order {
        acc += power[k];
        bandwidth = freqs[k].abs();
        if total_power == 0.0 || total_power - acc <= opts.bandwidth_tail * total_power {
            break;
        }
    }
    if bandwidth >= 0.9 * nyquist {
        return Err(Error::CadenceAliasing { bandwidth, nyquist });
    }

    let mut per_time = vec![0.0; n_t];
    for (k, slot) in per_time.iter_mut().enumerate() {
        for i in 0..mesh.n_r {
            let r = mesh.r(i);
            let off = 1.0 - trapping_cutoff(mass, r).powi(2);
            for j in 0..mesh.n_theta {
                let c = node_channels(mesh, &field.u[k], &field.v[k], i, j);
                let dens = off * off * (c.v.norm_sqr() + c.ang2) + c.ur.norm_sqr() + c.u.norm_sqr() / (r * r);
                *slot += mesh.r_weight(i) * r * r * mesh.omega_weight(j) * dens;
            }
        }
    }
    let nondegenerate = trapezoid(&field.times, &per_time);

    Ok(LeKReport {
        total: (trapped + nondegenerate).sqrt(),
        undegenerate: (trapped_undeg + nondegenerate).sqrt(),
        trapped,
        trapped_undegenerate: trapped_undeg,
        nondegenerate,
        theta_proxy,
        window,
        bandwidth,
        nyquist,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub e_initial: f64,
    pub times: Vec<f64>,
    pub e_series: Vec<f64>,
    pub e_outgoing: f64,
    pub e_sup: f64,
    /// e_sup / e_initial
    pub sup_ratio: f64,
}

impl EnergyReport {
    /// `e_outgoing` is the accumulated Σ_R^+ flux at the end of the series.
    pub fn new(e_initial: f64, times: Vec<f64>, e_series: Vec<f64>, e_outgoing: f64) -> Self {
        let e_sup = e_series.iter().copied().fold(e_initial, f64::max);
        let sup_ratio = if e_initial > 0.0 { e_sup / e_initial } else { 0.0 };
        Self {
            e_initial,
            times,
            e_series,
            e_outgoing,
            e_sup,
            sup_ratio,
        }
    }

    /// e_outgoing / e_initial
    pub fn outgoing_ratio(&self) -> f64 {
        if self.e_initial > 0.0 {
            self.e_outgoing / self.e_initial
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub le_m: LeMReport,
    pub lew_s: f64,
    /// absent when no band record was kept
    pub le_k: Option<LeKReport>,
    /// duration of the accumulated run
    pub window: f64,
}

/// All space-time norms of a run: the dyadic and LEW_S¹ norms from the
/// accumulator, LE_K from a band record near the trapped set if present.
pub fn norm_report(params: &KerrParams, acc: &SpaceTimeAccumulator, band: Option<&SpaceTimeField>, opts: LeKOptions) -> Result<NormReport> {
    let le_k = match band {
        Some(b) => Some(le_k_freq_norm(params, b, opts)?),
        None => None,
    };
    Ok(NormReport {
        le_m: le_m_norm(acc, &Channel::ALL)?,
        lew_s: lew_s_norm(acc),
        le_k,
        window: acc.duration(),
    })
}

/// log₂((v_N − v_2N)/(v_2N − v_4N)).
pub fn convergence_order(v_n: f64, v_2n: f64, v_4n: f64) -> Result<f64> {
    let d1 = v_n - v_2n;
    let d2 = v_2n - v_4n;
    if d1 == 0.0 || d2 == 0.0 || (d1 < 0.0) != (d2 < 0.0) {
        return Err(Error::NonMonotone);
    }
    Ok((d1 / d2).log2())
}
