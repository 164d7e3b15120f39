use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid Kerr parameters: {0}")]
    InvalidParams(String),

    #[error("chart singular at r={r}, theta={theta}: {component} diverges")]
    ChartSingular {
        r: f64,
        theta: f64,
        component: &'static str,
    },

    #[error("r={r} outside the domain (requires r > {bound})")]
    DomainError { r: f64, bound: f64 },

    #[error("chart profile violation: {0}")]
    ProfileViolation(String),

    #[error("degenerate conserved set: E, L and K all vanish")]
    DegenerateInput,

    #[error("no double root of the radial potential at r={r}: {reason}")]
    NoDoubleRoot { r: f64, reason: String },

    #[error("step failure at s={s}: {reason}")]
    StepFailure { s: f64, reason: String },

    #[error("frequency outside the cone |Phi| <= 4M|tau| (ratio {ratio})")]
    FrequencyCone { ratio: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("complex tau roots (discriminant {discriminant})")]
    ComplexRoots { discriminant: f64 },

    #[error("multiplier choice inconsistent at r={r}: residual {residual}")]
    ChoiceInconsistent { r: f64, residual: f64 },

    #[error("v-tilde slice not spacelike at r={r}, theta={theta}: g^vv = {g_vv}")]
    SpacelikeSliceViolation { r: f64, theta: f64, g_vv: f64 },

    #[error("non-finite field value; last good v-tilde = {last_good_v}")]
    NaNDetected { last_good_v: f64 },

    #[error("initial data out of band: {0}")]
    OutOfBand(String),

    #[error("grid invalid: {0}")]
    InvalidGrid(String),

    #[error("dyadic shell [{lo}, {hi}) has only {nodes} radial nodes")]
    ShellTooThin { lo: f64, hi: f64, nodes: usize },

    #[error("dual norm diverges ({value}) without a regularization floor")]
    DualDivergence { value: f64 },

    #[error("time window {length} shorter than the 20M minimum")]
    WindowTooShort { length: f64 },

    #[error("cadence aliasing: measured bandwidth {bandwidth} vs Nyquist {nyquist}")]
    CadenceAliasing { bandwidth: f64, nyquist: f64 },

    #[error("differences change sign; no convergence order")]
    NonMonotone,

    #[error("start point is not null: |p| = {residual}")]
    NotNull { residual: f64 },

    #[error("start point lies in a forbidden region: {0}")]
    ForbiddenStart(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
