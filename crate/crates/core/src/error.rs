use thiserror::Error;

/// Errors produced by the numerical pipelines.
///
/// Validation findings are *not* errors (see [`crate::params::validate`]);
/// these variants signal contract violations or numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no sign change found for the critical-time polynomial in ({lo}, {hi})")]
    NoRootFound { lo: f64, hi: f64 },

    #[error("adaptive step underflowed below machine scale at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("1 + f became non-positive at t = {t} (integrator failure)")]
    NonPositiveDenominator { t: f64 },

    #[error("inverse construction needs strictly increasing samples (index {index})")]
    NonMonotoneInput { index: usize },

    #[error("time compactification reached 0 before the stream ended (cell {cell}, t = {t})")]
    DomainExit { cell: usize, t: f64 },

    #[error("blow-up tail has {got} points, need at least {need}")]
    InsufficientTail { got: usize, need: usize },

    #[error("unsupported parameters: {0}")]
    UnsupportedParameters(String),

    #[error("certification failed at (a={a}, b={b}, m2={m2}): {what} = {value}")]
    CertificationFailure {
        a: f64,
        b: f64,
        m2: f64,
        what: String,
        value: f64,
    },

    #[error("queried point zeta1 = {zeta1} falls outside both hypersurface branches")]
    BranchMismatch { zeta1: f64 },

    #[error("leading principal minor D{index} = {value} < 0 at zeta1 = {zeta1}")]
    MinorNegative { index: usize, zeta1: f64, value: f64 },

    #[error("decay-factor inequality violated at (tau={tau}, zeta1={zeta1}): margin {margin}")]
    InequalityViolated { tau: f64, zeta1: f64, margin: f64 },

    #[error("CFL violated: dt = {dt} exceeds {limit} (wave speed {speed}, safety {safety})")]
    CflViolation {
        dt: f64,
        limit: f64,
        speed: f64,
        safety: f64,
    },

    #[error("positivity lost at t = {t}, cell {cell}: {what} = {value}")]
    PositivityLoss {
        t: f64,
        cell: usize,
        what: String,
        value: f64,
    },

    #[error("domain [-{half_width}, {half_width}] too small: cone radius reaches {radius}")]
    DomainTooSmall { half_width: f64, radius: f64 },

    #[error("lens construction degenerate: Xi0 = {xi0} (needs Xi0 > 0; strict initial-slope margin or m2 < 1)")]
    DegenerateLens { xi0: f64 },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
