use thiserror::Error;

/// Errors produced by the spectral engine and its front ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("half-width must be positive, got {0}")]
    NonPositiveWidth(f64),

    #[error("mixture contains a zero-width (delta) atom; convolve it with a positive-width mixture before pointwise evaluation")]
    DeltaEvaluation,

    #[error("invalid vibrational mode: {0}")]
    InvalidMode(String),

    #[error("invalid thermal environment: {0}")]
    InvalidEnvironment(String),

    #[error("Q = 1/2 is the critical-damping point; the residue formulas exclude it")]
    CriticalDamping,

    #[error("no dissipation channel: effective kappa_m = {0}")]
    NoDissipation(f64),

    #[error("invalid spectral grid: {0}")]
    InvalidGrid(String),

    #[error("no local maxima found in bracket [{0}, {1}]")]
    NoPeaks(f64, f64),

    #[error("half-height crossing missing on the {side} side of the peak at {peak}; peaks overlap")]
    OverlappingPeaks { side: &'static str, peak: f64 },

    #[error("{count} peaks above {threshold:.0}% of the global maximum; splitting is ambiguous")]
    AmbiguousSplitting { count: usize, threshold: f64 },

    #[error("fewer than two polariton peaks; coupling too weak for a splitting")]
    NoSplitting,

    #[error("linewidth difference does not change sign over the detuning range [{0}, {1}]")]
    NotBracketed(f64, f64),

    #[error("sampled curves live on different grids: {0}")]
    GridMismatch(String),

    #[error("time grid violates the Nyquist bound: dt = {dt} > {limit}")]
    Nyquist { dt: f64, limit: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    ValidationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
