//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A weight grows at least as fast as the profile's tail decays, so the
    /// integral over the tail extension does not exist.
    #[error("divergent tail integral: weight growth rate {growth} >= tail decay rate {tail_rate}")]
    DivergentTail { growth: f64, tail_rate: f64 },

    /// Transform evaluation requested at a point left of the integrable range.
    #[error("transform not integrable at q = {q}: requires q > -{tail_rate} (tail decay rate)")]
    NonIntegrable { q: f64, tail_rate: f64 },

    /// The local power-law behaviour near x = 0 makes a weighted integral infinite.
    #[error("divergent integral near zero: local exponent {exponent} <= -1")]
    DivergentHead { exponent: f64 },

    /// Mass (or another required normalization integral) vanishes.
    #[error("profile has zero mass")]
    ZeroMass,

    /// Tail fitting requires strictly positive values on the fit window.
    #[error("nonpositive profile values in tail fit window [{lo}, {hi}]")]
    NonpositiveTailWindow { lo: f64, hi: f64 },

    /// The q-grid does not resolve the requested reconstruction interval.
    #[error("q-grid too sparse for reconstruction: {0}")]
    InsufficientQGrid(String),

    /// Contraction probe called with inputs at zero distance.
    #[error("contraction probe inputs coincide in norm (distance {0:.3e})")]
    ZeroDistance(f64),

    /// Time stepper collapsed below the minimum step size.
    #[error("time step collapsed to {dt:.3e} at t = {t:.6}")]
    StepCollapse { t: f64, dt: f64 },

    /// Invalid argument or configuration value.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed input file or specification string.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
