use thiserror::Error;

/// Errors surfaced by curve construction, region integration and the oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A curve extension loop ran past its step cap. This signals either a
    /// bug or a pathologically small tolerance, never normal operation: the
    /// stop predicates used by the estimator are met almost surely within a
    /// few dozen steps.
    #[error("curve extension exceeded the cap of {cap} steps")]
    ExtensionCapExceeded { cap: usize },

    #[error("abscissa {s} lies outside the represented range [{tail_s}, 1]")]
    OutOfRange { s: f64, tail_s: f64 },

    /// The inverse was queried below the represented part of the curve; the
    /// caller must extend the curve before asking again.
    #[error(
        "level {eps} is below the represented range (curve reaches {tail_value} at s = {tail_s}); extend the curve first"
    )]
    NeedsExtension {
        eps: f64,
        tail_s: f64,
        tail_value: f64,
    },

    #[error("line sample is empty; no lower envelope exists")]
    EmptyEnvelope,

    #[error("point ({x}, {y}) is degenerate: it must lie strictly inside its quadrant")]
    DegeneratePoint { x: f64, y: f64 },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

pub type Result<T> = std::result::Result<T, Error>;
