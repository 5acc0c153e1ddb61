use thiserror::Error;

/// Errors raised by the simulator and the precoder design routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("distance {range} m is inside the breakpoint distance {breakpoint} m")]
    InsideBreakpoint { range: f64, breakpoint: f64 },

    #[error("channel is rank deficient (smallest/largest singular value ratio {ratio:.3e})")]
    SingularChannel { ratio: f64 },

    #[error("zero-norm channel row {0}")]
    ZeroRow(usize),

    #[error("enumeration too large: {what} = {base}^{exponent} exceeds {limit}")]
    Capacity {
        what: &'static str,
        base: usize,
        exponent: usize,
        limit: usize,
    },

    #[error("target {target} bits is not reachable (ceiling {ceiling} bits)")]
    InfeasibleTarget { target: f64, ceiling: f64 },

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("audit failed: {0}")]
    Audit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
