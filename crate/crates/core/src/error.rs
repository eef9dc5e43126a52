use thiserror::Error;

/// Errors produced by the simulation pipelines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency {omega} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { omega: f64, lo: f64, hi: f64 },

    #[error("degenerate spectral density: {0}")]
    DegenerateSpectralDensity(String),

    #[error("non-factorized driving protocol: {0}")]
    NonFactorizedDriving(String),

    #[error("propagator lost unitarity (deviation {deviation:.3e}); increase the number of time steps")]
    StepCount { deviation: f64 },

    #[error("truncation residual {residual:.3e} exceeds {tolerance:.3e}: {advice}")]
    Truncation {
        residual: f64,
        tolerance: f64,
        advice: &'static str,
    },

    #[error("linear system is singular")]
    Singular,

    #[error("integrator step size underflow at t = {t:.6e} (h = {h:.3e})")]
    Stiffness { t: f64, h: f64 },

    #[error("periodic fixed point not reached after {periods} periods (residual {residual:.3e})")]
    NoPeriodicFixedPoint { periods: usize, residual: f64 },

    #[error("adiabaticity metric {metric:.3e} exceeds the threshold {threshold:.3e}")]
    NotAdiabatic { metric: f64, threshold: f64 },

    #[error("conservation violated by {deviation:.3e}; refine the time step")]
    Conservation { deviation: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
