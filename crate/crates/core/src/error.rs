use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller supplied a value outside an operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The error characteristic function is (numerically) zero inside the
    /// truncated frequency range, so the inversion is not defined.
    #[error("ill-posed deconvolution: |phi_eps({t})| = {modulus:e} is below the floor")]
    IllPosed { t: f64, modulus: f64 },

    /// The raw distribution estimate does not reach a usable limit, which
    /// happens under gross undersmoothing or extreme noise.
    #[error("degenerate normalizer: raw CDF limit {limit} is not above {floor}")]
    DegenerateNormalizer { limit: f64, floor: f64 },

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("envelope is not a distribution function: right value {0}")]
    NotADistribution(f64),

    #[error("concavity test failed: {0}")]
    TestFailure(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
