use thiserror::Error;

/// Errors raised across the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("model assumption violated: {0}")]
    ModelAssumption(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("near-singular corrector at t = {t}, xi = {xi}: |det N1| = {det_abs}")]
    Frame { t: f64, xi: f64, det_abs: f64 },

    #[error("no contraction power k <= {k_max}: worst ||M^k|| = {worst} at t = {t}, xi = {xi}")]
    NoCertificate {
        k_max: usize,
        worst: f64,
        t: f64,
        xi: f64,
    },

    #[error("threshold search failed: candidate N = {candidate} still gives sup = {sup_value} > {target}")]
    ThresholdSearch {
        candidate: f64,
        sup_value: f64,
        target: f64,
    },

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
