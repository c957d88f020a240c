//! Special functions needed for gamma-posterior expectations.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Differential entropy of `Gamma(shape, rate)`.
pub fn gamma_entropy(shape: f64, rate: f64) -> f64 {
    shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
}

/// `E_q[ln p(x | a, b)]` for a gamma prior `p = Gamma(a, b)` under
/// `q = Gamma(shape, rate)`.
pub fn gamma_prior_expectation(a: f64, b: f64, shape: f64, rate: f64) -> f64 {
    let mean = shape / rate;
    let log_mean = digamma(shape) - rate.ln();
    a * b.ln() - ln_gamma(a) + (a - 1.0) * log_mean - b * mean
}
