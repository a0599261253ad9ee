//! Beta and Bernoulli distributions used by the policy heads.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Keeps unit-interval samples away from the endpoints where the log-density
/// diverges.
pub const UNIT_MARGIN: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn check_shape(alpha: f64, beta: f64) -> Result<()> {
    if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!("Beta shapes must be positive, got ({alpha}, {beta})")))
    }
}

fn check_range(low: f64, high: f64) -> Result<()> {
    if low < high {
        Ok(())
    } else {
        Err(Error::Contract(format!("action range must satisfy low < high, got [{low}, {high}]")))
    }
}

/// `low + (high - low) X` with `X ~ Beta(alpha, beta)`.
pub fn sample_beta_action(alpha: f64, beta: f64, low: f64, high: f64, rng: &mut impl Rng) -> Result<f64> {
    check_shape(alpha, beta)?;
    check_range(low, high)?;
    let d = Beta::new(alpha, beta).map_err(|e| Error::Contract(e.to_string()))?;
    let x: f64 = d.sample(rng);
    Ok(low + (high - low) * x)
}

/// Position of an action in the unit interval, clamped by [`UNIT_MARGIN`].
pub fn unit_position(action: f64, low: f64, high: f64) -> f64 {
    ((action - low) / (high - low)).clamp(UNIT_MARGIN, 1.0 - UNIT_MARGIN)
}

/// Log-density of a scaled Beta action.
pub fn beta_log_density(action: f64, alpha: f64, beta: f64, low: f64, high: f64) -> Result<f64> {
    check_shape(alpha, beta)?;
    check_range(low, high)?;
    let x = unit_position(action, low, high);
    Ok(ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta) + (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()
        - (high - low).ln())
}

/// Partial derivatives of [`beta_log_density`] with respect to the shapes.
pub fn beta_log_density_grad(action: f64, alpha: f64, beta: f64, low: f64, high: f64) -> (f64, f64) {
    let x = unit_position(action, low, high);
    let common = digamma(alpha + beta);
    (x.ln() - digamma(alpha) + common, (1.0 - x).ln() - digamma(beta) + common)
}

/// Mean of the scaled Beta.
pub fn beta_mean(alpha: f64, beta: f64, low: f64, high: f64) -> f64 {
    low + (high - low) * alpha / (alpha + beta)
}

/// Log-probability of a Bernoulli outcome given its logit.
pub fn bernoulli_log_prob(outcome: bool, logit: f64) -> f64 {
    // log sigmoid(z) = -softplus(-z)
    if outcome {
        -softplus(-logit)
    } else {
        -softplus(logit)
    }
}
