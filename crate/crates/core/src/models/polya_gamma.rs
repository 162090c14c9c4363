//! Approximate Polya-Gamma `PG(1, c)` draws from the truncated series
//!
//! ```text
//! W = (2π²)⁻¹ Σ_{k≥1} g_k / ((k − ½)² + c²/(4π²)),   g_k ~ Exp(1),
//! ```
//!
//! keeping `K = 200` terms and replacing the remainder by its mean. The
//! remaining error is a zero-mean term with variance of order `K⁻³`.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::Exp1;

use crate::error::{Error, Result};

pub const PG_TERMS: usize = 200;

/// `E[PG(1, c)] = tanh(c/2)/(2c)`, with the limit `1/4` at `c = 0`.
pub fn polya_gamma_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// `Σ_{k>K} 1/((k − ½)² + d)` by the midpoint integral `∫_K^∞ dx/(x² + d)`.
fn tail_sum(k: usize, d: f64) -> f64 {
    let k = k as f64;
    if d <= 0.0 {
        1.0 / k
    } else {
        let s = d.sqrt();
        (0.5 * PI - (k / s).atan()) / s
    }
}

pub fn sample_polya_gamma(c: f64, rng: &mut dyn RngCore) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::invalid(format!("Polya-Gamma tilt must be finite, got {c}")));
    }
    let d = c * c / (4.0 * PI * PI);
    let mut sum = 0.0;
    for k in 1..=PG_TERMS {
        let h = k as f64 - 0.5;
        let g: f64 = rng.sample(Exp1);
        sum += g / (h * h + d);
    }
    Ok((sum + tail_sum(PG_TERMS, d)) / (2.0 * PI * PI))
}

/// Unnormalised `PG(1, 0)` density
/// `ρ(w) ∝ Σ_k (−1)^k (2k+1) exp(−(2k+1)²/(8w)) w^{−3/2}`.
pub fn pg_base_density(w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..200 {
        let a = (2 * k + 1) as f64;
        let term = a * (-a * a / (8.0 * w)).exp();
        total += if k % 2 == 0 { term } else { -term };
        if term < 1e-300 || (term < 1e-17 * total.abs() && k > 2) {
            break;
        }
    }
    total * w.powf(-1.5) / (2.0 * PI).sqrt()
}

/// `cosh(c/2) exp(−wc²/2) ρ(w)`.
pub fn pg_density(w: f64, c: f64) -> f64 {
    (0.5 * c).cosh() * (-0.5 * w * c * c).exp() * pg_base_density(w)
}
