//! Boundary data of tunable Sobolev regularity and a smooth guide field.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stencil::Vec2;

/// Hard cap on Weierstrass series length.
pub const MAX_TERMS: u32 = 48;

/// `sum_{n=1}^{n_max} 2^(-s n) cos(2^n pi x)`.
pub fn weierstrass(s: f64, x: f64, n_max: u32) -> f64 {
    (1..=n_max)
        .map(|n| {
            let k = 2f64.powi(n as i32);
            // Reduce the cosine argument exactly: 2^n x mod 2.
            let arg = (k * x).rem_euclid(2.0);
            k.powf(-s) * (PI * arg).cos()
        })
        .sum()
}

/// Series length that resolves every frequency visible on a grid of spacing `h`.
pub fn default_n_max(h: f64) -> u32 {
    let n = (1.0 / h).log2().ceil().max(0.0) as u32 + 4;
    n.min(MAX_TERMS)
}

/// Smoothed step `1 - 1(x <= 1/4) tanh(20(1/4-x))^s' - 1(x >= 3/4) tanh(20(x-3/4))^s'`.
pub fn step_h(s_prime: f64, x: f64) -> f64 {
    let pow = |t: f64| if s_prime == 0.0 { 1.0 } else { t.powf(s_prime) };
    let mut v = 1.0;
    if x <= 0.25 {
        v -= pow((20.0 * (0.25 - x)).tanh());
    }
    if x >= 0.75 {
        v -= pow((20.0 * (x - 0.75)).tanh());
    }
    v
}

/// Parameters of the boundary data `u0(x) = w_s(x) + H_s'(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySpec {
    pub s: f64,
    pub s_prime: f64,
    pub series_cap: u32,
}

impl BoundarySpec {
    pub fn new(s: f64, s_prime: f64, h: f64) -> Result<Self> {
        let spec = Self { s, s_prime, series_cap: default_n_max(h) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !(0.0..=self.s).contains(&self.s_prime) {
            return Err(Error::InvalidParameter(format!(
                "need s > 0 and 0 <= s' <= s, got s={}, s'={}",
                self.s, self.s_prime
            )));
        }
        if self.series_cap == 0 || self.series_cap > MAX_TERMS {
            return Err(Error::InvalidParameter(format!("series cap {} outside 1..={MAX_TERMS}", self.series_cap)));
        }
        Ok(())
    }

    /// Value of the boundary data at `x`, independent of `y`.
    pub fn u0(&self, x: f64) -> f64 {
        weierstrass(self.s, x, self.series_cap) + step_h(self.s_prime, x)
    }

    /// Values at pixel centres `x_i = (i+1) h`, `i < n`.
    pub fn sample(&self, n: usize, h: f64) -> Vec<f64> {
        (0..n).map(|i| self.u0((i + 1) as f64 * h)).collect()
    }
}

/// Guide field `(4xy / (1+2y^2), 1)`.
pub fn smooth_guide(x: f64, y: f64) -> Vec2 {
    [4.0 * x * y / (1.0 + 2.0 * y * y), 1.0]
}

/// Boundary coordinate reached by following the smooth guide back to `y = 0`.
pub fn exact_transport(x: f64, y: f64) -> f64 {
    x / (1.0 + 2.0 * y * y)
}
