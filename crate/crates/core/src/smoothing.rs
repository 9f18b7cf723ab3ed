//! Kernel smoothing of monotone step links.
//!
//! With a step function the convolution integral is a finite sum over the
//! jumps inside the kernel window, each weighted by the kernel CDF, so the
//! smoothed link is evaluated exactly and stays nondecreasing.

use crate::data::{Kernel, MonotoneStepLink, SmoothedLink};
use crate::error::{Error, Result};

/// Fallback bandwidth used when the index has zero range.
pub const DEGENERATE_BANDWIDTH: f64 = 1e-3;

/// CDF of the triweight kernel `k(u) = 35/32 (1 - u^2)^3` on `[-1, 1]`.
#[inline]
pub fn triweight_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let x2 = x * x;
    // antiderivative of (1 - t^2)^3 is t - t^3 + 3/5 t^5 - 1/7 t^7
    let poly = x * (1.0 + x2 * (-1.0 + x2 * (0.6 - x2 / 7.0)));
    (0.5 + 35.0 / 32.0 * poly).clamp(0.0, 1.0)
}

/// Triweight density.
#[inline]
pub fn triweight(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - u * u;
        35.0 / 32.0 * s * s * s
    }
}

impl Kernel {
    #[inline]
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Kernel::Triweight => triweight_cdf(x),
        }
    }

    #[inline]
    pub fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Triweight => triweight(u),
        }
    }
}

/// Smooths `link` with the triweight kernel and bandwidth `h`.
pub fn smooth_link(link: &MonotoneStepLink, h: f64) -> Result<SmoothedLink> {
    smooth_link_with(link, h, Kernel::Triweight)
}

pub fn smooth_link_with(link: &MonotoneStepLink, h: f64, kernel: Kernel) -> Result<SmoothedLink> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    Ok(SmoothedLink { base: link.clone(), bandwidth: h, kernel })
}

impl SmoothedLink {
    /// `∫ (1/h) k((u - t)/h) φ(t) dt` for the step base `φ`.
    ///
    /// Writing `φ(t) = φ_1 + Σ_j Δ_j 1{t > u_j}` over the jumps, the integral
    /// is `φ_1 + Σ_j Δ_j K((u - u_j)/h)` with `K` the kernel CDF.
    pub fn evaluate(&self, u: f64) -> f64 {
        let knots = self.base.knots();
        let values = self.base.values();
        let h = self.bandwidth;
        let m = knots.len();
        // Jumps sit at knots[0..m-1]; the jump at knots[i] has size values[i+1] - values[i].
        let jump_knots = &knots[..m - 1];
        let lo = jump_knots.partition_point(|&k| k <= u - h);
        let hi = jump_knots.partition_point(|&k| k < u + h);
        let mut acc = values[lo];
        for i in lo..hi {
            let dv = values[i + 1] - values[i];
            if dv != 0.0 {
                acc += dv * self.kernel.cdf((u - knots[i]) / h);
            }
        }
        acc.clamp(self.base.lower(), self.base.upper())
    }

    /// [`evaluate`](Self::evaluate) at many points, skipping flat knots once
    /// up front. Results are bitwise identical to pointwise evaluation.
    pub fn evaluate_many(&self, us: &[f64]) -> Vec<f64> {
        let knots = self.base.knots();
        let values = self.base.values();
        let m = knots.len();
        let jumps: Vec<usize> = (0..m - 1).filter(|&i| values[i + 1] != values[i]).collect();
        let h = self.bandwidth;
        us.iter()
            .map(|&u| {
                let lo = jumps.partition_point(|&i| knots[i] <= u - h);
                let hi = jumps.partition_point(|&i| knots[i] < u + h);
                let mut acc = if lo < jumps.len() { values[jumps[lo]] } else { values[m - 1] };
                for &i in &jumps[lo..hi] {
                    acc += (values[i + 1] - values[i]) * self.kernel.cdf((u - knots[i]) / h);
                }
                acc.clamp(self.base.lower(), self.base.upper())
            })
            .collect()
    }
}

/// Bandwidth `multiplier * range(index) * n^(-1/5)`.
pub fn default_bandwidth(index_values: &[f64], n: usize, multiplier: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("bandwidth rule needs n >= 2, got {n}")));
    }
    if !(multiplier > 0.0) {
        return Err(Error::InvalidArgument("bandwidth multiplier must be positive".into()));
    }
    let (lo, hi) = index_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::DegenerateIndexRange);
    }
    Ok(multiplier * range * (n as f64).powf(-0.2))
}

/// As [`default_bandwidth`], substituting [`DEGENERATE_BANDWIDTH`] on a zero-range index.
pub fn bandwidth_or_fallback(index_values: &[f64], n: usize, multiplier: f64) -> Result<f64> {
    match default_bandwidth(index_values, n, multiplier) {
        Err(Error::DegenerateIndexRange) => Ok(DEGENERATE_BANDWIDTH),
        other => other,
    }
}
