//! Mask construction policies.
//!
//! Every generator covers an exact pixel count: `round(fraction * h * w)`
//! for the Fourier and saliency policies, and the closest realisable
//! rectangle area for [`rect_mask`].

mod bank;
mod fourier;
mod rect;
mod saliency;

use serde::{Deserialize, Serialize};

pub use bank::MaskBank;
pub use fourier::{fourier_field, fourier_mask, sample_lambda};
pub use rect::{rect_dims, rect_mask, rect_slack};
pub use saliency::saliency_mask;

use crate::error::{Error, Result};
use crate::types::Mask;

/// Parameters of the low-pass Fourier mask sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FourierMaskParams {
    /// Exponent of the `1 / |f|^decay` frequency attenuation.
    pub decay_power: f64,
    /// Symmetric Beta parameter for the mixing coefficient.
    pub alpha: f64,
}

impl Default for FourierMaskParams {
    fn default() -> Self {
        FourierMaskParams { decay_power: 3.0, alpha: 1.0 }
    }
}

impl FourierMaskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_power > 0.0 && self.decay_power.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "decay_power must be positive, got {}",
                self.decay_power
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

pub(crate) fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
    }
    Ok(())
}

/// Pixel count a fraction asks for, rounded half away from zero.
pub fn target_count(fraction: f64, pixels: usize) -> usize {
    ((fraction * pixels as f64).round() as usize).min(pixels)
}

/// Covers the `k` largest values; equal values go to the lower row-major index first.
pub(crate) fn top_k_mask<T: Copy + PartialOrd>(height: usize, width: usize, values: &[T], k: usize) -> Mask {
    let n = values.len();
    debug_assert_eq!(n, height * width);
    if k == 0 {
        return Mask::empty(height, width);
    }
    if k >= n {
        return Mask::full(height, width);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let rank = |a: &usize, b: &usize| {
        values[*b]
            .partial_cmp(&values[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    order.select_nth_unstable_by(k - 1, rank);
    let mut covered = vec![false; n];
    for &i in &order[..k] {
        covered[i] = true;
    }
    Mask::new(height, width, covered).expect("length matches grid")
}
