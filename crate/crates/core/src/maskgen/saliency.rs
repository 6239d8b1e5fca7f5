use super::{check_fraction, target_count, top_k_mask};
use crate::error::{Error, Result};
use crate::types::{Mask, SaliencyMap};

/// Covers the `round(fraction * h * w)` most salient pixels. Equal saliency
/// values are taken in ascending row-major order.
pub fn saliency_mask(map: &SaliencyMap, fraction: f64) -> Result<Mask> {
    check_fraction(fraction)?;
    let (h, w) = (map.height(), map.width());
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("saliency map has zero area".into()));
    }
    Ok(top_k_mask(h, w, map.values(), target_count(fraction, h * w)))
}
