//! Applying masks to images, and the three mixed-sample transforms.
//!
//! Orientation for every mask-based mix: covered pixels come from the second
//! image, uncovered ones from the first. `lambda_eff` is the share of the
//! first image that survives, and the label weights are
//! `(lambda_eff, 1 - lambda_eff)` for `(y1, y2)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::maskgen::{fourier_mask, sample_lambda, FourierMaskParams};
use crate::seed::{stream, SeedSequence};
use crate::types::{Image, Mask};

/// Output of a mixing transform.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSample {
    pub image: Image,
    /// Weight of the first image's label.
    pub lambda_eff: f64,
    /// The applied mask, for mask-based mixes.
    pub mask: Option<Mask>,
}

impl MixedSample {
    pub fn label_weights(&self) -> (f64, f64) {
        (self.lambda_eff, 1.0 - self.lambda_eff)
    }
}

/// Covered pixels set to `fill[c]` in every channel `c`.
pub fn apply_uniform(img: &Image, mask: &Mask, fill: &[f32]) -> Result<Image> {
    mask.check_image(img)?;
    if fill.len() != img.channels() {
        return Err(Error::shape("fill channels", img.channels(), fill.len()));
    }
    let mut data = img.data().to_vec();
    let n = mask.pixels();
    for (c, &value) in fill.iter().enumerate() {
        let plane = &mut data[c * n..(c + 1) * n];
        for (px, &covered) in plane.iter_mut().zip(mask.covered()) {
            if covered {
                *px = value;
            }
        }
    }
    Ok(Image::from_parts(img.shape(), data))
}

/// `mask * donor + (1 - mask) * img`.
pub fn apply_donor(img: &Image, mask: &Mask, donor: &Image) -> Result<Image> {
    mask.check_image(img)?;
    img.check_same_shape(donor, "donor image")?;
    let n = mask.pixels();
    let data = img
        .data()
        .iter()
        .zip(donor.data())
        .enumerate()
        .map(|(i, (&a, &b))| if mask.covered()[i % n] { b } else { a })
        .collect();
    Ok(Image::from_parts(img.shape(), data))
}

/// Elementwise `lambda * x1 + (1 - lambda) * x2`.
pub fn mixup_mix(x1: &Image, x2: &Image, lambda: f64) -> Result<MixedSample> {
    x1.check_same_shape(x2, "mixup pair")?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    let l = lambda as f32;
    let data = x1
        .data()
        .iter()
        .zip(x2.data())
        .map(|(&a, &b)| if lambda == 1.0 { a } else { l * a + (1.0 - l) * b })
        .collect();
    Ok(MixedSample {
        image: Image::from_parts(x1.shape(), data),
        lambda_eff: lambda,
        mask: None,
    })
}

/// The CutMix box: nominal side `floor(side * sqrt(1 - lambda))`, centre
/// uniform over the grid, clipped at the borders.
pub fn cutmix_box(height: usize, width: usize, lambda: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    let cut_ratio = (1.0 - lambda).sqrt();
    let cut_h = (height as f64 * cut_ratio).floor() as i64;
    let cut_w = (width as f64 * cut_ratio).floor() as i64;
    let mut rng = SeedSequence::new(seed).child(stream::PLACEMENT).rng();
    let cy = rng.random_range(0..height) as i64;
    let cx = rng.random_range(0..width) as i64;
    let clip = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
    let (top, bottom) = (clip(cy - cut_h / 2, height), clip(cy - cut_h / 2 + cut_h, height));
    let (left, right) = (clip(cx - cut_w / 2, width), clip(cx - cut_w / 2 + cut_w, width));
    Ok(Mask::rectangle(height, width, top, left, bottom - top, right - left))
}

/// Pastes a (possibly border-clipped) rectangle of `x2` onto `x1`.
pub fn cutmix_mix(x1: &Image, x2: &Image, lambda: f64, seed: u64) -> Result<MixedSample> {
    x1.check_same_shape(x2, "cutmix pair")?;
    let mask = cutmix_box(x1.height(), x1.width(), lambda, seed)?;
    let image = apply_donor(x1, &mask, x2)?;
    Ok(MixedSample {
        image,
        lambda_eff: 1.0 - mask.covered_fraction(),
        mask: Some(mask),
    })
}

/// FMix with an explicit coefficient: `lambda` of the pixels are taken from `x2`.
pub fn fmix_mix_with_lambda(
    x1: &Image,
    x2: &Image,
    lambda: f64,
    params: &FourierMaskParams,
    seed: u64,
) -> Result<MixedSample> {
    x1.check_same_shape(x2, "fmix pair")?;
    let mask = fourier_mask(x1.height(), x1.width(), lambda, params, seed)?;
    mask_mix(x1, x2, mask)
}

/// FMix: coefficient from `Beta(alpha, alpha)`, then a Fourier mask of that coverage.
pub fn fmix_mix(x1: &Image, x2: &Image, params: &FourierMaskParams, seed: u64) -> Result<MixedSample> {
    let seq = SeedSequence::new(seed);
    let lambda = sample_lambda(params, seq.derive(stream::LAMBDA))?;
    fmix_mix_with_lambda(x1, x2, lambda, params, seq.derive(stream::MASK))
}

/// Mask-mix of `x2` over `x1` with an already chosen mask.
pub fn mask_mix(x1: &Image, x2: &Image, mask: Mask) -> Result<MixedSample> {
    let image = apply_donor(x1, &mask, x2)?;
    Ok(MixedSample {
        image,
        lambda_eff: 1.0 - mask.covered_fraction(),
        mask: Some(mask),
    })
}
