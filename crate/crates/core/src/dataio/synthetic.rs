//! Class-conditional shape images for desk-scale experiments.
//!
//! Class `c` draws shape `c % 6` (filled square, disc, cross, ring, triangle,
//! horizontal bars) at a jittered position and scale. Each image gets a random
//! background colour; the shape differs from it by 0.35 to 0.6 per channel, so
//! classes are told apart by outline rather than colour. Gaussian pixel noise
//! is added and raw values are clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream, SeedSequence};
use crate::types::{Image, LabeledDataset, Shape, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub channels: usize,
    /// Standard deviation of additive pixel noise.
    pub noise: f32,
    /// Maximum centre offset, as a fraction of the image side.
    pub jitter: f32,
    /// Copies of the class shape per image. With more than one, copies are
    /// smaller and placed anywhere in the image instead of near the centre.
    pub instances: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { num_classes: 3, per_class: 300, size: 32, channels: 3, noise: 0.2, jitter: 0.2, instances: 1, seed: 0 }
    }
}

struct Placement {
    cy: f32,
    cx: f32,
    /// Half-extent in pixels.
    r: f32,
}

fn inside(kind: usize, p: &Placement, y: f32, x: f32) -> bool {
    let dy = y - p.cy;
    let dx = x - p.cx;
    let r = p.r;
    match kind {
        0 => dy.abs() <= r && dx.abs() <= r,
        1 => dy * dy + dx * dx <= r * r,
        2 => {
            let t = (r * 0.3).max(1.0);
            (dy.abs() <= t && dx.abs() <= r) || (dx.abs() <= t && dy.abs() <= r)
        }
        3 => {
            let d2 = dy * dy + dx * dx;
            d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r)
        }
        4 => dy <= r && dy >= -r && dx.abs() <= (dy + r) * 0.5,
        _ => {
            let band = ((dy + r) / (2.0 * r) * 5.0).floor() as i32;
            dy.abs() <= r && dx.abs() <= r && band % 2 == 0
        }
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec, split: Split) -> Result<LabeledDataset> {
    if spec.num_classes < 2 {
        return Err(Error::InvalidArgument("synthetic data needs at least 2 classes".into()));
    }
    if spec.per_class == 0 || spec.size < 4 || spec.instances == 0 {
        return Err(Error::InvalidArgument("synthetic data needs per_class > 0, size >= 4 and instances > 0".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) || !(0.0..=0.5).contains(&spec.jitter) {
        return Err(Error::InvalidArgument("noise must be >= 0 and jitter within [0, 0.5]".into()));
    }
    let shape = Shape::new(spec.size, spec.size, spec.channels);
    let seq = SeedSequence::new(spec.seed);
    let side = spec.size as f32;
    let n = spec.num_classes * spec.per_class;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % spec.num_classes;
        let mut rng = seq.child(i as u64).rng();
        let placements: Vec<Placement> = if spec.instances <= 1 {
            vec![Placement {
                cy: side / 2.0 + rng.random_range(-1.0..=1.0) * spec.jitter * side,
                cx: side / 2.0 + rng.random_range(-1.0..=1.0) * spec.jitter * side,
                r: side * rng.random_range(0.22..0.32),
            }]
        } else {
            let scale = 1.0 / (spec.instances as f32).sqrt();
            (0..spec.instances)
                .map(|_| {
                    let r = side * scale * rng.random_range(0.22..0.32);
                    Placement {
                        cy: rng.random_range(r..=side - r),
                        cx: rng.random_range(r..=side - r),
                        r,
                    }
                })
                .collect()
        };
        let background: Vec<f32> = (0..spec.channels).map(|_| rng.random_range(0.0..1.0)).collect();
        let colour: Vec<f32> = background
            .iter()
            .map(|&b| {
                let d = rng.random_range(0.35..0.6);
                if b + d <= 1.0 && (b - d < 0.0 || rng.random_bool(0.5)) {
                    b + d
                } else {
                    b - d
                }
            })
            .collect();
        let mut noise_rng = seq.child(i as u64).child(stream::NOISE).rng();
        let normal = Normal::new(0.0f32, spec.noise.max(f32::MIN_POSITIVE)).expect("valid std");
        let mut data = vec![0.0f32; shape.len()];
        for c in 0..spec.channels {
            for y in 0..spec.size {
                for x in 0..spec.size {
                    let on = placements.iter().any(|p| inside(class % 6, p, y as f32 + 0.5, x as f32 + 0.5));
                    let base = if on { colour[c] } else { background[c] };
                    let noise = if spec.noise > 0.0 { normal.sample(&mut noise_rng) } else { 0.0 };
                    data[c * shape.pixels() + y * spec.size + x] = (base + noise).clamp(0.0, 1.0);
                }
            }
        }
        images.push(Image::from_parts(shape, data));
        labels.push(class);
    }
    LabeledDataset::new(images, labels, spec.num_classes, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_balance() {
        let spec = SyntheticSpec { per_class: 100, size: 16, ..Default::default() };
        let ds = gen_synthetic(&spec, Split::Train).unwrap();
        assert_eq!(ds.len(), 300);
        for c in 0..3 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 100);
        }
        assert!(ds.images().iter().all(|i| i.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec { per_class: 5, size: 12, seed: 9, ..Default::default() };
        let a = gen_synthetic(&spec, Split::Train).unwrap();
        let b = gen_synthetic(&spec, Split::Train).unwrap();
        assert_eq!(a.images(), b.images());
        let c = gen_synthetic(&SyntheticSpec { seed: 10, ..spec }, Split::Train).unwrap();
        assert_ne!(a.images(), c.images());
    }

    #[test]
    fn rejects_single_class() {
        assert!(gen_synthetic(&SyntheticSpec { num_classes: 1, ..Default::default() }, Split::Train).is_err());
    }

    /// Perceptron on raw pixels as the separability oracle.
    #[test]
    fn two_noise_free_classes_are_linearly_separable() {
        let spec = SyntheticSpec { num_classes: 2, per_class: 50, size: 16, noise: 0.0, seed: 3, ..Default::default() };
        let ds = gen_synthetic(&spec, Split::Train).unwrap();
        let d = ds.shape().len();
        let mut w = vec![0.0f64; d + 1];
        let mut converged = false;
        for _ in 0..5000 {
            let mut errors = 0;
            for (img, &y) in ds.images().iter().zip(ds.labels()) {
                let t = if y == 1 { 1.0 } else { -1.0 };
                let s = w[d] + img.data().iter().zip(&w).map(|(&x, &wi)| x as f64 * wi).sum::<f64>();
                if s * t <= 0.0 {
                    errors += 1;
                    for (wi, &x) in w.iter_mut().zip(img.data()) {
                        *wi += t * x as f64;
                    }
                    w[d] += t;
                }
            }
            if errors == 0 {
                converged = true;
                break;
            }
        }
        assert!(converged, "perceptron did not separate the classes");
    }
}
