use rand::seq::IndexedRandom;
use rand::Rng;

use super::{check_fraction, target_count};
use crate::error::Result;
use crate::seed::{stream, SeedSequence};
use crate::types::Mask;

/// Rectangles `(rows, cols)` fitting an `h x w` grid whose area is closest to
/// `target`; among those, the most square ones.
fn best_dims(height: usize, width: usize, target: usize) -> Vec<(usize, usize)> {
    if target == 0 {
        return vec![(0, 0)];
    }
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut best_key = (usize::MAX, usize::MAX);
    for rows in 1..=height {
        let floor = (target / rows).clamp(1, width);
        let ceil = target.div_ceil(rows).clamp(1, width);
        for cols in [floor, ceil] {
            let key = ((rows * cols).abs_diff(target), rows.abs_diff(cols));
            if key < best_key {
                best_key = key;
                best.clear();
            }
            if key == best_key && !best.contains(&(rows, cols)) {
                best.push((rows, cols));
            }
        }
    }
    best
}

/// Chosen rectangle size for a fraction. Orientation ties (`a x b` vs `b x a`)
/// are resolved by the seed.
pub fn rect_dims(height: usize, width: usize, fraction: f64, seed: u64) -> Result<(usize, usize)> {
    check_fraction(fraction)?;
    let dims = best_dims(height, width, target_count(fraction, height * width));
    let mut rng = SeedSequence::new(seed).child(stream::MASK).rng();
    Ok(*dims.choose(&mut rng).expect("at least one candidate"))
}

/// Smallest achievable `|area / (h*w) - round(fraction*h*w) / (h*w)|` over
/// rectangles that fit the grid. [`rect_mask`] always attains it.
pub fn rect_slack(height: usize, width: usize, fraction: f64) -> f64 {
    let pixels = height * width;
    let target = target_count(fraction, pixels);
    let (rows, cols) = best_dims(height, width, target)[0];
    (rows * cols).abs_diff(target) as f64 / pixels as f64
}

/// One axis-aligned rectangle lying fully inside the grid, placed uniformly
/// over all valid positions.
pub fn rect_mask(height: usize, width: usize, fraction: f64, seed: u64) -> Result<Mask> {
    let (rows, cols) = rect_dims(height, width, fraction, seed)?;
    if rows == 0 {
        return Ok(Mask::empty(height, width));
    }
    let mut rng = SeedSequence::new(seed).child(stream::PLACEMENT).rng();
    let top = rng.random_range(0..=height - rows);
    let left = rng.random_range(0..=width - cols);
    Ok(Mask::rectangle(height, width, top, left, rows, cols))
}
