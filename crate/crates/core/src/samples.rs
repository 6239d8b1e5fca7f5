//! Sample grids: rows image1, image2, MixUp, CutMix, FMix; one coefficient per column.

use std::fmt::Write as _;

use crate::dataio::Normalization;
use crate::error::{Error, Result};
use crate::maskgen::{sample_lambda, FourierMaskParams};
use crate::occlude::{cutmix_mix, fmix_mix_with_lambda, mixup_mix};
use crate::seed::{stream, SeedSequence};
use crate::types::Image;

pub const GRID_ROWS: usize = 5;
const GAP: usize = 2;

/// What happened in one column.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleColumn {
    pub lambda: f64,
    pub cutmix_lambda_eff: f64,
    /// Pixels of the CutMix output that differ from image1, over all pixels.
    pub cutmix_pasted_fraction: f64,
    pub fmix_lambda_eff: f64,
}

#[derive(Clone, Debug)]
pub struct SampleGrid {
    /// `tiles[row][column]`
    pub tiles: Vec<Vec<Image>>,
    pub columns: Vec<SampleColumn>,
}

fn pasted_fraction(out: &Image, x1: &Image) -> f64 {
    let n = out.shape().pixels();
    let changed = (0..n)
        .filter(|&p| (0..out.channels()).any(|c| out.data()[c * n + p] != x1.data()[c * n + p]))
        .count();
    changed as f64 / n as f64
}

/// Builds the grid for `pairs`. With `lambda = None` each column draws its own
/// coefficient from `Beta(alpha, alpha)`.
pub fn sample_grid(
    pairs: &[(Image, Image)],
    lambda: Option<f64>,
    params: &FourierMaskParams,
    seed: u64,
) -> Result<SampleGrid> {
    if pairs.is_empty() {
        return Err(Error::Empty("image pairs"));
    }
    let shape = pairs[0].0.shape();
    let mut tiles = vec![Vec::with_capacity(pairs.len()); GRID_ROWS];
    let mut columns = Vec::with_capacity(pairs.len());
    for (j, (x1, x2)) in pairs.iter().enumerate() {
        x1.check_same_shape(x2, "sample pair")?;
        if x1.shape() != shape {
            return Err(Error::shape("sample image values", shape.len(), x1.shape().len()));
        }
        let seq = SeedSequence::new(seed).child(j as u64);
        let lam = match lambda {
            Some(l) => l,
            None => sample_lambda(params, seq.derive(stream::LAMBDA))?,
        };
        let mixup = mixup_mix(x1, x2, lam)?;
        let cutmix = cutmix_mix(x1, x2, lam, seq.derive(stream::PLACEMENT))?;
        // FMix mask covers the share taken from image2, i.e. 1 - lambda
        let fmix = fmix_mix_with_lambda(x1, x2, 1.0 - lam, params, seq.derive(stream::MASK))?;
        columns.push(SampleColumn {
            lambda: lam,
            cutmix_lambda_eff: cutmix.lambda_eff,
            cutmix_pasted_fraction: pasted_fraction(&cutmix.image, x1),
            fmix_lambda_eff: fmix.lambda_eff,
        });
        for (row, img) in [x1.clone(), x2.clone(), mixup.image, cutmix.image, fmix.image].into_iter().enumerate() {
            tiles[row].push(img);
        }
    }
    Ok(SampleGrid { tiles, columns })
}

impl SampleGrid {
    /// `(width, height, rgb bytes)`, de-normalised and clamped to `[0, 1]`,
    /// tiles separated by white gaps.
    pub fn to_rgb(&self, norm: &Normalization) -> Result<(u32, u32, Vec<u8>)> {
        let shape = self.tiles[0][0].shape();
        let (h, w) = (shape.height, shape.width);
        let cols = self.columns.len();
        let width = cols * w + (cols + 1) * GAP;
        let height = GRID_ROWS * h + (GRID_ROWS + 1) * GAP;
        let mut rgb = vec![255u8; width * height * 3];
        for (r, row) in self.tiles.iter().enumerate() {
            for (c, tile) in row.iter().enumerate() {
                let raw = norm.invert(tile)?;
                let (oy, ox) = (GAP + r * (h + GAP), GAP + c * (w + GAP));
                for y in 0..h {
                    for x in 0..w {
                        let at = ((oy + y) * width + ox + x) * 3;
                        for k in 0..3 {
                            let ch = if raw.channels() == 1 { 0 } else { k };
                            let v = raw.get(ch, y, x).clamp(0.0, 1.0);
                            rgb[at + k] = (v * 255.0).round() as u8;
                        }
                    }
                }
            }
        }
        Ok((width as u32, height as u32, rgb))
    }

    pub fn sidecar_csv(&self) -> String {
        let mut out = String::from("column,lambda,cutmix_lambda_eff,cutmix_pasted_fraction,fmix_lambda_eff\n");
        for (j, c) in self.columns.iter().enumerate() {
            writeln!(
                out,
                "{j},{},{},{},{}",
                c.lambda, c.cutmix_lambda_eff, c.cutmix_pasted_fraction, c.fmix_lambda_eff
            )
            .unwrap();
        }
        out
    }
}
