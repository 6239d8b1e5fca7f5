use rand::Rng;

use super::{fourier_mask, sample_lambda, FourierMaskParams};
use crate::error::{Error, Result};
use crate::seed::{stream, SeedSequence};
use crate::types::Mask;

/// A fixed set of masks sampled once and reused for a whole training run.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskBank {
    masks: Vec<Mask>,
}

impl MaskBank {
    pub fn new(masks: Vec<Mask>) -> Result<Self> {
        if let Some(first) = masks.first() {
            let (h, w) = (first.height(), first.width());
            if let Some(m) = masks.iter().find(|m| m.height() != h || m.width() != w) {
                return Err(Error::shape(
                    "mask bank entry",
                    format!("{h}x{w}"),
                    format!("{}x{}", m.height(), m.width()),
                ));
            }
        }
        Ok(MaskBank { masks })
    }

    /// `n` Fourier masks, each with its own Beta-drawn coverage.
    pub fn sample(n: usize, height: usize, width: usize, params: &FourierMaskParams, seed: u64) -> Result<Self> {
        let seq = SeedSequence::new(seed).child(stream::BANK);
        let masks = (0..n as u64)
            .map(|j| {
                let item = seq.child(j);
                let lambda = sample_lambda(params, item.derive(stream::LAMBDA))?;
                fourier_mask(height, width, lambda, params, item.derive(stream::MASK))
            })
            .collect::<Result<Vec<_>>>()?;
        MaskBank::new(masks)
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Uniform choice over the bank, fixed by `seed`.
    pub fn pick(&self, seed: u64) -> Result<&Mask> {
        if self.masks.is_empty() {
            return Err(Error::Empty("mask bank"));
        }
        let mut rng = SeedSequence::new(seed).rng();
        Ok(&self.masks[rng.random_range(0..self.masks.len())])
    }
}
