//! Low-pass Fourier masks: complex Gaussian noise on the frequency grid,
//! attenuated by `1 / max(f_min, |f|)^decay`, transformed back to pixel space.
//! The real part is a smooth grayscale field whose top values are covered.

use rand_distr::{Beta, Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_fraction, target_count, top_k_mask, FourierMaskParams};
use crate::error::{Error, Result};
use crate::seed::SeedSequence;
use crate::types::Mask;

/// Sample frequencies in cycles per pixel, in FFT bin order (numpy's `fftfreq`).
fn fft_freq(n: usize) -> Vec<f64> {
    let n_pos = n.div_ceil(2);
    (0..n)
        .map(|k| if k < n_pos { k as f64 } else { k as f64 - n as f64 } / n as f64)
        .collect()
}

fn ifft_2d(height: usize, width: usize, buf: &mut [Complex<f64>]) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_inverse(width);
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_inverse(height);
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = buf[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            buf[r * width + c] = column[r];
        }
    }
}

/// The grayscale field that [`fourier_mask`] thresholds, row-major.
pub fn fourier_field(height: usize, width: usize, params: &FourierMaskParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("mask grid has zero area".into()));
    }
    let fy = fft_freq(height);
    let fx = fft_freq(width);
    let f_min = 1.0 / height.max(width) as f64;

    let mut rng = SeedSequence::new(seed).rng();
    let mut spectrum: Vec<Complex<f64>> = Vec::with_capacity(height * width);
    for &y in &fy {
        for &x in &fx {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let scale = 1.0 / (x * x + y * y).sqrt().max(f_min).powf(params.decay_power);
            spectrum.push(Complex::new(re * scale, im * scale));
        }
    }
    ifft_2d(height, width, &mut spectrum);
    Ok(spectrum.into_iter().map(|c| c.re).collect())
}

/// Covers exactly `round(lambda * h * w)` pixels: those with the highest field values.
pub fn fourier_mask(height: usize, width: usize, lambda: f64, params: &FourierMaskParams, seed: u64) -> Result<Mask> {
    check_fraction(lambda)?;
    let field = fourier_field(height, width, params, seed)?;
    Ok(top_k_mask(height, width, &field, target_count(lambda, height * width)))
}

/// Mixing coefficient drawn from `Beta(alpha, alpha)`.
pub fn sample_lambda(params: &FourierMaskParams, seed: u64) -> Result<f64> {
    params.validate()?;
    let beta = Beta::new(params.alpha, params.alpha)
        .map_err(|e| Error::InvalidArgument(format!("beta distribution: {e}")))?;
    let mut rng = SeedSequence::new(seed).rng();
    Ok(beta.sample(&mut rng).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_freq_matches_numpy() {
        assert_eq!(fft_freq(4), vec![0.0, 0.25, -0.5, -0.25]);
        assert_eq!(fft_freq(5), vec![0.0, 0.2, 0.4, -0.4, -0.2]);
    }

    /// Independent oracle: full sort descending, take the first k.
    fn sort_oracle(field: &[f64], k: usize) -> Vec<bool> {
        let mut idx: Vec<usize> = (0..field.len()).collect();
        idx.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
        let mut covered = vec![false; field.len()];
        for &i in &idx[..k] {
            covered[i] = true;
        }
        covered
    }

    #[test]
    fn eight_by_eight_at_point_three_covers_nineteen() {
        let p = FourierMaskParams::default();
        for seed in 0..20 {
            let m = fourier_mask(8, 8, 0.3, &p, seed).unwrap();
            assert_eq!(m.covered_count(), 19);
            let field = fourier_field(8, 8, &p, seed).unwrap();
            assert_eq!(m.covered(), sort_oracle(&field, 19).as_slice());
        }
    }

    #[test]
    fn boundaries() {
        let p = FourierMaskParams::default();
        assert_eq!(fourier_mask(6, 9, 0.0, &p, 3).unwrap(), Mask::empty(6, 9));
        assert_eq!(fourier_mask(6, 9, 1.0, &p, 3).unwrap(), Mask::full(6, 9));
        assert!(fourier_mask(6, 9, -0.1, &p, 3).is_err());
    }

    #[test]
    fn field_is_deterministic_and_seed_dependent() {
        let p = FourierMaskParams::default();
        let a = fourier_field(16, 16, &p, 11).unwrap();
        assert_eq!(a, fourier_field(16, 16, &p, 11).unwrap());
        assert_ne!(a, fourier_field(16, 16, &p, 12).unwrap());
    }

    #[test]
    fn higher_decay_gives_smoother_field() {
        // Mean squared neighbour difference relative to variance drops as decay grows.
        let roughness = |decay: f64| {
            let p = FourierMaskParams { decay_power: decay, alpha: 1.0 };
            let mut total = 0.0;
            for seed in 0..10 {
                let f = fourier_field(32, 32, &p, seed).unwrap();
                let mean = f.iter().sum::<f64>() / f.len() as f64;
                let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64;
                let mut diff = 0.0;
                for r in 0..32 {
                    for c in 0..31 {
                        diff += (f[r * 32 + c + 1] - f[r * 32 + c]).powi(2);
                    }
                }
                total += diff / (32.0 * 31.0) / var;
            }
            total
        };
        assert!(roughness(3.0) < roughness(1.0));
    }

    #[test]
    fn lambda_uniform_moments() {
        let p = FourierMaskParams::default();
        let seq = SeedSequence::new(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|i| sample_lambda(&p, seq.derive(i)).unwrap()).collect();
        assert!(draws.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() <= 0.01, "mean {mean}");
        // Beta(1,1) variance = a*b / ((a+b)^2 (a+b+1)) = 1/12
        assert!((var - 1.0 / 12.0).abs() <= 0.005, "var {var}");
    }
}
