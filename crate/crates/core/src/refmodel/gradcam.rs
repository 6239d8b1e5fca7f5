//! Grad-CAM: `ReLU(sum_k alpha_k * A^k)` where `alpha_k` is the spatial mean of
//! the target logit's gradient over activation map `A^k`.

use serde::{Deserialize, Serialize};

use super::{argmax, TinyCnn};
use crate::error::{Error, Result};
use crate::types::{Image, SaliencyMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetClass {
    Predicted,
    True,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    Nearest,
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCamConfig {
    /// Conv stage whose activations are weighted; `None` means the last one.
    pub target_layer: Option<usize>,
    pub target_class: TargetClass,
    pub upsampling: Upsampling,
}

impl Default for GradCamConfig {
    fn default() -> Self {
        GradCamConfig {
            target_layer: None,
            target_class: TargetClass::Predicted,
            upsampling: Upsampling::Bilinear,
        }
    }
}

/// Saliency for `img`. `true_label` is required when the config targets the true class.
pub fn grad_cam(model: &TinyCnn, img: &Image, cfg: &GradCamConfig, true_label: Option<usize>) -> Result<SaliencyMap> {
    let layers = model.convs().len();
    let layer = cfg.target_layer.unwrap_or(layers - 1);
    if layer >= layers {
        return Err(Error::InvalidArgument(format!(
            "target layer {layer} out of range ({layers} conv layers)"
        )));
    }
    let trace = model.forward_trace(img)?;
    let class = match cfg.target_class {
        TargetClass::Predicted => argmax(&trace.logits),
        TargetClass::True => {
            let c = true_label
                .ok_or_else(|| Error::InvalidArgument("true-class Grad-CAM needs a label".into()))?;
            if c >= model.num_classes() {
                return Err(Error::InvalidArgument(format!("label {c} out of range")));
            }
            c
        }
    };
    let mut onehot = vec![0.0; model.num_classes()];
    onehot[class] = 1.0;
    let grad = model.activation_grad(&trace, &onehot, layer);
    let (h, w) = trace.sizes[layer];
    let cam = weighted_activation_map(&trace.activations[layer], &grad, h, w);
    let up = match cfg.upsampling {
        Upsampling::Nearest => upsample_nearest(&cam, h, w, img.height(), img.width()),
        Upsampling::Bilinear => upsample_bilinear(&cam, h, w, img.height(), img.width()),
    };
    SaliencyMap::new(img.height(), img.width(), up.into_iter().map(|v| v.max(0.0) as f32).collect())
}

/// `ReLU(sum_k mean(grad_k) * act_k)` over channel-planar maps of size `h x w`.
pub(crate) fn weighted_activation_map(act: &[f64], grad: &[f64], h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cam = vec![0.0; hw];
    for (a, g) in act.chunks_exact(hw).zip(grad.chunks_exact(hw)) {
        let alpha = g.iter().sum::<f64>() / hw as f64;
        for (c, &v) in cam.iter_mut().zip(a) {
            *c += alpha * v;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    cam
}

pub fn upsample_nearest(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = (y * h / out_h).min(h - 1);
        for x in 0..out_w {
            let sx = (x * w / out_w).min(w - 1);
            out.push(src[sy * w + sx]);
        }
    }
    out
}

/// Half-pixel-centred bilinear interpolation (edges clamped).
pub fn upsample_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |dst: usize, n_in: usize, n_out: usize| {
        let s = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, ty) = coord(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, tx) = coord(x, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            let bottom = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmodel::Architecture;
    use crate::types::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradients_give_zero_map() {
        let shape = Shape::new(8, 8, 1);
        let mut m = TinyCnn::new(shape, 2, &Architecture::default(), 1).unwrap();
        m.dense_mut().weights.iter_mut().for_each(|w| *w = 0.0);
        let img = Image::filled(8, 8, 1, 0.5).unwrap();
        let map = grad_cam(&m, &img, &GradCamConfig::default(), None).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_map_with_unit_gradient_is_the_activation() {
        let act = vec![0.0, 1.5, 2.0, 0.25];
        let grad = vec![1.0; 4];
        assert_eq!(weighted_activation_map(&act, &grad, 2, 2), act);
        // 1x1 map upsampled is constant
        assert_eq!(upsample_bilinear(&[3.0], 1, 1, 4, 4), vec![3.0; 16]);
        assert_eq!(upsample_nearest(&[3.0], 1, 1, 2, 3), vec![3.0; 6]);
    }

    #[test]
    fn nearest_upsampling_replicates_blocks() {
        let up = upsample_nearest(&[1.0, 2.0, 3.0, 4.0], 2, 2, 4, 4);
        #[rustfmt::skip]
        let want = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(up, want);
    }

    #[test]
    fn bilinear_matches_half_pixel_reference() {
        // 1x2 -> 1x4: sample points -0.25, 0.25, 0.75, 1.25 (clamped)
        let up = upsample_bilinear(&[0.0, 4.0], 1, 2, 1, 4);
        assert_eq!(up, vec![0.0, 1.0, 3.0, 4.0]);
    }

    /// Independent oracle for the last conv layer: route the dense weights of
    /// the target class back through each pooling window by explicit loops
    /// (first maximum wins), then form the weighted sum.
    #[test]
    fn matches_loop_oracle_on_toy_net() {
        let shape = Shape::new(6, 6, 1);
        let arch = Architecture { conv_channels: vec![3], kernel: 3 };
        let m = TinyCnn::new(shape, 3, &arch, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Image::new(6, 6, 1, (0..36).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let cfg = GradCamConfig { upsampling: Upsampling::Nearest, ..Default::default() };
        let map = grad_cam(&m, &img, &cfg, None).unwrap();

        let trace = m.forward_trace(&img).unwrap();
        let class = argmax(&trace.logits);
        let act = &trace.activations[0];
        let d = m.dense();
        let mut grad = vec![0.0; 3 * 36];
        for c in 0..3 {
            for py in 0..3 {
                for px in 0..3 {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let at = c * 36 + (2 * py + dy) * 6 + 2 * px + dx;
                            if act[at] > best.0 {
                                best = (act[at], at);
                            }
                        }
                    }
                    grad[best.1] += d.weights[class * d.inputs + c * 9 + py * 3 + px];
                }
            }
        }
        let mut expected = vec![0.0; 36];
        for k in 0..3 {
            let mut alpha = 0.0;
            for p in 0..36 {
                alpha += grad[k * 36 + p];
            }
            alpha /= 36.0;
            for p in 0..36 {
                expected[p] += alpha * act[k * 36 + p];
            }
        }
        for (got, want) in map.values().iter().zip(&expected) {
            approx::assert_abs_diff_eq!(*got as f64, want.max(0.0), epsilon = 1e-6);
        }
    }

    #[test]
    fn nonnegative_and_layer_checked() {
        let shape = Shape::new(16, 16, 3);
        let m = TinyCnn::new(shape, 4, &Architecture::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let img = Image::new(16, 16, 3, (0..768).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            for layer in [0, 1] {
                let cfg = GradCamConfig { target_layer: Some(layer), ..Default::default() };
                let map = grad_cam(&m, &img, &cfg, None).unwrap();
                assert!(map.values().iter().all(|&v| v >= 0.0));
            }
        }
        let img = Image::filled(16, 16, 3, 0.0).unwrap();
        let bad = GradCamConfig { target_layer: Some(2), ..Default::default() };
        assert!(grad_cam(&m, &img, &bad, None).is_err());
        let needs_label = GradCamConfig { target_class: TargetClass::True, ..Default::default() };
        assert!(grad_cam(&m, &img, &needs_label, None).is_err());
        assert!(grad_cam(&m, &img, &needs_label, Some(1)).is_ok());
    }
}
