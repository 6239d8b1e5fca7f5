//! A small convolutional classifier with hand-written backpropagation.
//!
//! Topology: `[conv kxk (same padding) -> ReLU -> 2x2 max-pool] * L -> dense`.
//! All parameters are `f64`; images are widened on entry.

mod checkpoint;
mod gradcam;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcam::{grad_cam, upsample_bilinear, upsample_nearest, GradCamConfig, TargetClass, Upsampling};
pub use train::{training_labels, 
    mixed_batch, train, AugmentationMode, EpochStats, LrStep, TrainConfig, TrainReport, TrainingSample, TrainExtras,
};

use crate::error::{Error, Result};
use crate::seed::{stream, SeedSequence};
use crate::types::{Image, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Output channels of each conv stage.
    pub conv_channels: Vec<usize>,
    /// Odd kernel side.
    pub kernel: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { conv_channels: vec![8, 16], kernel: 3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TinyCnn {
    input: Shape,
    convs: Vec<ConvLayer>,
    dense: DenseLayer,
}

/// Activations kept from a forward pass for backpropagation and Grad-CAM.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Per conv stage: spatial size of the conv output (before pooling).
    pub sizes: Vec<(usize, usize)>,
    /// Input to each stage, `[c][h][w]`.
    pub inputs: Vec<Vec<f64>>,
    /// Post-ReLU conv output of each stage, `[c][h][w]`.
    pub activations: Vec<Vec<f64>>,
    /// Flat index into `activations` that won each pooled cell.
    pub pool_argmax: Vec<Vec<usize>>,
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradients laid out like the model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub conv: Vec<(Vec<f64>, Vec<f64>)>,
    pub dense: (Vec<f64>, Vec<f64>),
}

/// Result of backpropagating a logit gradient.
#[derive(Clone, Debug)]
pub struct Backward {
    pub grads: Gradients,
    /// d(objective)/d(post-ReLU activation) for every conv stage.
    pub activation_grads: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &TinyCnn) -> Self {
        Gradients {
            conv: model
                .convs
                .iter()
                .map(|c| (vec![0.0; c.weights.len()], vec![0.0; c.bias.len()]))
                .collect(),
            dense: (vec![0.0; model.dense.weights.len()], vec![0.0; model.dense.bias.len()]),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.conv.len() + 2);
        for (w, b) in &self.conv {
            out.push(w);
            out.push(b);
        }
        out.push(&self.dense.0);
        out.push(&self.dense.1);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.conv.len() + 2);
        for (w, b) in &mut self.conv {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.dense.0);
        out.push(&mut self.dense.1);
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn pooled(h: usize, w: usize) -> (usize, usize) {
    (h / 2, w / 2)
}

impl TinyCnn {
    /// He-normal weights, zero biases.
    pub fn new(input: Shape, num_classes: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input, num_classes, arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(SeedSequence::new(seed).derive(stream::INIT));
        for conv in &mut model.convs {
            let fan_in = (conv.in_channels * conv.kernel * conv.kernel) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            conv.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        }
        let normal = Normal::new(0.0, (1.0 / model.dense.inputs as f64).sqrt()).expect("positive std");
        model.dense.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        Ok(model)
    }

    pub fn zeros(input: Shape, num_classes: usize, arch: &Architecture) -> Result<Self> {
        if arch.kernel % 2 == 0 || arch.kernel == 0 {
            return Err(Error::InvalidArgument(format!("kernel must be odd, got {}", arch.kernel)));
        }
        if arch.conv_channels.is_empty() || arch.conv_channels.contains(&0) {
            return Err(Error::InvalidArgument("need at least one conv stage with positive width".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        let (mut h, mut w, mut c) = (input.height, input.width, input.channels);
        let mut convs = Vec::new();
        for &out in &arch.conv_channels {
            let (ph, pw) = pooled(h, w);
            if ph == 0 || pw == 0 {
                return Err(Error::InvalidArgument(format!(
                    "input {input} too small for {} pooling stages",
                    arch.conv_channels.len()
                )));
            }
            convs.push(ConvLayer {
                in_channels: c,
                out_channels: out,
                kernel: arch.kernel,
                weights: vec![0.0; out * c * arch.kernel * arch.kernel],
                bias: vec![0.0; out],
            });
            (h, w, c) = (ph, pw, out);
        }
        let inputs = h * w * c;
        Ok(TinyCnn {
            input,
            convs,
            dense: DenseLayer {
                inputs,
                outputs: num_classes,
                weights: vec![0.0; inputs * num_classes],
                bias: vec![0.0; num_classes],
            },
        })
    }

    pub(crate) fn from_layers(input: Shape, convs: Vec<ConvLayer>, dense: DenseLayer) -> Result<Self> {
        let (mut h, mut w, mut c) = (input.height, input.width, input.channels);
        for (i, conv) in convs.iter().enumerate() {
            let k = conv.kernel;
            if conv.in_channels != c
                || k % 2 == 0
                || conv.weights.len() != conv.out_channels * c * k * k
                || conv.bias.len() != conv.out_channels
            {
                return Err(Error::InvalidArgument(format!("conv layer {i} inconsistent with its input")));
            }
            (h, w) = pooled(h, w);
            c = conv.out_channels;
            if h == 0 || w == 0 {
                return Err(Error::InvalidArgument(format!("conv layer {i} pools to zero size")));
            }
        }
        if convs.is_empty()
            || dense.inputs != h * w * c
            || dense.weights.len() != dense.inputs * dense.outputs
            || dense.bias.len() != dense.outputs
            || dense.outputs < 2
        {
            return Err(Error::InvalidArgument("dense layer inconsistent with conv stack".into()));
        }
        Ok(TinyCnn { input, convs, dense })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn num_classes(&self) -> usize {
        self.dense.outputs
    }

    pub fn convs(&self) -> &[ConvLayer] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.convs
    }

    pub fn dense(&self) -> &DenseLayer {
        &self.dense
    }

    pub fn dense_mut(&mut self) -> &mut DenseLayer {
        &mut self.dense
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.convs {
            out.push(&c.weights);
            out.push(&c.bias);
        }
        out.push(&self.dense.weights);
        out.push(&self.dense.bias);
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weights);
            out.push(&mut c.bias);
        }
        out.push(&mut self.dense.weights);
        out.push(&mut self.dense.bias);
        out
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        if img.shape() != self.input {
            return Err(Error::shape("model input", self.input, img.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(self.forward_trace(img)?.logits)
    }

    pub fn forward_trace(&self, img: &Image) -> Result<ForwardTrace> {
        self.check_input(img)?;
        let (mut h, mut w) = (self.input.height, self.input.width);
        let mut x: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
        let mut trace = ForwardTrace {
            sizes: Vec::with_capacity(self.convs.len()),
            inputs: Vec::with_capacity(self.convs.len()),
            activations: Vec::with_capacity(self.convs.len()),
            pool_argmax: Vec::with_capacity(self.convs.len()),
            features: Vec::new(),
            logits: Vec::new(),
        };
        for conv in &self.convs {
            let mut act = conv_forward(conv, &x, h, w);
            act.iter_mut().for_each(|v| *v = v.max(0.0));
            let (pooled, argmax) = max_pool(&act, conv.out_channels, h, w);
            trace.sizes.push((h, w));
            trace.inputs.push(std::mem::replace(&mut x, pooled));
            trace.activations.push(act);
            trace.pool_argmax.push(argmax);
            (h, w) = pooled_dims(h, w);
        }
        let d = &self.dense;
        let logits = (0..d.outputs)
            .map(|o| {
                let row = &d.weights[o * d.inputs..(o + 1) * d.inputs];
                d.bias[o] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        trace.features = x;
        trace.logits = logits;
        Ok(trace)
    }

    /// Backpropagates `dlogits` through a recorded forward pass.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &[f64]) -> Backward {
        let mut grads = Gradients::zeros_like(self);
        let d = &self.dense;
        let mut dx = vec![0.0; d.inputs];
        for (o, &g) in dlogits.iter().enumerate() {
            grads.dense.1[o] += g;
            let row = &d.weights[o * d.inputs..(o + 1) * d.inputs];
            let grow = &mut grads.dense.0[o * d.inputs..(o + 1) * d.inputs];
            for i in 0..d.inputs {
                grow[i] += g * trace.features[i];
                dx[i] += g * row[i];
            }
        }
        let mut activation_grads = vec![Vec::new(); self.convs.len()];
        for (l, conv) in self.convs.iter().enumerate().rev() {
            let (h, w) = trace.sizes[l];
            let act = &trace.activations[l];
            let mut dact = vec![0.0; act.len()];
            for (p, &src) in trace.pool_argmax[l].iter().enumerate() {
                dact[src] += dx[p];
            }
            let dpre: Vec<f64> = dact.iter().zip(act).map(|(&g, &a)| if a > 0.0 { g } else { 0.0 }).collect();
            activation_grads[l] = dact;
            let (gw, gb) = &mut grads.conv[l];
            dx = conv_backward(conv, &trace.inputs[l], &dpre, h, w, gw, gb, l > 0);
        }
        Backward { grads, activation_grads }
    }

    /// Gradient of `dlogits . logits` with respect to the post-ReLU activation
    /// of conv stage `layer`, without parameter gradients.
    pub fn activation_grad(&self, trace: &ForwardTrace, dlogits: &[f64], layer: usize) -> Vec<f64> {
        let d = &self.dense;
        let mut dx = vec![0.0; d.inputs];
        for (o, &g) in dlogits.iter().enumerate() {
            let row = &d.weights[o * d.inputs..(o + 1) * d.inputs];
            for (x, &wv) in dx.iter_mut().zip(row) {
                *x += g * wv;
            }
        }
        for l in (layer..self.convs.len()).rev() {
            let act = &trace.activations[l];
            let mut dact = vec![0.0; act.len()];
            for (p, &src) in trace.pool_argmax[l].iter().enumerate() {
                dact[src] += dx[p];
            }
            if l == layer {
                return dact;
            }
            let conv = &self.convs[l];
            let (h, w) = trace.sizes[l];
            let dpre: Vec<f64> = dact.iter().zip(act).map(|(&g, &a)| if a > 0.0 { g } else { 0.0 }).collect();
            let mut gw = vec![0.0; conv.weights.len()];
            let mut gb = vec![0.0; conv.bias.len()];
            dx = conv_backward(conv, &trace.inputs[l], &dpre, h, w, &mut gw, &mut gb, true);
        }
        unreachable!("layer index checked by caller")
    }

    /// Class with the largest logit; ties go to the lowest index.
    pub fn predict(&self, img: &Image) -> Result<usize> {
        Ok(argmax(&self.forward(img)?))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy against a soft target, and its gradient w.r.t. the logits.
pub fn soft_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = target
        .iter()
        .zip(logits)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &z)| t * (log_sum - z))
        .sum();
    let grad = logits
        .iter()
        .zip(target)
        .map(|(&z, &t)| (z - log_sum).exp() - t)
        .collect();
    (loss, grad)
}

fn pooled_dims(h: usize, w: usize) -> (usize, usize) {
    pooled(h, w)
}

/// Unfolds `x` (`channels` planes of `h x w`) into `channels * k * k` rows of
/// `h * w` values, zero outside the image. Row `(i * k + ky) * k + kx` holds
/// input channel `i` shifted by `(ky - k/2, kx - k/2)`.
fn im2col(x: &[f64], channels: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut col = vec![0.0; channels * k * k * hw];
    for i in 0..channels {
        let src = &x[i * hw..(i + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((i * k + ky) * k + kx) * hw..][..hw];
                let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                let (y0, y1) = valid_range(h, dy);
                let (x0, x1) = valid_range(w, dx);
                let (s0, s1) = ((x0 as isize + dx) as usize, (x1 as isize + dx) as usize);
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    row[y * w + x0..y * w + x1].copy_from_slice(&src[sy * w + s0..sy * w + s1]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: sums unfolded gradients back onto the input planes.
fn col2im(col: &[f64], channels: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut x = vec![0.0; channels * hw];
    for i in 0..channels {
        let dst = &mut x[i * hw..(i + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((i * k + ky) * k + kx) * hw..][..hw];
                let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                let (y0, y1) = valid_range(h, dy);
                let (x0, x1) = valid_range(w, dx);
                let (s0, s1) = ((x0 as isize + dx) as usize, (x1 as isize + dx) as usize);
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    for (d, &g) in dst[sy * w + s0..sy * w + s1].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += g;
                    }
                }
            }
        }
    }
    x
}

/// `out[p] = init + sum_j coef[j] * rows[j][p]`, summed in ascending `j`.
/// Eight outputs are accumulated in registers at a time.
fn combine_rows(out: &mut [f64], init: f64, coef: &[f64], rows: &[f64]) {
    let n = out.len();
    let blocks = n / 8 * 8;
    for p0 in (0..blocks).step_by(8) {
        let mut acc = [init; 8];
        for (j, &c) in coef.iter().enumerate() {
            let r = &rows[j * n + p0..j * n + p0 + 8];
            for l in 0..8 {
                acc[l] += c * r[l];
            }
        }
        out[p0..p0 + 8].copy_from_slice(&acc);
    }
    for p in blocks..n {
        let mut acc = init;
        for (j, &c) in coef.iter().enumerate() {
            acc += c * rows[j * n + p];
        }
        out[p] = acc;
    }
}

/// Dot product with four interleaved partial sums (fixed order).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv_forward(conv: &ConvLayer, x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let ckk = conv.in_channels * conv.kernel * conv.kernel;
    let col = im2col(x, conv.in_channels, h, w, conv.kernel);
    let mut out = vec![0.0; conv.out_channels * hw];
    for (o, plane) in out.chunks_exact_mut(hw).enumerate() {
        combine_rows(plane, conv.bias[o], &conv.weights[o * ckk..(o + 1) * ckk], &col);
    }
    out
}

/// Output positions `y` with `0 <= y + offset < n`.
fn valid_range(n: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset.max(0)).max(0) as usize;
    (lo.min(n), hi.min(n))
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    conv: &ConvLayer,
    x: &[f64],
    dout: &[f64],
    h: usize,
    w: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let hw = h * w;
    let ckk = conv.in_channels * conv.kernel * conv.kernel;
    let col = im2col(x, conv.in_channels, h, w, conv.kernel);
    for (o, g) in dout.chunks_exact(hw).enumerate() {
        gb[o] += g.iter().sum::<f64>();
        for (j, row) in col.chunks_exact(hw).enumerate() {
            gw[o * ckk + j] += dot(g, row);
        }
    }
    if !need_input_grad {
        return Vec::new();
    }
    let mut dcol = vec![0.0; col.len()];
    let mut coef = vec![0.0; conv.out_channels];
    for (j, drow) in dcol.chunks_exact_mut(hw).enumerate() {
        for (o, c) in coef.iter_mut().enumerate() {
            *c = conv.weights[o * ckk + j];
        }
        combine_rows(drow, 0.0, &coef, dout);
    }
    col2im(&dcol, conv.in_channels, h, w, conv.kernel)
}

/// 2x2 max-pool, stride 2, trailing odd row/column dropped. The first maximum
/// in row-major window order wins.
fn max_pool(x: &[f64], channels: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = pooled(h, w);
    let mut out = Vec::with_capacity(channels * ph * pw);
    let mut arg = Vec::with_capacity(channels * ph * pw);
    for c in 0..channels {
        let base = c * h * w;
        for py in 0..ph {
            for px in 0..pw {
                let mut best = base + (2 * py) * w + 2 * px;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * py + dy) * w + 2 * px + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
