//! `OBNN` checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "OBNN"
//! version      u32      = 1
//! input        u32 x3   height, width, channels
//! layer_count  u32      conv layers + 1 dense layer
//! per layer:
//!   kind       u32      0 = conv, 1 = dense
//!   conv:      u32 x3   in_channels, out_channels, kernel
//!   dense:     u32 x2   inputs, outputs
//!   weights    f64 x n  conv [out][in][ky][kx], dense [out][in]
//!   bias       f64 x m
//! ```
//!
//! The dense layer must be last and appear exactly once.

use std::io::Write;
use std::path::Path;

use super::{ConvLayer, DenseLayer, TinyCnn};
use crate::dataio::{atomic_write, ByteReader};
use crate::error::{Error, Result};
use crate::types::Shape;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OBNN";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_CONV: u32 = 0;
const KIND_DENSE: u32 = 1;

pub fn encode_checkpoint(model: &TinyCnn) -> Vec<u8> {
    let mut out = Vec::new();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    let f64s = |out: &mut Vec<u8>, vs: &[f64]| vs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let s = model.input_shape();
    for v in [s.height, s.width, s.channels, model.convs().len() + 1] {
        u32le(&mut out, v);
    }
    for c in model.convs() {
        out.extend_from_slice(&KIND_CONV.to_le_bytes());
        for v in [c.in_channels, c.out_channels, c.kernel] {
            u32le(&mut out, v);
        }
        f64s(&mut out, &c.weights);
        f64s(&mut out, &c.bias);
    }
    let d = model.dense();
    out.extend_from_slice(&KIND_DENSE.to_le_bytes());
    u32le(&mut out, d.inputs);
    u32le(&mut out, d.outputs);
    f64s(&mut out, &d.weights);
    f64s(&mut out, &d.bias);
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<TinyCnn> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic, expected OBNN"));
    }
    let version = r.u32_le()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let (h, w, c) = (r.u32_le()? as usize, r.u32_le()? as usize, r.u32_le()? as usize);
    let input = Shape::new(h, w, c);
    let layers = r.u32_le()? as usize;
    if layers < 2 {
        return Err(Error::format(path, "need at least one conv and one dense layer"));
    }
    let mut convs = Vec::new();
    let mut dense = None;
    for i in 0..layers {
        let kind = r.u32_le()?;
        match kind {
            KIND_CONV if i + 1 < layers => {
                let (cin, cout, k) = (r.u32_le()? as usize, r.u32_le()? as usize, r.u32_le()? as usize);
                let n = cout
                    .checked_mul(cin)
                    .and_then(|v| v.checked_mul(k))
                    .and_then(|v| v.checked_mul(k))
                    .ok_or_else(|| Error::format(path, "conv layer size overflows"))?;
                convs.push(ConvLayer {
                    in_channels: cin,
                    out_channels: cout,
                    kernel: k,
                    weights: r.f64s_le(n)?,
                    bias: r.f64s_le(cout)?,
                });
            }
            KIND_DENSE if i + 1 == layers => {
                let (inputs, outputs) = (r.u32_le()? as usize, r.u32_le()? as usize);
                let n = inputs
                    .checked_mul(outputs)
                    .ok_or_else(|| Error::format(path, "dense layer size overflows"))?;
                dense = Some(DenseLayer {
                    inputs,
                    outputs,
                    weights: r.f64s_le(n)?,
                    bias: r.f64s_le(outputs)?,
                });
            }
            other => {
                return Err(Error::format(path, format!("unexpected layer kind {other} at layer {i}")));
            }
        }
    }
    r.finish()?;
    let dense = dense.expect("last layer checked to be dense");
    let model = TinyCnn::from_layers(input, convs, dense).map_err(|e| Error::format(path, e.to_string()))?;
    if model.param_slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::format(path, "non-finite parameter"));
    }
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &TinyCnn) -> Result<()> {
    let bytes = encode_checkpoint(model);
    atomic_write(path, |f| f.write_all(&bytes))
}

pub fn read_checkpoint(path: &Path) -> Result<TinyCnn> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
