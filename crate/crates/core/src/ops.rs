//! Layer kernels.
//!
//! All reductions accumulate in `f64` in a fixed order and round to `f32`
//! once at the end, so outputs are bitwise reproducible.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{ragged, window_output, ConvWeights, Tensor};

/// Direct 2-D convolution with zero padding.
///
/// Each output is `bias[co] + Σ w·x`, summed over `(ky, kx, cin)` in
/// ascending order.
pub fn conv2d(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    w.validate()?;
    if input.channels() != w.cin {
        return Err(Error::DimensionMismatch(format!(
            "conv expects {} input channels, got {}",
            w.cin,
            input.channels()
        )));
    }
    let (h, wd, cin) = input.shape();
    let (oh, ow) = w.output_dims(h, wd)?;
    let cout = w.cout;
    let src = input.data();
    let mut out = Vec::with_capacity(oh * ow * cout);
    let mut acc = vec![0.0f64; cout];
    for oy in 0..oh {
        for ox in 0..ow {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ky in 0..w.kh {
                let Some(iy) = (oy * w.stride + ky).checked_sub(w.padding).filter(|&iy| iy < h) else {
                    continue;
                };
                for kx in 0..w.kw {
                    let Some(ix) = (ox * w.stride + kx).checked_sub(w.padding).filter(|&ix| ix < wd) else {
                        continue;
                    };
                    let px = &src[(iy * wd + ix) * cin..][..cin];
                    let wbase = (ky * w.kw + kx) * cin * cout;
                    for (ci, &x) in px.iter().enumerate() {
                        let x = f64::from(x);
                        let row = &w.weights[wbase + ci * cout..][..cout];
                        for (a, &wv) in acc.iter_mut().zip(row) {
                            *a += x * f64::from(wv);
                        }
                    }
                }
            }
            out.extend(acc.iter().zip(&w.bias).map(|(&a, &b)| (a + f64::from(b)) as f32));
        }
    }
    Tensor::new(oh, ow, cout, out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Per-channel max over `window × window` patches, no padding.
pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    if window == 0 || stride == 0 {
        return Err(Error::DimensionMismatch("maxpool window and stride must be >= 1".into()));
    }
    let (h, w, c) = input.shape();
    let oh = window_output(h, window, stride, 0).ok_or_else(|| ragged("maxpool", h, window, stride, 0))?;
    let ow = window_output(w, window, stride, 0).ok_or_else(|| ragged("maxpool", w, window, stride, 0))?;
    let mut out = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut m = f32::NEG_INFINITY;
                for iy in oy * stride..oy * stride + window {
                    for ix in ox * stride..ox * stride + window {
                        let v = input.get(iy, ix, ch);
                        if v > m {
                            m = v;
                        }
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(oh, ow, c, out)
}

/// `out[.., ch] = in[.., ch] * scale[ch] + shift[ch]` (folded batch norm).
pub fn affine_channel(input: &Tensor, scale: &[f32], shift: &[f32]) -> Result<Tensor> {
    let c = input.channels();
    if scale.len() != c || shift.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "affine expects {c} scale/shift values, got {}/{}",
            scale.len(),
            shift.len()
        )));
    }
    let data = input
        .data()
        .chunks_exact(c)
        .flat_map(|px| {
            px.iter()
                .zip(scale.iter().zip(shift))
                .map(|(&x, (&s, &b))| (f64::from(x) * f64::from(s) + f64::from(b)) as f32)
        })
        .collect();
    let (h, w, _) = input.shape();
    Tensor::new(h, w, c, data)
}

/// Fully connected layer over the flattened input. `weights` is
/// `[out × in]` row-major.
pub fn dense(input: &[f32], weights: &[f32], bias: &[f32]) -> Result<Vec<f32>> {
    let n_out = bias.len();
    let n_in = input.len();
    if n_out == 0 || weights.len() != n_out * n_in {
        return Err(Error::DimensionMismatch(format!(
            "dense with {n_out} outputs and {n_in} inputs needs {} weights, got {}",
            n_out * n_in,
            weights.len()
        )));
    }
    Ok(weights
        .chunks_exact(n_in)
        .zip(bias)
        .map(|(row, &b)| {
            let acc = row
                .iter()
                .zip(input)
                .fold(0.0f64, |acc, (&w, &x)| acc + f64::from(w) * f64::from(x));
            (acc + f64::from(b)) as f32
        })
        .collect())
}

/// Max-subtracted softmax.
///
/// Probabilities that underflow are clamped to the smallest positive normal
/// `f32` so every output stays in `(0, 1]`.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let Some(max) = logits.iter().copied().map(f64::from).reduce(f64::max) else {
        return Vec::new();
    };
    let exps: Vec<f64> = logits.iter().map(|&v| libm::exp(f64::from(v) - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| ((e / sum) as f32).max(f32::MIN_POSITIVE)).collect()
}

/// Elementwise sum of equally shaped tensors, accumulated in input order.
pub fn add(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::DimensionMismatch("add needs at least one input".into()))?;
    if let Some(bad) = inputs.iter().find(|t| t.shape() != first.shape()) {
        return Err(Error::DimensionMismatch(format!(
            "add inputs disagree: {:?} vs {:?}",
            first.shape(),
            bad.shape()
        )));
    }
    let data = (0..first.len())
        .map(|i| inputs.iter().fold(0.0f64, |acc, t| acc + f64::from(t.data()[i])) as f32)
        .collect();
    let (h, w, c) = first.shape();
    Tensor::new(h, w, c, data)
}

/// Channel-wise concatenation in input order.
pub fn concat(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::DimensionMismatch("concat needs at least one input".into()))?;
    let (h, w) = (first.height(), first.width());
    if let Some(bad) = inputs.iter().find(|t| (t.height(), t.width()) != (h, w)) {
        return Err(Error::DimensionMismatch(format!(
            "concat inputs disagree spatially: {h}x{w} vs {}x{}",
            bad.height(),
            bad.width()
        )));
    }
    let c: usize = inputs.iter().map(|t| t.channels()).sum();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for t in inputs {
                data.extend_from_slice(t.pixel(y, x));
            }
        }
    }
    Tensor::new(h, w, c, data)
}
