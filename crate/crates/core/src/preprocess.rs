//! Mapping decoded images onto a model's input shape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CropPolicy {
    /// Take the centered `input_shape` window (offsets rounded down).
    #[default]
    Center,
    /// The (resized) image must already match the input shape.
    None,
}

/// Resize, crop, then `(v − mean[ch]) · scale[ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocess {
    /// Bilinear resize so the shorter side has this length.
    pub resize_shorter: Option<usize>,
    pub crop: CropPolicy,
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

impl Preprocess {
    /// No resizing, no normalization; the image must match the input shape.
    pub fn identity(channels: usize) -> Self {
        Self { resize_shorter: None, crop: CropPolicy::None, mean: vec![0.0; channels], scale: vec![1.0; channels] }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.mean.len() != channels || self.scale.len() != channels {
            return Err(Error::DimensionMismatch(format!(
                "preprocess needs {channels} mean/scale values, got {}/{}",
                self.mean.len(),
                self.scale.len()
            )));
        }
        if self.resize_shorter == Some(0) {
            return Err(Error::DimensionMismatch("resize target must be positive".into()));
        }
        Ok(())
    }

    pub fn apply(&self, image: &Tensor, input_shape: (usize, usize, usize)) -> Result<Tensor> {
        let (th, tw, tc) = input_shape;
        self.validate(tc)?;
        if image.channels() != tc {
            return Err(Error::DimensionMismatch(format!(
                "model expects {tc} channels, image has {}",
                image.channels()
            )));
        }
        let resized = match self.resize_shorter {
            Some(side) => {
                let (h, w) = (image.height(), image.width());
                let short = h.min(w);
                // Round half up in integer arithmetic.
                let nh = ((h * side * 2 + short) / (short * 2)).max(1);
                let nw = ((w * side * 2 + short) / (short * 2)).max(1);
                resize_bilinear(image, nh, nw)
            }
            None => image.clone(),
        };
        let cropped = match self.crop {
            CropPolicy::Center => center_crop(&resized, th, tw)?,
            CropPolicy::None if (resized.height(), resized.width()) == (th, tw) => resized,
            CropPolicy::None => {
                return Err(Error::DimensionMismatch(format!(
                    "image is {}x{}, model expects {th}x{tw}",
                    resized.height(),
                    resized.width()
                )))
            }
        };
        let data = cropped
            .data()
            .chunks_exact(tc)
            .flat_map(|px| {
                px.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(&v, (&m, &s))| ((f64::from(v) - f64::from(m)) * f64::from(s)) as f32)
            })
            .collect();
        Tensor::new(th, tw, tc, data)
    }
}

/// Half-pixel-centered bilinear resampling with edge clamping.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w, c) = image.shape();
    if (h, w) == (out_h, out_w) {
        return image.clone();
    }
    let sample = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = libm::floor(s) as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|ox| sample(ox, out_w, w)).collect();
    let mut out = Tensor::zeros(out_h, out_w, c);
    for oy in 0..out_h {
        let (y0, y1, fy) = sample(oy, out_h, h);
        for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
            for ch in 0..c {
                let top = f64::from(image.get(y0, x0, ch)) * (1.0 - fx) + f64::from(image.get(y0, x1, ch)) * fx;
                let bot = f64::from(image.get(y1, x0, ch)) * (1.0 - fx) + f64::from(image.get(y1, x1, ch)) * fx;
                out.set(oy, ox, ch, (top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    out
}

pub fn center_crop(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = image.shape();
    if h < out_h || w < out_w {
        return Err(Error::DimensionMismatch(format!("cannot crop {h}x{w} to {out_h}x{out_w}")));
    }
    let (oy, ox) = ((h - out_h) / 2, (w - out_w) / 2);
    Ok(Tensor::from_fn(out_h, out_w, c, |y, x, ch| image.get(y + oy, x + ox, ch)))
}
