//! Dense channels-last tensors and convolution parameters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A dense `height × width × channels` array of `f32`.
///
/// Storage is row-major and channels-last: element `(y, x, ch)` lives at
/// `(y * width + x) * channels + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::DimensionMismatch(format!("tensor {height}x{width}x{channels} overflows")))?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "tensor {height}x{width}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "tensor dims must be positive");
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    /// A `1 × 1 × n` tensor holding `values`.
    pub fn vector(values: Vec<f32>) -> Result<Self> {
        let n = values.len();
        Self::new(1, 1, n, values)
    }

    /// Builds a tensor by evaluating `f(y, x, ch)` in storage order.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut t = Self::zeros(height, width, channels);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    t.data[(y * width + x) * channels + ch] = f(y, x, ch);
                }
            }
        }
        t
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.width + x) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f32 {
        self.data[self.index(y, x, ch)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, ch: usize, value: f32) {
        let i = self.index(y, x, ch);
        self.data[i] = value;
    }

    /// All channel values at one spatial position.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Applies `f` to every element, keeping the shape.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same values viewed as a `1 × 1 × len` vector.
    pub fn flatten(self) -> Self {
        let n = self.data.len();
        Self { height: 1, width: 1, channels: n, data: self.data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Convolution kernel bank.
///
/// `weights` is laid out `(ky, kx, cin, cout)` with `cout` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvWeights {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let w = Self { kh, kw, cin, cout, weights, bias, stride, padding };
        w.validate()?;
        Ok(w)
    }

    /// Zero-bias kernel bank with stride 1 and no padding.
    pub fn unbiased(kh: usize, kw: usize, cin: usize, cout: usize, weights: Vec<f32>) -> Result<Self> {
        Self::new(kh, kw, cin, cout, weights, vec![0.0; cout], 1, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kh == 0 || self.kw == 0 || self.cin == 0 || self.cout == 0 {
            return Err(Error::DimensionMismatch(format!(
                "conv dims must be positive, got {}x{}x{}x{}",
                self.kh, self.kw, self.cin, self.cout
            )));
        }
        if self.stride == 0 {
            return Err(Error::DimensionMismatch("conv stride must be >= 1".into()));
        }
        let expected = self.kh * self.kw * self.cin * self.cout;
        if self.weights.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "conv {}x{}x{}x{} needs {expected} weights, got {}",
                self.kh,
                self.kw,
                self.cin,
                self.cout,
                self.weights.len()
            )));
        }
        if self.bias.len() != self.cout {
            return Err(Error::DimensionMismatch(format!(
                "conv bias needs {} values, got {}",
                self.cout,
                self.bias.len()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn weight(&self, ky: usize, kx: usize, ci: usize, co: usize) -> f32 {
        self.weights[((ky * self.kw + kx) * self.cin + ci) * self.cout + co]
    }

    /// Per-output-channel sum of kernel weights.
    pub fn kernel_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.cout];
        for chunk in self.weights.chunks_exact(self.cout) {
            for (s, &w) in sums.iter_mut().zip(chunk) {
                *s += f64::from(w);
            }
        }
        sums
    }

    /// Output spatial size for an `height × width` input, rejecting
    /// windows that do not tile the padded input exactly.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let oh = window_output(height, self.kh, self.stride, self.padding)
            .ok_or_else(|| ragged("conv", height, self.kh, self.stride, self.padding))?;
        let ow = window_output(width, self.kw, self.stride, self.padding)
            .ok_or_else(|| ragged("conv", width, self.kw, self.stride, self.padding))?;
        Ok((oh, ow))
    }
}

/// `(extent + 2·pad − window) / stride + 1` when that is a positive integer.
pub(crate) fn window_output(extent: usize, window: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    if window == 0 || stride == 0 || padded < window {
        return None;
    }
    let span = padded - window;
    span.is_multiple_of(stride).then(|| span / stride + 1)
}

pub(crate) fn ragged(op: &str, extent: usize, window: usize, stride: usize, pad: usize) -> Error {
    Error::DimensionMismatch(format!(
        "{op}: window {window} stride {stride} pad {pad} does not tile extent {extent}"
    ))
}
