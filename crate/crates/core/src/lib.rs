//! Deterministic CNN forward inference and contrast-consistency metrics.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs: tensors are channels-last `f32` buffers, every
//! reduction is accumulated in `f64` in a fixed order, and argmax ties always
//! resolve to the lowest index, so results are bitwise reproducible across
//! runs and thread counts.
//!
//! * [`tensor`] / [`ops`]: dense tensor type and layer kernels.
//! * [`graph`]: DAG models with activation taps at convolution nodes.
//! * [`preprocess`]: resize / crop / normalize into a model's input shape.
//! * [`contrast`]: the mid-gray contrast transform and level schedules.
//! * [`probe`]: winner-kernel maps and the consistency metrics built on them.
#![no_std]
#![forbid(unsafe_code)]
extern crate alloc;

pub mod contrast;
pub mod error;
pub mod graph;
pub mod ops;
pub mod preprocess;
pub mod probe;
pub mod tensor;

pub use contrast::{adjust_contrast, ContrastLevel, ContrastSchedule};
pub use error::{Error, Result};
pub use graph::{LayerKind, LayerNode, ModelGraph, Prediction, TapPoint};
pub use preprocess::{CropPolicy, Preprocess};
pub use probe::{GatingMode, SweepRecord, WinnerMap};
pub use tensor::{ConvWeights, Tensor};
