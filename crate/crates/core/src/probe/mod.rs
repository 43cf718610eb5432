//! Winner-kernel maps and the per-image records they are compared across.

mod consistency;

pub use consistency::{
    confidence_bin, confidence_binned, consistency_matrix, consistency_report, reference_curve, BinKey,
    BinnedReport, ConsistencyReport, LayerMatrix, ReferenceCurve, CONFIDENCE_EDGES,
};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::contrast::ContrastLevel;
use crate::error::{Error, Result};
use crate::graph::Prediction;
use crate::tensor::Tensor;

/// Index of the most activated kernel at every spatial position of a layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WinnerMap {
    height: usize,
    width: usize,
    winners: Vec<u16>,
}

impl WinnerMap {
    pub fn new(height: usize, width: usize, winners: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 || winners.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "winner map {height}x{width} with {} entries",
                winners.len()
            )));
        }
        Ok(Self { height, width, winners })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major kernel indices.
    pub fn winners(&self) -> &[u16] {
        &self.winners
    }

    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.winners[y * self.width + x]
    }
}

/// Per-position argmax over channels; ties go to the lowest channel.
///
/// # Panics
/// If `features` has more than 65536 channels.
pub fn winner_map(features: &Tensor) -> WinnerMap {
    let c = features.channels();
    assert!(c <= usize::from(u16::MAX) + 1, "too many kernels for a u16 winner index");
    let winners = features
        .data()
        .chunks_exact(c)
        .map(|px| {
            let mut best = 0;
            for (k, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = k;
                }
            }
            best as u16
        })
        .collect();
    WinnerMap { height: features.height(), width: features.width(), winners }
}

/// Share of positions whose winner agrees between `a` and `b`.
pub fn identical_fraction(a: &WinnerMap, b: &WinnerMap) -> Result<f64> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::DimensionMismatch(format!(
            "winner maps {}x{} and {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let same = a.winners.iter().zip(&b.winners).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.winners.len() as f64)
}

/// Whether contrast pairs must agree on the predicted class to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GatingMode {
    /// Only pairs with identical top-1 class contribute.
    #[default]
    Gated,
    /// Every pair contributes.
    All,
}

/// One image rendered at one contrast level.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub image_id: String,
    pub level: ContrastLevel,
    pub prediction: Prediction,
    /// One map per probed layer, in probe order.
    pub maps: Vec<WinnerMap>,
}

pub fn gate_pair(r1: &SweepRecord, r2: &SweepRecord, mode: GatingMode) -> bool {
    debug_assert_eq!(r1.image_id, r2.image_id);
    match mode {
        GatingMode::Gated => r1.prediction.class_id == r2.prediction.class_id,
        GatingMode::All => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_argmax(t: &Tensor) -> Vec<u16> {
        let mut out = Vec::new();
        for y in 0..t.height() {
            for x in 0..t.width() {
                let mut best = 0usize;
                let mut best_v = f32::NEG_INFINITY;
                for c in 0..t.channels() {
                    if t.get(y, x, c) > best_v {
                        best_v = t.get(y, x, c);
                        best = c;
                    }
                }
                out.push(best as u16);
            }
        }
        out
    }

    #[test]
    fn single_channel_is_all_zero() {
        let t = Tensor::from_fn(3, 3, 1, |y, x, _| (y * 3 + x) as f32);
        assert!(winner_map(&t).winners().iter().all(|&w| w == 0));
    }

    #[test]
    fn hand_argmax_and_ties() {
        let t = Tensor::new(1, 1, 2, vec![0.2, 0.9]).unwrap();
        assert_eq!(winner_map(&t).winners(), &[1]);
        let t = Tensor::filled(2, 2, 4, 0.3);
        assert!(winner_map(&t).winners().iter().all(|&w| w == 0));
    }

    #[test]
    fn matches_naive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::from_fn(8, 8, 16, |_, _, _| rng.random_range(-1.0f32..1.0));
        let m = winner_map(&t);
        assert_eq!((m.height(), m.width()), (8, 8));
        assert_eq!(m.winners(), naive_argmax(&t).as_slice());
    }

    #[test]
    fn fractions() {
        let a = WinnerMap::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        let b = WinnerMap::new(2, 2, vec![0, 1, 2, 0]).unwrap();
        let c = WinnerMap::new(2, 2, vec![1, 0, 3, 2]).unwrap();
        assert_eq!(identical_fraction(&a, &a).unwrap(), 1.0);
        assert_eq!(identical_fraction(&a, &b).unwrap(), 0.75);
        assert_eq!(identical_fraction(&a, &c).unwrap(), 0.0);
        let d = WinnerMap::new(1, 4, vec![0, 1, 2, 3]).unwrap();
        assert!(identical_fraction(&a, &d).is_err());
    }

    fn record(id: &str, level: u32, class_id: usize) -> SweepRecord {
        SweepRecord {
            image_id: id.into(),
            level: ContrastLevel::new(level).unwrap(),
            prediction: Prediction { class_id, confidence: 0.5 },
            maps: Vec::new(),
        }
    }

    #[test]
    fn gating() {
        let (a, b, c) = (record("x", 50, 3), record("x", 100, 3), record("x", 100, 4));
        assert!(gate_pair(&a, &b, GatingMode::Gated));
        assert!(!gate_pair(&a, &c, GatingMode::Gated));
        assert!(gate_pair(&a, &c, GatingMode::All));
    }

    fn map_pair() -> impl Strategy<Value = (WinnerMap, WinnerMap)> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(0u16..3, h * w),
                proptest::collection::vec(0u16..3, h * w),
            )
                .prop_map(move |(a, b)| (WinnerMap::new(h, w, a).unwrap(), WinnerMap::new(h, w, b).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn fraction_is_a_bounded_symmetric_similarity((a, b) in map_pair()) {
            let ab = identical_fraction(&a, &b).unwrap();
            prop_assert_eq!(ab, identical_fraction(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(identical_fraction(&a, &a).unwrap(), 1.0);
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn argmax_invariant_under_positive_scaling(
            data in proptest::collection::vec(-10.0f32..10.0, 4 * 4 * 6),
            a in prop_oneof![Just(0.01f32), Just(0.5f32), Just(2.0f32), Just(100.0f32)],
        ) {
            let t = Tensor::new(4, 4, 6, data).unwrap();
            let scaled = t.map(|v| v * a);
            let (m0, m1) = (winner_map(&t), winner_map(&scaled));
            for y in 0..4 {
                for x in 0..4 {
                    if t.pixel(y, x).iter().any(|&v| v > 0.0) {
                        prop_assert_eq!(m0.get(y, x), m1.get(y, x));
                    }
                }
            }
        }
    }
}
