//! Mid-gray contrast reduction and contrast-level schedules.
//!
//! A level `c` maps every value `v` in `[0, 1]` to `a·v + (1 − a)/2` with
//! `a = c/100`: deviations from 0.5 shrink by `a` while 0.5 stays fixed.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Slack allowed on the `[0, 1]` input range.
pub const DOMAIN_SLACK: f32 = 1e-6;

/// Contrast in percent, `1..=100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContrastLevel(u8);

impl ContrastLevel {
    pub const FULL: ContrastLevel = ContrastLevel(100);

    pub fn new(percent: u32) -> Result<Self> {
        if (1..=100).contains(&percent) {
            Ok(Self(percent as u8))
        } else {
            Err(Error::InvalidLevel(percent))
        }
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    /// The multiplicative factor `c / 100`.
    pub fn factor(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for ContrastLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Non-empty, strictly increasing list of contrast levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastSchedule {
    levels: Vec<ContrastLevel>,
}

impl ContrastSchedule {
    pub fn new(levels: Vec<ContrastLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSchedule("schedule is empty".into()));
        }
        if let Some(w) = levels.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "levels must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { levels })
    }

    pub fn from_percents(percents: &[u32]) -> Result<Self> {
        let levels = percents.iter().map(|&p| ContrastLevel::new(p)).collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }

    pub fn levels(&self) -> &[ContrastLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn position(&self, level: ContrastLevel) -> Option<usize> {
        self.levels.binary_search(&level).ok()
    }

    pub fn contains(&self, level: ContrastLevel) -> bool {
        self.position(level).is_some()
    }

    pub fn highest(&self) -> ContrastLevel {
        self.levels[self.levels.len() - 1]
    }
}

/// The eleven levels used by the original experiment.
pub fn default_schedule() -> ContrastSchedule {
    ContrastSchedule::from_percents(&[1, 3, 5, 7, 10, 13, 15, 30, 50, 75, 100]).expect("static schedule")
}

impl Default for ContrastSchedule {
    fn default() -> Self {
        default_schedule()
    }
}

/// Parses `1,3,5,...`.
impl FromStr for ContrastSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let percents = s
            .split(',')
            .map(|p| {
                let p = p.trim();
                p.parse::<u32>()
                    .map_err(|_| Error::InvalidSchedule(format!("`{p}` is not an integer level")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_percents(&percents)
    }
}

/// Applies contrast level `level` to an image with values in `[0, 1]`.
pub fn adjust_contrast(image: &Tensor, level: ContrastLevel) -> Result<Tensor> {
    adjust_contrast_factor(image, level.factor())
}

/// Same transform for an arbitrary factor `a` in `(0, 1]`.
///
/// Computed in `f64` and rounded once, so `a = 1` is the exact identity.
pub fn adjust_contrast_factor(image: &Tensor, a: f64) -> Result<Tensor> {
    if let Some((index, &value)) = image
        .data()
        .iter()
        .enumerate()
        .find(|(_, &v)| !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&v))
    {
        return Err(Error::Domain { index, value });
    }
    let b = (1.0 - a) / 2.0;
    Ok(image.map(|v| (a * f64::from(v) + b) as f32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn level(p: u32) -> ContrastLevel {
        ContrastLevel::new(p).unwrap()
    }

    fn px(v: f32) -> Tensor {
        Tensor::vector(vec![v]).unwrap()
    }

    #[test]
    fn direct_evaluations() {
        for c in [1, 7, 50, 100] {
            assert_eq!(adjust_contrast(&px(0.5), level(c)).unwrap().data(), &[0.5]);
        }
        assert_eq!(adjust_contrast(&px(1.0), level(50)).unwrap().data(), &[0.75]);
        assert_eq!(adjust_contrast(&px(0.0), level(1)).unwrap().data(), &[0.495]);
    }

    #[test]
    fn composition_matches_product_level() {
        let img = Tensor::from_fn(4, 4, 3, |y, x, c| ((y * 16 + x * 4 + c) % 17) as f32 / 16.0);
        let twice = adjust_contrast(&adjust_contrast(&img, level(50)).unwrap(), level(50)).unwrap();
        let once = adjust_contrast(&img, level(25)).unwrap();
        for (a, b) in twice.data().iter().zip(once.data()) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(matches!(adjust_contrast(&px(1.1), level(50)), Err(Error::Domain { .. })));
        assert!(matches!(adjust_contrast(&px(-0.01), level(50)), Err(Error::Domain { .. })));
        assert!(matches!(adjust_contrast(&px(f32::NAN), level(50)), Err(Error::Domain { .. })));
        assert!(adjust_contrast(&px(1.0 + 5e-7), level(50)).is_ok());
    }

    #[test]
    fn default_schedule_levels() {
        let s = default_schedule();
        assert_eq!(s.len(), 11);
        assert_eq!(s.levels()[0].percent(), 1);
        assert_eq!(s.highest().percent(), 100);
        assert!(s.levels().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn schedule_validation() {
        assert!(ContrastSchedule::from_percents(&[]).is_err());
        assert!(ContrastSchedule::from_percents(&[50, 100, 100]).is_err());
        assert!(ContrastSchedule::from_percents(&[100, 50]).is_err());
        assert!(ContrastSchedule::from_percents(&[0, 50]).is_err());
        assert!(ContrastSchedule::from_percents(&[50, 101]).is_err());
        assert_eq!("1, 50,100".parse::<ContrastSchedule>().unwrap().len(), 3);
        assert!("1,x".parse::<ContrastSchedule>().is_err());
    }

    fn image_strategy() -> impl Strategy<Value = Tensor> {
        (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(h, w, c)| {
            proptest::collection::vec(0.0f32..=1.0, h * w * c).prop_map(move |d| Tensor::new(h, w, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn full_contrast_is_bitwise_identity(img in image_strategy()) {
            prop_assert_eq!(adjust_contrast(&img, ContrastLevel::FULL).unwrap(), img);
        }

        #[test]
        fn output_in_unit_range_and_monotone(img in image_strategy(), c in 1u32..=100) {
            let out = adjust_contrast(&img, level(c)).unwrap();
            prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            for i in 0..img.len() {
                for j in 0..img.len() {
                    if img.data()[i] <= img.data()[j] {
                        prop_assert!(out.data()[i] <= out.data()[j]);
                    }
                }
            }
        }

        #[test]
        fn mean_shifts_toward_mid_gray(img in image_strategy(), c in 1u32..=100) {
            let a = f64::from(c) / 100.0;
            let out = adjust_contrast(&img, level(c)).unwrap();
            let mean = |t: &Tensor| t.data().iter().map(|&v| f64::from(v)).sum::<f64>() / t.len() as f64;
            prop_assert!((mean(&out) - (a * mean(&img) + (1.0 - a) / 2.0)).abs() <= 1e-6);
        }
    }
}
