//! Pairwise identical-winner statistics over a contrast schedule.
//!
//! Each image contributes one identical fraction per level pair; cells are
//! the unweighted mean over contributing images. Cells are stored as
//! `(sum, count)` so partial reports over disjoint image sets merge exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{gate_pair, identical_fraction, GatingMode, SweepRecord};
use crate::contrast::{ContrastLevel, ContrastSchedule};
use crate::error::{Error, Result};

/// Symmetric level × level matrix for one probed layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrix {
    pub layer_id: String,
    n: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl LayerMatrix {
    fn empty(layer_id: String, n: usize) -> Self {
        Self { layer_id, n, sums: vec![0.0; n * n], counts: vec![0; n * n] }
    }

    fn add(&mut self, i: usize, j: usize, fraction: f64) {
        self.sums[i * self.n + j] += fraction;
        self.counts[i * self.n + j] += 1;
        if i != j {
            self.sums[j * self.n + i] += fraction;
            self.counts[j * self.n + i] += 1;
        }
    }

    /// Number of schedule levels.
    pub fn size(&self) -> usize {
        self.n
    }

    /// Mean identical fraction, or `None` when no image contributed.
    pub fn cell(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.n + j;
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    pub fn n_images(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Mean of the populated off-diagonal cells, each unordered pair once.
    pub fn aggregate(&self) -> Result<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..self.n {
            for j in i + 1..self.n {
                if let Some(v) = self.cell(i, j) {
                    sum += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::NoValidCells(self.layer_id.clone()));
        }
        Ok(sum / count as f64)
    }

    pub fn merge(&mut self, other: &LayerMatrix) -> Result<()> {
        if self.n != other.n || self.layer_id != other.layer_id {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge matrices for `{}` ({}) and `{}` ({})",
                self.layer_id, self.n, other.layer_id, other.n
            )));
        }
        for (s, o) in self.sums.iter_mut().zip(&other.sums) {
            *s += o;
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        Ok(())
    }
}

/// Consistency matrices for every probed layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub levels: Vec<ContrastLevel>,
    pub mode: GatingMode,
    pub layers: Vec<LayerMatrix>,
}

impl ConsistencyReport {
    pub fn layer_ids(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|m| m.layer_id.as_str())
    }

    /// Per-layer mean over all populated level pairs.
    pub fn aggregate_table(&self) -> Vec<Result<f64>> {
        self.layers.iter().map(LayerMatrix::aggregate).collect()
    }

    /// Row `reference` of every layer matrix.
    pub fn reference_curve(&self, reference: ContrastLevel) -> Result<Vec<ReferenceCurve>> {
        let r = self
            .levels
            .iter()
            .position(|&l| l == reference)
            .ok_or(Error::ReferenceNotInSchedule(reference.percent()))?;
        Ok(self
            .layers
            .iter()
            .map(|m| ReferenceCurve {
                layer_id: m.layer_id.clone(),
                reference,
                values: (0..m.n).map(|j| m.cell(r, j)).collect(),
            })
            .collect())
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(LayerMatrix::is_empty)
    }

    pub fn merge(&mut self, other: &ConsistencyReport) -> Result<()> {
        if self.levels != other.levels || self.mode != other.mode || self.layers.len() != other.layers.len() {
            return Err(Error::DimensionMismatch("reports cover different levels, modes or layers".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.merge(b)?;
        }
        Ok(())
    }
}

/// Identical fraction against one reference level, per schedule level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurve {
    pub layer_id: String,
    pub reference: ContrastLevel,
    pub values: Vec<Option<f64>>,
}

type ImageRow<'a> = Vec<Option<&'a SweepRecord>>;

/// Groups records per image (first-appearance order), indexed by level.
fn group<'a>(records: &'a [SweepRecord], schedule: &ContrastSchedule, n_layers: usize) -> Result<Vec<ImageRow<'a>>> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rows: Vec<ImageRow<'a>> = Vec::new();
    for r in records {
        let pos = schedule.position(r.level).ok_or_else(|| {
            Error::InvalidSchedule(format!("record `{}` has level {} outside the schedule", r.image_id, r.level))
        })?;
        if r.maps.len() != n_layers {
            return Err(Error::DimensionMismatch(format!(
                "record `{}` at level {} has {} maps, expected {n_layers}",
                r.image_id,
                r.level,
                r.maps.len()
            )));
        }
        let row = *index.entry(r.image_id.as_str()).or_insert_with(|| {
            rows.push(vec![None; schedule.len()]);
            rows.len() - 1
        });
        let slot = &mut rows[row][pos];
        if slot.is_some() {
            return Err(Error::DuplicateRecord { image_id: r.image_id.clone(), level: r.level.percent() });
        }
        *slot = Some(r);
    }
    Ok(rows)
}

/// Full report with an extra pair filter.
///
/// `keep(lower, higher)` receives the two members of a pair ordered by
/// contrast level (both are the same record on the diagonal) and is applied
/// after gating.
pub fn consistency_report(
    records: &[SweepRecord],
    layer_ids: &[String],
    schedule: &ContrastSchedule,
    mode: GatingMode,
    keep: &dyn Fn(&SweepRecord, &SweepRecord) -> bool,
) -> Result<ConsistencyReport> {
    let rows = group(records, schedule, layer_ids.len())?;
    let n = schedule.len();
    let mut layers: Vec<LayerMatrix> = layer_ids.iter().map(|id| LayerMatrix::empty(id.clone(), n)).collect();
    for row in &rows {
        for (i, lo) in row.iter().enumerate() {
            let Some(lo) = *lo else { continue };
            for (j, hi) in row.iter().enumerate().skip(i) {
                let Some(hi) = *hi else { continue };
                if !gate_pair(lo, hi, mode) || !keep(lo, hi) {
                    continue;
                }
                for (l, m) in layers.iter_mut().enumerate() {
                    let f = if i == j { 1.0 } else { identical_fraction(&lo.maps[l], &hi.maps[l])? };
                    m.add(i, j, f);
                }
            }
        }
    }
    Ok(ConsistencyReport { levels: schedule.levels().to_vec(), mode, layers })
}

/// Matrix for the single layer at position `layer` of each record's maps.
pub fn consistency_matrix(
    records: &[SweepRecord],
    layer: usize,
    layer_id: &str,
    schedule: &ContrastSchedule,
    mode: GatingMode,
) -> Result<LayerMatrix> {
    let n_layers = records.first().map_or(layer + 1, |r| r.maps.len());
    if layer >= n_layers {
        return Err(Error::DimensionMismatch(format!("layer index {layer} out of {n_layers}")));
    }
    let mut ids: Vec<String> = (0..n_layers).map(|k| format!("#{k}")).collect();
    ids[layer] = layer_id.into();
    let mut report = consistency_report(records, &ids, schedule, mode, &|_, _| true)?;
    Ok(report.layers.swap_remove(layer))
}

/// Lower edges of the five confidence bins; the last bin is closed at 1.
pub const CONFIDENCE_EDGES: [f32; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Bin index in `0..5` of a confidence in `(0, 1]`.
pub fn confidence_bin(confidence: f32) -> usize {
    CONFIDENCE_EDGES[1..5].iter().take_while(|&&edge| confidence >= edge).count()
}

/// Which confidence a pair is binned by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinKey {
    /// Confidence of the higher-contrast member.
    #[default]
    HighContrast,
    /// The smaller of the two confidences.
    Min,
}

impl BinKey {
    fn confidence(self, lower: &SweepRecord, higher: &SweepRecord) -> f32 {
        match self {
            BinKey::HighContrast => higher.prediction.confidence,
            BinKey::Min => lower.prediction.confidence.min(higher.prediction.confidence),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedReport {
    pub bin: usize,
    pub lower: f32,
    pub upper: f32,
    pub report: ConsistencyReport,
}

impl BinnedReport {
    /// No pair fell into this bin.
    pub fn is_empty(&self) -> bool {
        self.report.is_empty()
    }
}

/// One report per confidence bin `[0,.2) [.2,.4) [.4,.6) [.6,.8) [.8,1]`.
pub fn confidence_binned(
    records: &[SweepRecord],
    layer_ids: &[String],
    schedule: &ContrastSchedule,
    mode: GatingMode,
    key: BinKey,
    keep: &dyn Fn(&SweepRecord, &SweepRecord) -> bool,
) -> Result<Vec<BinnedReport>> {
    (0..5)
        .map(|bin| {
            let in_bin = |lo: &SweepRecord, hi: &SweepRecord| confidence_bin(key.confidence(lo, hi)) == bin && keep(lo, hi);
            Ok(BinnedReport {
                bin,
                lower: CONFIDENCE_EDGES[bin],
                upper: CONFIDENCE_EDGES[bin + 1],
                report: consistency_report(records, layer_ids, schedule, mode, &in_bin)?,
            })
        })
        .collect()
}

pub fn reference_curve(
    records: &[SweepRecord],
    layer_ids: &[String],
    reference: ContrastLevel,
    schedule: &ContrastSchedule,
    mode: GatingMode,
) -> Result<Vec<ReferenceCurve>> {
    if !schedule.contains(reference) {
        return Err(Error::ReferenceNotInSchedule(reference.percent()));
    }
    consistency_report(records, layer_ids, schedule, mode, &|_, _| true)?.reference_curve(reference)
}
