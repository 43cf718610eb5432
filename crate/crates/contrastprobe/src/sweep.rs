//! End-to-end contrast sweep: every image at every level, then all metrics.

use std::collections::HashMap;

use contrastprobe_core::probe::{
    confidence_binned, consistency_report, winner_map, BinKey, BinnedReport, ConsistencyReport, ReferenceCurve,
};
use contrastprobe_core::{adjust_contrast, ContrastLevel, ContrastSchedule, GatingMode, ModelGraph, SweepRecord, TapPoint};
use rayon::prelude::*;

use crate::dataset::{DatasetEntry, DatasetIndex};
use crate::image::decode_image;

/// Runs abort when strictly more than this share of images fail.
pub const FAILURE_BUDGET: f64 = 0.10;

/// Which images contribute to consistency metrics, by correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Both,
    /// Both members of a pair predict the label.
    Correct,
    /// Neither member of a pair predicts the label.
    Incorrect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub schedule: ContrastSchedule,
    pub mode: GatingMode,
    pub tap: TapPoint,
    pub bin_key: BinKey,
    pub split: Split,
    pub threads: usize,
    /// Skip activation taps and winner maps (accuracy only).
    pub accuracy_only: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            schedule: ContrastSchedule::default(),
            mode: GatingMode::Gated,
            tap: TapPoint::PreRelu,
            bin_key: BinKey::HighContrast,
            split: Split::Both,
            threads: 1,
            accuracy_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPoint {
    pub level: ContrastLevel,
    pub n: usize,
    pub correct: usize,
    /// `correct / n`, or 0 when no image was evaluated.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub points: Vec<AccuracyPoint>,
}

/// Everything a sweep produces.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub options: SweepOptions,
    pub layer_ids: Vec<String>,
    pub total_images: usize,
    pub records: Vec<SweepRecord>,
    pub failures: Vec<Failure>,
    pub analysis: Analysis,
}

/// Metrics derived from a set of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: ConsistencyReport,
    pub bins: Vec<BinnedReport>,
    pub reference: Vec<ReferenceCurve>,
    pub accuracy: AccuracyCurve,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("{} of {total} images failed, over the {:.0}% budget", failures.len(), FAILURE_BUDGET * 100.0)]
    TooManyFailures { total: usize, failures: Vec<Failure> },
    #[error("label {label} of `{image_id}` is outside the model's {class_count} classes")]
    LabelOutOfRange { image_id: String, label: usize, class_count: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Core(#[from] contrastprobe_core::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Probe list used by a sweep: the model's own, or the default first five
/// convolutions when the file lists none.
pub fn sweep_model(model: &ModelGraph, accuracy_only: bool) -> Result<ModelGraph, contrastprobe_core::Error> {
    if accuracy_only {
        model.clone().with_probes(Vec::new())
    } else if model.probe_ids().is_empty() {
        model.clone().with_probes(model.default_probe_ids())
    } else {
        Ok(model.clone())
    }
}

fn process_image(
    model: &ModelGraph,
    dataset: &DatasetIndex,
    entry: &DatasetEntry,
    options: &SweepOptions,
) -> Result<Vec<SweepRecord>, String> {
    let image = decode_image(dataset.file(entry)).map_err(|e| format!("decode: {e}"))?;
    options
        .schedule
        .levels()
        .iter()
        .map(|&level| {
            let stimulus = adjust_contrast(&image, level).map_err(|e| e.to_string())?;
            let out = model.classify(&stimulus, options.tap).map_err(|e| e.to_string())?;
            Ok(SweepRecord {
                image_id: entry.path.clone(),
                level,
                prediction: out.prediction,
                maps: out.taps.iter().map(winner_map).collect(),
            })
        })
        .collect()
}

pub fn run_sweep(model: &ModelGraph, dataset: &DatasetIndex, options: &SweepOptions) -> Result<SweepOutcome, SweepError> {
    if dataset.is_empty() {
        return Err(SweepError::EmptyDataset);
    }
    if let Some(e) = dataset.entries.iter().find(|e| e.label >= model.class_count()) {
        return Err(SweepError::LabelOutOfRange {
            image_id: e.path.clone(),
            label: e.label,
            class_count: model.class_count(),
        });
    }
    let model = sweep_model(model, options.accuracy_only)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.max(1))
        .build()
        .map_err(|e| SweepError::ThreadPool(e.to_string()))?;
    let per_image: Vec<Result<Vec<SweepRecord>, String>> = pool.install(|| {
        dataset.entries.par_iter().map(|entry| process_image(&model, dataset, entry, options)).collect()
    });

    let mut records = Vec::with_capacity(dataset.len() * options.schedule.len());
    let mut failures = Vec::new();
    for (entry, result) in dataset.entries.iter().zip(per_image) {
        match result {
            Ok(recs) => records.extend(recs),
            Err(error) => failures.push(Failure { image_id: entry.path.clone(), error }),
        }
    }
    let total = dataset.len();
    if failures.len() as f64 > FAILURE_BUDGET * total as f64 {
        return Err(SweepError::TooManyFailures { total, failures });
    }
    let layer_ids = model.probe_ids().to_vec();
    let analysis = analyze(&records, &layer_ids, dataset, options)?;
    Ok(SweepOutcome { options: options.clone(), layer_ids, total_images: total, records, failures, analysis })
}

/// Reference level for pairwise curves: 100 when scheduled, else the
/// highest level.
pub fn reference_level(schedule: &ContrastSchedule) -> ContrastLevel {
    if schedule.contains(ContrastLevel::FULL) {
        ContrastLevel::FULL
    } else {
        schedule.highest()
    }
}

/// Computes every metric from `records`, aggregating in record order.
pub fn analyze(
    records: &[SweepRecord],
    layer_ids: &[String],
    dataset: &DatasetIndex,
    options: &SweepOptions,
) -> Result<Analysis, contrastprobe_core::Error> {
    let labels: HashMap<&str, usize> = dataset.entries.iter().map(|e| (e.path.as_str(), e.label)).collect();
    let correct = |r: &SweepRecord| labels.get(r.image_id.as_str()) == Some(&r.prediction.class_id);
    let keep = |lo: &SweepRecord, hi: &SweepRecord| match options.split {
        Split::Both => true,
        Split::Correct => correct(lo) && correct(hi),
        Split::Incorrect => !correct(lo) && !correct(hi),
    };
    let schedule = &options.schedule;
    let report = consistency_report(records, layer_ids, schedule, options.mode, &keep)?;
    let bins = confidence_binned(records, layer_ids, schedule, options.mode, options.bin_key, &keep)?;
    let reference = report.reference_curve(reference_level(schedule))?;
    Ok(Analysis { report, bins, reference, accuracy: accuracy_by_contrast(records, dataset, schedule) })
}

/// Top-1 accuracy per level against the dataset labels.
pub fn accuracy_by_contrast(records: &[SweepRecord], dataset: &DatasetIndex, schedule: &ContrastSchedule) -> AccuracyCurve {
    let labels: HashMap<&str, usize> = dataset.entries.iter().map(|e| (e.path.as_str(), e.label)).collect();
    let points = schedule
        .levels()
        .iter()
        .map(|&level| {
            let at_level = records.iter().filter(|r| r.level == level);
            let (n, correct) = at_level.fold((0, 0), |(n, c), r| {
                let hit = labels.get(r.image_id.as_str()) == Some(&r.prediction.class_id);
                (n + 1, c + usize::from(hit))
            });
            let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
            AccuracyPoint { level, n, correct, accuracy }
        })
        .collect();
    AccuracyCurve { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use contrastprobe_core::Prediction;
    use std::path::PathBuf;

    fn dataset(labels: &[usize]) -> DatasetIndex {
        DatasetIndex {
            root: PathBuf::new(),
            entries: labels.iter().enumerate().map(|(i, &label)| DatasetEntry { path: format!("{i}"), label }).collect(),
            class_count: 4,
        }
    }

    fn rec(i: usize, level: u32, class_id: usize) -> SweepRecord {
        SweepRecord {
            image_id: format!("{i}"),
            level: ContrastLevel::new(level).unwrap(),
            prediction: Prediction { class_id, confidence: 0.9 },
            maps: Vec::new(),
        }
    }

    #[test]
    fn constant_classifier_scores_class_prior() {
        let ds = dataset(&[0, 1, 2, 3]);
        let schedule = ContrastSchedule::from_percents(&[10, 100]).unwrap();
        let recs: Vec<_> = (0..4).flat_map(|i| [rec(i, 10, 0), rec(i, 100, 0)]).collect();
        let curve = accuracy_by_contrast(&recs, &ds, &schedule);
        assert!(curve.points.iter().all(|p| p.n == 4 && p.correct == 1 && p.accuracy == 0.25));
    }

    #[test]
    fn three_of_four_correct() {
        let ds = dataset(&[0, 1, 2, 3]);
        let schedule = ContrastSchedule::from_percents(&[50, 100]).unwrap();
        let mut recs: Vec<_> = (0..4).flat_map(|i| [rec(i, 50, i), rec(i, 100, i)]).collect();
        recs[6].prediction.class_id = 0; // image 3 at level 50
        let curve = accuracy_by_contrast(&recs, &ds, &schedule);
        assert_eq!(curve.points[0].accuracy, 0.75);
        assert_eq!(curve.points[1].accuracy, 1.0);
    }

    #[test]
    fn reference_prefers_full_contrast() {
        assert_eq!(reference_level(&ContrastSchedule::default()), ContrastLevel::FULL);
        let s = ContrastSchedule::from_percents(&[5, 50]).unwrap();
        assert_eq!(reference_level(&s).percent(), 50);
    }
}
