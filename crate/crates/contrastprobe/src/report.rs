//! Report files.
//!
//! | file                  | columns                                          |
//! |-----------------------|--------------------------------------------------|
//! | `accuracy.csv`        | `level,n,correct,accuracy`                       |
//! | `consistency.csv`     | `layer,c1,c2,n_images,fraction` (c1 < c2)        |
//! | `aggregate.csv`       | `layer,mean_fraction`                            |
//! | `reference_curve.csv` | `layer,level,fraction`                           |
//! | `confidence_bins.csv` | `bin,lower,upper,layer,n_pairs,mean_fraction`    |
//! | `report.json`         | run metadata plus every table above              |
//! | `failures.json`       | images that failed, with the error               |
//!
//! Cells with no contributing image are written as empty fields (`null` in
//! JSON). The whole set is staged in a sibling directory and moved into
//! place only once every file is written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use contrastprobe_core::probe::{BinKey, ConsistencyReport, LayerMatrix};
use contrastprobe_core::{GatingMode, TapPoint, WinnerMap};
use serde::Serialize;

use crate::sweep::{reference_level, Failure, Split, SweepOutcome};

pub const WINNERS_MAGIC: [u8; 4] = *b"CPWM";
pub const WINNERS_VERSION: u32 = 1;

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn accuracy_csv(outcome: &SweepOutcome) -> String {
    let mut s = String::from("level,n,correct,accuracy\n");
    for p in &outcome.analysis.accuracy.points {
        writeln!(s, "{},{},{},{}", p.level, p.n, p.correct, p.accuracy).unwrap();
    }
    s
}

pub fn consistency_csv(report: &ConsistencyReport) -> String {
    let mut s = String::from("layer,c1,c2,n_images,fraction\n");
    for m in &report.layers {
        for i in 0..m.size() {
            for j in i + 1..m.size() {
                writeln!(s, "{},{},{},{},{}", m.layer_id, report.levels[i], report.levels[j], m.n_images(i, j), opt(m.cell(i, j)))
                    .unwrap();
            }
        }
    }
    s
}

pub fn aggregate_csv(report: &ConsistencyReport) -> String {
    let mut s = String::from("layer,mean_fraction\n");
    for m in &report.layers {
        writeln!(s, "{},{}", m.layer_id, opt(m.aggregate().ok())).unwrap();
    }
    s
}

pub fn reference_csv(outcome: &SweepOutcome) -> String {
    let mut s = String::from("layer,level,fraction\n");
    for curve in &outcome.analysis.reference {
        for (level, v) in outcome.options.schedule.levels().iter().zip(&curve.values) {
            writeln!(s, "{},{},{}", curve.layer_id, level, opt(*v)).unwrap();
        }
    }
    s
}

fn off_diagonal_pairs(m: &LayerMatrix) -> u64 {
    (0..m.size()).flat_map(|i| (i + 1..m.size()).map(move |j| (i, j))).map(|(i, j)| m.n_images(i, j)).sum()
}

pub fn bins_csv(outcome: &SweepOutcome) -> String {
    let mut s = String::from("bin,lower,upper,layer,n_pairs,mean_fraction\n");
    for b in &outcome.analysis.bins {
        for m in &b.report.layers {
            writeln!(s, "{},{},{},{},{},{}", b.bin + 1, b.lower, b.upper, m.layer_id, off_diagonal_pairs(m), opt(m.aggregate().ok()))
                .unwrap();
        }
    }
    s
}

#[derive(Serialize)]
struct JsonMatrix<'a> {
    layer: &'a str,
    mean_fraction: Option<f64>,
    n_images: Vec<Vec<u64>>,
    fraction: Vec<Vec<Option<f64>>>,
}

fn json_matrix(m: &LayerMatrix) -> JsonMatrix<'_> {
    let n = m.size();
    JsonMatrix {
        layer: &m.layer_id,
        mean_fraction: m.aggregate().ok(),
        n_images: (0..n).map(|i| (0..n).map(|j| m.n_images(i, j)).collect()).collect(),
        fraction: (0..n).map(|i| (0..n).map(|j| m.cell(i, j)).collect()).collect(),
    }
}

#[derive(Serialize)]
struct JsonBin<'a> {
    bin: usize,
    lower: f32,
    upper: f32,
    empty: bool,
    layers: Vec<JsonMatrix<'a>>,
}

#[derive(Serialize)]
struct JsonAccuracy {
    level: u8,
    n: usize,
    correct: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct JsonReference<'a> {
    layer: &'a str,
    reference: u8,
    fraction: &'a [Option<f64>],
}

#[derive(Serialize)]
struct JsonFailure<'a> {
    image: &'a str,
    error: &'a str,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    levels: Vec<u8>,
    layers: &'a [String],
    mode: &'static str,
    tap: &'static str,
    bin_key: &'static str,
    split: &'static str,
    aggregation: &'static str,
    reference_level: u8,
    images: usize,
    failed: usize,
    accuracy: Vec<JsonAccuracy>,
    consistency: Vec<JsonMatrix<'a>>,
    reference_curves: Vec<JsonReference<'a>>,
    confidence_bins: Vec<JsonBin<'a>>,
}

pub fn mode_name(m: GatingMode) -> &'static str {
    match m {
        GatingMode::Gated => "gated",
        GatingMode::All => "all",
    }
}

pub fn tap_name(t: TapPoint) -> &'static str {
    match t {
        TapPoint::PreRelu => "pre-relu",
        TapPoint::PostRelu => "post-relu",
    }
}

pub fn bin_key_name(k: BinKey) -> &'static str {
    match k {
        BinKey::HighContrast => "high-contrast",
        BinKey::Min => "min",
    }
}

pub fn split_name(s: Split) -> &'static str {
    match s {
        Split::Both => "both",
        Split::Correct => "correct",
        Split::Incorrect => "incorrect",
    }
}

pub fn report_json(outcome: &SweepOutcome) -> String {
    let a = &outcome.analysis;
    let o = &outcome.options;
    let report = JsonReport {
        levels: o.schedule.levels().iter().map(|l| l.percent()).collect(),
        layers: &outcome.layer_ids,
        mode: mode_name(o.mode),
        tap: tap_name(o.tap),
        bin_key: bin_key_name(o.bin_key),
        split: split_name(o.split),
        aggregation: "per-image identical fraction, unweighted mean over images per level pair, \
                      unweighted mean over populated level pairs per layer",
        reference_level: reference_level(&o.schedule).percent(),
        images: outcome.total_images,
        failed: outcome.failures.len(),
        accuracy: a
            .accuracy
            .points
            .iter()
            .map(|p| JsonAccuracy { level: p.level.percent(), n: p.n, correct: p.correct, accuracy: p.accuracy })
            .collect(),
        consistency: a.report.layers.iter().map(json_matrix).collect(),
        reference_curves: a
            .reference
            .iter()
            .map(|c| JsonReference { layer: &c.layer_id, reference: c.reference.percent(), fraction: &c.values })
            .collect(),
        confidence_bins: a
            .bins
            .iter()
            .map(|b| JsonBin {
                bin: b.bin + 1,
                lower: b.lower,
                upper: b.upper,
                empty: b.is_empty(),
                layers: b.report.layers.iter().map(json_matrix).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    s
}

pub fn failures_json(failures: &[Failure]) -> String {
    let list: Vec<_> = failures.iter().map(|f| JsonFailure { image: &f.image_id, error: &f.error }).collect();
    let mut s = serde_json::to_string_pretty(&list).expect("failures serialize");
    s.push('\n');
    s
}

/// CPWM: magic, `u32` version, `u16` height, `u16` width, then `u16`
/// winner indices, all little-endian.
pub fn encode_winner_map(map: &WinnerMap) -> io::Result<Vec<u8>> {
    let dim = |v: usize| {
        u16::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, format!("winner map dim {v} exceeds u16")))
    };
    let mut out = Vec::with_capacity(12 + map.winners().len() * 2);
    out.extend_from_slice(&WINNERS_MAGIC);
    out.extend_from_slice(&WINNERS_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(map.height())?.to_le_bytes());
    out.extend_from_slice(&dim(map.width())?.to_le_bytes());
    for w in map.winners() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_winner_map(bytes: &[u8]) -> io::Result<WinnerMap> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if bytes.len() < 12 || bytes[..4] != WINNERS_MAGIC {
        return Err(bad("not a CPWM file"));
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != WINNERS_VERSION {
        return Err(bad("unsupported CPWM version"));
    }
    let h = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let w = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let body = &bytes[12..];
    if body.len() != h * w * 2 {
        return Err(bad("CPWM length does not match dims"));
    }
    let winners = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    WinnerMap::new(h, w, winners).map_err(|e| bad(&e.to_string()))
}

/// File-system safe rendering of an id.
fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// All report files as `(relative path, contents)`, in a fixed order.
pub fn render(outcome: &SweepOutcome, dump_winners: bool) -> io::Result<Vec<(PathBuf, Vec<u8>)>> {
    let a = &outcome.analysis;
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        ("accuracy.csv".into(), accuracy_csv(outcome).into_bytes()),
        ("failures.json".into(), failures_json(&outcome.failures).into_bytes()),
    ];
    if !outcome.options.accuracy_only {
        files.extend([
            ("consistency.csv".into(), consistency_csv(&a.report).into_bytes()),
            ("aggregate.csv".into(), aggregate_csv(&a.report).into_bytes()),
            ("reference_curve.csv".into(), reference_csv(outcome).into_bytes()),
            ("confidence_bins.csv".into(), bins_csv(outcome).into_bytes()),
        ]);
    }
    files.push(("report.json".into(), report_json(outcome).into_bytes()));
    if dump_winners {
        for r in &outcome.records {
            for (layer, map) in outcome.layer_ids.iter().zip(&r.maps) {
                let name = format!("{}__c{:03}__{}.cpwm", sanitize(&r.image_id), r.level.percent(), sanitize(layer));
                files.push((Path::new("winners").join(name), encode_winner_map(map)?));
            }
        }
    }
    Ok(files)
}

/// Writes `files` under `out_dir` so that a reader never observes a
/// partially written report set.
pub fn write_atomically(out_dir: &Path, files: &[(PathBuf, Vec<u8>)]) -> io::Result<()> {
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let name = out_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    for (rel, bytes) in files {
        let path = staging.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
    }
    if !out_dir.exists() {
        fs::rename(&staging, out_dir)?;
        return Ok(());
    }
    // Existing directory: move entries over one rename at a time.
    for entry in fs::read_dir(&staging)? {
        let entry = entry?;
        let target = out_dir.join(entry.file_name());
        if target.is_dir() {
            fs::remove_dir_all(&target)?;
        }
        fs::rename(entry.path(), target)?;
    }
    fs::remove_dir_all(&staging)
}

pub fn emit_reports(outcome: &SweepOutcome, out_dir: &Path, dump_winners: bool) -> io::Result<()> {
    write_atomically(out_dir, &render(outcome, dump_winners)?)
}
