//! Labelled image corpora described by a `filename,class_id` CSV.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing image file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("bad label on row {row}: {detail}")]
    BadLabel { row: usize, detail: String },
    #[error("duplicate path `{0}` in label file")]
    DuplicatePath(String),
    #[error("label file {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("label file lists no images")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    /// File name as written in the CSV; used as the image id.
    pub path: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
    pub class_count: usize,
}

impl DatasetIndex {
    pub fn file(&self, entry: &DatasetEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads `labels_csv` (rows `filename,class_id`, optional header) and checks
/// that every file exists under `dir`. Entry order is row order.
///
/// With `class_count` set, labels must lie below it; otherwise it is
/// inferred as `max label + 1`. Images are decoded later, per image, so
/// undecodable files surface in the sweep's failure manifest.
pub fn load_dataset(dir: &Path, labels_csv: &Path, class_count: Option<usize>) -> Result<DatasetIndex, DatasetError> {
    let csv_err = |source| DatasetError::Csv { path: labels_csv.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(labels_csv)
        .map_err(csv_err)?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = row + 1;
        if rec.len() != 2 {
            return Err(DatasetError::BadLabel { row, detail: format!("expected 2 fields, got {}", rec.len()) });
        }
        let (name, label) = (&rec[0], &rec[1]);
        if row == 1 && name == "filename" && label == "class_id" {
            continue;
        }
        let label: usize = label
            .parse()
            .map_err(|_| DatasetError::BadLabel { row, detail: format!("`{label}` is not a class id") })?;
        if let Some(n) = class_count {
            if label >= n {
                return Err(DatasetError::BadLabel { row, detail: format!("class {label} outside 0..{n}") });
            }
        }
        if !seen.insert(name.to_string()) {
            return Err(DatasetError::DuplicatePath(name.to_string()));
        }
        let file = dir.join(name);
        if !file.is_file() {
            return Err(DatasetError::MissingFile(file));
        }
        entries.push(DatasetEntry { path: name.to_string(), label });
    }
    if entries.is_empty() {
        return Err(DatasetError::Empty);
    }
    let class_count = class_count.unwrap_or_else(|| entries.iter().map(|e| e.label).max().unwrap_or(0) + 1);
    Ok(DatasetIndex { root: dir.to_path_buf(), entries, class_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn corpus(rows: &str, files: &[&str]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in files {
            fs::write(dir.path().join(f), b"P6\n1 1\n255\n\0\0\0").unwrap();
        }
        fs::write(dir.path().join("labels.csv"), rows).unwrap();
        dir
    }

    #[test]
    fn row_order_is_kept() {
        let dir = corpus("c.ppm,2\na.ppm,0\nb.ppm,1\n", &["a.ppm", "b.ppm", "c.ppm"]);
        let ds = load_dataset(dir.path(), &dir.path().join("labels.csv"), None).unwrap();
        let names: Vec<_> = ds.entries.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(names, ["c.ppm", "a.ppm", "b.ppm"]);
        assert_eq!(ds.class_count, 3);
    }

    #[test]
    fn header_row_is_optional() {
        let dir = corpus("filename,class_id\na.ppm,0\n", &["a.ppm"]);
        assert_eq!(load_dataset(dir.path(), &dir.path().join("labels.csv"), Some(4)).unwrap().len(), 1);
    }

    #[test]
    fn errors() {
        let dir = corpus("a.ppm,0\nmissing.ppm,1\n", &["a.ppm"]);
        match load_dataset(dir.path(), &dir.path().join("labels.csv"), None) {
            Err(DatasetError::MissingFile(p)) => assert!(p.ends_with("missing.ppm")),
            other => panic!("{other:?}"),
        }
        let dir = corpus("a.ppm,0\na.ppm,1\n", &["a.ppm"]);
        assert!(matches!(
            load_dataset(dir.path(), &dir.path().join("labels.csv"), None),
            Err(DatasetError::DuplicatePath(_))
        ));
        let dir = corpus("a.ppm,x\n", &["a.ppm"]);
        assert!(matches!(
            load_dataset(dir.path(), &dir.path().join("labels.csv"), None),
            Err(DatasetError::BadLabel { row: 1, .. })
        ));
        let dir = corpus("a.ppm,5\n", &["a.ppm"]);
        assert!(matches!(
            load_dataset(dir.path(), &dir.path().join("labels.csv"), Some(2)),
            Err(DatasetError::BadLabel { .. })
        ));
        let dir = corpus("", &[]);
        assert!(matches!(load_dataset(dir.path(), &dir.path().join("labels.csv"), None), Err(DatasetError::Empty)));
    }
}
