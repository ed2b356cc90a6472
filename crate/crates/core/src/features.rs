//! Feature matrices and label tables on disk.
//!
//! A feature file is a headerless CSV, one row of numbers per crop. Its
//! sidecar `<stem>.index.csv` maps rows to crop ids (`row,crop_id`). Label
//! files are `crop_id,label` CSVs with class names; the class table is an
//! optional `classes.txt` with one name per line.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fsio::write_atomic;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Mismatch(String),
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

/// `features.csv` → `features.index.csv`.
pub fn sidecar_path(features: &Path) -> PathBuf {
    let stem = features.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    features.with_file_name(format!("{stem}.index.csv"))
}

/// Crop ids with their feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable<T> {
    pub crop_ids: Vec<String>,
    pub features: Matrix<T>,
}

impl<T: Scalar> FeatureTable<T> {
    pub fn new(crop_ids: Vec<String>, features: Matrix<T>) -> Result<Self, FeatureError> {
        if crop_ids.len() != features.rows() {
            return Err(FeatureError::Mismatch(format!("{} ids for {} rows", crop_ids.len(), features.rows())));
        }
        Ok(Self { crop_ids, features })
    }

    pub fn len(&self) -> usize {
        self.crop_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crop_ids.is_empty()
    }

    pub fn position_map(&self) -> HashMap<&str, usize> {
        self.crop_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
    }

    /// Reads a feature file and its sidecar index.
    pub fn read(path: &Path) -> Result<Self, FeatureError> {
        let features = read_matrix(path)?;
        let side = sidecar_path(path);
        let mut rdr = csv::Reader::from_path(&side).map_err(|e| FeatureError::Csv { path: show(&side), source: e })?;
        let mut ids = vec![None; features.rows()];
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| FeatureError::Csv { path: show(&side), source: e })?;
            let parse_err = |m: String| FeatureError::Parse { path: show(&side), line: n + 2, message: m };
            if rec.len() != 2 {
                return Err(parse_err(format!("expected row,crop_id, got {} fields", rec.len())));
            }
            let row: usize = rec[0].trim().parse().map_err(|e| parse_err(format!("bad row number: {e}")))?;
            let slot = ids.get_mut(row).ok_or_else(|| parse_err(format!("row {row} beyond {} feature rows", features.rows())))?;
            if slot.is_some() {
                return Err(parse_err(format!("row {row} listed twice")));
            }
            *slot = Some(rec[1].to_owned());
        }
        let crop_ids = ids
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| FeatureError::Mismatch(format!("{}: no crop id for row {i}", show(&side)))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(crop_ids, features)
    }

    /// Writes the feature file and its sidecar, each atomically.
    pub fn write(&self, path: &Path) -> Result<(), FeatureError> {
        write_matrix(path, &self.features)?;
        let mut idx = String::from("row,crop_id\n");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for (i, c) in self.crop_ids.iter().enumerate() {
            w.write_record([i.to_string().as_str(), c.as_str()])
                .map_err(|e| FeatureError::Csv { path: show(path), source: e })?;
        }
        idx.push_str(&String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 ids"));
        let side = sidecar_path(path);
        write_atomic(&side, idx.as_bytes()).map_err(|e| FeatureError::Io { path: show(&side), source: e })
    }
}

/// Headerless numeric CSV; every row must have the same width.
pub fn read_matrix<T: Scalar>(path: &Path) -> Result<Matrix<T>, FeatureError> {
    let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Io { path: show(path), source: e })?;
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |m: String| FeatureError::Parse { path: show(path), line: n + 1, message: m };
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| parse_err(format!("not a number: {:?}", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {v}")));
            }
            data.push(T::of(v));
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => return Err(parse_err(format!("{width} values, expected {c}"))),
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data).map_err(|e| FeatureError::Mismatch(e.to_string()))
}

pub fn write_matrix<T: Scalar>(path: &Path, m: &Matrix<T>) -> Result<(), FeatureError> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 12);
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|e| FeatureError::Io { path: show(path), source: e })
}

/// `crop_id,label` rows, header required.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>, FeatureError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| FeatureError::Csv { path: show(path), source: e })?;
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FeatureError::Csv { path: show(path), source: e })?;
        if rec.len() < 2 {
            return Err(FeatureError::Parse { path: show(path), line: n + 2, message: "expected crop_id,label".into() });
        }
        out.push((rec[0].to_owned(), rec[1].trim().to_owned()));
    }
    Ok(out)
}

pub fn write_labels(path: &Path, rows: &[(String, String)]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["crop_id", "label"]).map_err(|e| FeatureError::Csv { path: show(path), source: e })?;
    for (c, l) in rows {
        w.write_record([c, l]).map_err(|e| FeatureError::Csv { path: show(path), source: e })?;
    }
    write_atomic(path, &w.into_inner().expect("in-memory writer")).map_err(|e| FeatureError::Io { path: show(path), source: e })
}

pub fn read_classes(path: &Path) -> Result<Vec<String>, FeatureError> {
    let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Io { path: show(path), source: e })?;
    let classes: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect();
    if classes.iter().collect::<BTreeSet<_>>().len() != classes.len() {
        return Err(FeatureError::Mismatch(format!("{}: duplicate class name", show(path))));
    }
    Ok(classes)
}

/// Sorted distinct label names.
pub fn classes_from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    labels.into_iter().collect::<BTreeSet<_>>().into_iter().map(str::to_owned).collect()
}

/// Maps names to class indices. Unknown names are an error naming the crop.
pub fn encode_labels(rows: &[(String, String)], classes: &[String]) -> Result<HashMap<String, usize>, FeatureError> {
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    rows.iter()
        .map(|(crop, name)| {
            index
                .get(name.as_str())
                .map(|&i| (crop.clone(), i))
                .ok_or_else(|| FeatureError::Mismatch(format!("crop {crop:?} has unknown class {name:?}")))
        })
        .collect()
}
