//! Radiomic data model: per-subject feature maps, the dataset container,
//! delimited on-disk formats and feature normalization.
//!
//! A feature map is an `N_roi x F` matrix of quantitative features, one row
//! per region of interest. Maps carry no spatial or sequential order; row
//! order is only required to be consistent across the subjects of a dataset.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Standard deviations at or below this are treated as zero variance.
const ZERO_SD: f64 = 1e-150;

/// One subject's radiomic feature matrix (rows = ROIs, columns = features).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    subject_id: String,
    values: Array2<f64>,
    roi_ids: Vec<String>,
    feature_names: Vec<String>,
}

impl FeatureMap {
    pub fn new(
        subject_id: impl Into<String>,
        values: Array2<f64>,
        roi_ids: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let (n_roi, n_feat) = values.dim();
        if n_roi < 2 || n_feat < 1 {
            return Err(Error::InvalidArgument(format!(
                "subject {subject_id}: need at least 2 rois and 1 feature, got {n_roi}x{n_feat}"
            )));
        }
        if roi_ids.len() != n_roi || feature_names.len() != n_feat {
            return Err(Error::InvalidArgument(format!(
                "subject {subject_id}: label counts ({}, {}) do not match matrix shape {n_roi}x{n_feat}",
                roi_ids.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for roi in &roi_ids {
            if !seen.insert(roi.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "subject {subject_id}: duplicate roi id {roi}"
                )));
            }
        }
        for ((r, c), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry {
                    subject: subject_id,
                    roi: roi_ids[r].clone(),
                    feature: feature_names[c].clone(),
                });
            }
        }
        Ok(Self {
            subject_id,
            values,
            roi_ids,
            feature_names,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn roi_ids(&self) -> &[String] {
        &self.roi_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_roi(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_feat(&self) -> usize {
        self.values.ncols()
    }
}

/// Fold assignment of one subject within a cross-validation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

/// An immutable collection of feature maps with optional labels and split tags.
///
/// All maps share one ROI order and one feature order; subject ids are unique.
#[derive(Debug, Clone)]
pub struct Dataset {
    maps: Vec<FeatureMap>,
    labels: Option<Vec<f64>>,
    split_tags: Option<Vec<SplitTag>>,
}

impl Dataset {
    pub fn new(
        maps: Vec<FeatureMap>,
        labels: Option<Vec<f64>>,
        split_tags: Option<Vec<SplitTag>>,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::EmptyDataset("(in-memory)".into()));
        }
        let first = &maps[0];
        let (want_rows, want_cols) = first.values.dim();
        let mut ids = HashSet::new();
        for map in &maps {
            if !ids.insert(map.subject_id.clone()) {
                return Err(Error::DuplicateSubject(map.subject_id.clone()));
            }
            let (rows, cols) = map.values.dim();
            if (rows, cols) != (want_rows, want_cols) {
                return Err(Error::ShapeMismatch {
                    subject: map.subject_id.clone(),
                    got_rows: rows,
                    got_cols: cols,
                    want_rows,
                    want_cols,
                });
            }
            for (row, (got, want)) in map.roi_ids.iter().zip(&first.roi_ids).enumerate() {
                if got != want {
                    return Err(Error::RoiOrderMismatch {
                        subject: map.subject_id.clone(),
                        row,
                        got: got.clone(),
                        want: want.clone(),
                    });
                }
            }
            if map.feature_names != first.feature_names {
                return Err(Error::InvalidArgument(format!(
                    "subject {}: feature names differ from first subject",
                    map.subject_id
                )));
            }
        }
        if let Some(ref l) = labels {
            if l.len() != maps.len() {
                return Err(Error::InvalidArgument(format!(
                    "got {} labels for {} subjects",
                    l.len(),
                    maps.len()
                )));
            }
        }
        if let Some(ref t) = split_tags {
            if t.len() != maps.len() {
                return Err(Error::InvalidArgument(format!(
                    "got {} split tags for {} subjects",
                    t.len(),
                    maps.len()
                )));
            }
        }
        Ok(Self {
            maps,
            labels,
            split_tags,
        })
    }

    pub fn maps(&self) -> &[FeatureMap] {
        &self.maps
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn split_tags(&self) -> Option<&[SplitTag]> {
        self.split_tags.as_deref()
    }

    pub fn n_subjects(&self) -> usize {
        self.maps.len()
    }

    pub fn n_roi(&self) -> usize {
        self.maps[0].n_roi()
    }

    pub fn n_feat(&self) -> usize {
        self.maps[0].n_feat()
    }

    /// Labels interpreted as a binary classification target.
    pub fn binary_labels(&self) -> Option<bool> {
        self.labels
            .as_ref()
            .map(|l| l.iter().all(|&v| v == 0.0 || v == 1.0))
    }

    /// Returns a copy with the given split tags attached.
    pub fn with_split_tags(&self, tags: Vec<SplitTag>) -> Result<Self> {
        Self::new(self.maps.clone(), self.labels.clone(), Some(tags))
    }

    /// Returns the sub-dataset of the given subject indices (tags dropped).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let maps = indices.iter().map(|&i| self.maps[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(maps, labels, None)
    }
}

/// Per-cell normalization statistics, kept so held-out data can be
/// transformed with training statistics.
#[derive(Debug, Clone)]
pub struct NormalizationStats {
    pub mean: Array2<f64>,
    pub sd: Array2<f64>,
    /// (roi index, feature index) of columns with zero variance.
    pub zero_variance: Vec<(usize, usize)>,
}

impl NormalizationStats {
    /// Transform a single value at cell (roi, feature).
    pub fn apply_value(&self, roi: usize, feature: usize, value: f64) -> f64 {
        (value - self.mean[(roi, feature)]) / self.sd[(roi, feature)]
    }

    /// Transform a whole map with these statistics.
    pub fn apply(&self, map: &FeatureMap) -> Result<FeatureMap> {
        let mut values = map.values.clone();
        for ((r, c), v) in values.indexed_iter_mut() {
            *v = (*v - self.mean[(r, c)]) / self.sd[(r, c)];
        }
        FeatureMap::new(
            map.subject_id.clone(),
            values,
            map.roi_ids.to_vec(),
            map.feature_names.to_vec(),
        )
    }
}

/// Standardize every (ROI, feature) cell to mean 0, standard deviation 1
/// across subjects.
///
/// When split tags are present the statistics are computed over subjects
/// tagged `Train` only; every subject is then transformed with those
/// statistics. Zero-variance cells are centered and divided by 1, and
/// recorded in `NormalizationStats::zero_variance`.
pub fn zscore_normalize(d: &Dataset) -> Result<(Dataset, NormalizationStats)> {
    let stat_subjects: Vec<usize> = match d.split_tags() {
        Some(tags) => tags
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == SplitTag::Train)
            .map(|(i, _)| i)
            .collect(),
        None => (0..d.n_subjects()).collect(),
    };
    if stat_subjects.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalization needs at least 2 training subjects, got {}",
            stat_subjects.len()
        )));
    }
    let (n_roi, n_feat) = (d.n_roi(), d.n_feat());
    let n = stat_subjects.len() as f64;
    let mut mean = Array2::zeros((n_roi, n_feat));
    for &i in &stat_subjects {
        mean += d.maps[i].values();
    }
    mean /= n;
    let mut var = Array2::zeros((n_roi, n_feat));
    for &i in &stat_subjects {
        let dev = d.maps[i].values() - &mean;
        var += &(&dev * &dev);
    }
    var /= n;
    let mut sd = var.mapv(f64::sqrt);
    let mut zero_variance = Vec::new();
    for ((r, c), s) in sd.indexed_iter_mut() {
        if *s <= ZERO_SD {
            zero_variance.push((r, c));
            *s = 1.0;
        }
    }
    let stats = NormalizationStats {
        mean,
        sd,
        zero_variance,
    };
    let maps = d
        .maps
        .iter()
        .map(|m| stats.apply(m))
        .collect::<Result<Vec<_>>>()?;
    let normalized = Dataset::new(maps, d.labels.clone(), d.split_tags.clone())?;
    Ok((normalized, stats))
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn split_line(line: &str, delimiter: char) -> Vec<String> {
    line.split(delimiter).map(|s| s.trim().to_string()).collect()
}

fn parse_value(
    raw: &str,
    subject: &str,
    path: &Path,
    line: usize,
) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::MalformedMatrix {
        subject: subject.to_string(),
        path: path.display().to_string(),
        line,
        message: format!("cannot parse value {raw:?}"),
    })
}

fn load_matrix_file(
    path: &Path,
    subject: &str,
    delimiter: char,
) -> Result<(Array2<f64>, Vec<String>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::MalformedMatrix {
        subject: subject.to_string(),
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot read matrix file: {e}"),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::MalformedMatrix {
        subject: subject.to_string(),
        path: path.display().to_string(),
        line: 1,
        message: "missing feature-name header".into(),
    })?;
    let feature_names = split_line(header, delimiter);
    let n_feat = feature_names.len();
    let mut roi_ids = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let fields = split_line(line, delimiter);
        if fields.len() != n_feat + 1 {
            return Err(Error::MalformedMatrix {
                subject: subject.to_string(),
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected {} fields, got {}", n_feat + 1, fields.len()),
            });
        }
        roi_ids.push(fields[0].clone());
        for raw in &fields[1..] {
            rows.push(parse_value(raw, subject, path, idx + 1)?);
        }
    }
    let n_roi = roi_ids.len();
    let values = Array2::from_shape_vec((n_roi, n_feat), rows).map_err(|e| {
        Error::MalformedMatrix {
            subject: subject.to_string(),
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        }
    })?;
    Ok((values, roi_ids, feature_names))
}

/// Load a dataset from a manifest file with the default comma delimiter.
///
/// Manifest format: a header row, then one row per subject
/// `subject_id,label_or_NA,relative_path`. Each referenced matrix file holds
/// the feature names on its first row and `roi_id` followed by F values on
/// every following row.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with_delimiter(manifest_path, ',')
}

/// [`load_dataset`] with a configurable single-character delimiter.
pub fn load_dataset_with_delimiter(
    manifest_path: impl AsRef<Path>,
    delimiter: char,
) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let text = read_to_string(manifest_path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    lines.next().ok_or_else(|| Error::MalformedManifest {
        path: manifest_path.display().to_string(),
        line: 1,
        message: "missing header row".into(),
    })?;

    let mut maps = Vec::new();
    let mut raw_labels: Vec<Option<f64>> = Vec::new();
    for (idx, line) in lines {
        let fields = split_line(line, delimiter);
        if fields.len() != 3 {
            return Err(Error::MalformedManifest {
                path: manifest_path.display().to_string(),
                line: idx + 1,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let subject_id = fields[0].clone();
        let label = if fields[1] == "NA" {
            None
        } else {
            Some(fields[1].parse::<f64>().map_err(|_| Error::MalformedManifest {
                path: manifest_path.display().to_string(),
                line: idx + 1,
                message: format!("cannot parse label {:?}", fields[1]),
            })?)
        };
        raw_labels.push(label);
        let matrix_path: PathBuf = base.join(&fields[2]);
        let (values, roi_ids, feature_names) =
            load_matrix_file(&matrix_path, &subject_id, delimiter)?;
        maps.push(FeatureMap::new(subject_id, values, roi_ids, feature_names)?);
    }
    if maps.is_empty() {
        return Err(Error::EmptyDataset(manifest_path.display().to_string()));
    }
    let labels = if raw_labels.iter().all(Option::is_none) {
        None
    } else if raw_labels.iter().all(Option::is_some) {
        Some(raw_labels.into_iter().map(Option::unwrap).collect())
    } else {
        let missing = raw_labels.iter().position(Option::is_none).unwrap();
        return Err(Error::InvalidArgument(format!(
            "subject {} has no label while others do",
            maps[missing].subject_id()
        )));
    };
    Dataset::new(maps, labels, None)
}

/// Formats a float as decimal text with 17 significant digits, which
/// round-trips any f64 exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a dataset as `manifest.csv` plus one matrix file per subject under
/// `dir`. Values round-trip bit-identically through [`load_dataset`].
pub fn save_dataset(dir: impl AsRef<Path>, d: &Dataset) -> Result<PathBuf> {
    save_dataset_with_delimiter(dir, d, ',')
}

pub fn save_dataset_with_delimiter(
    dir: impl AsRef<Path>,
    d: &Dataset,
    delimiter: char,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "subject_id{delimiter}label{delimiter}path");
    for (i, map) in d.maps.iter().enumerate() {
        let label = match d.labels() {
            Some(l) => format_f64(l[i]),
            None => "NA".into(),
        };
        let rel = format!("{}.csv", map.subject_id());
        let _ = writeln!(manifest, "{}{delimiter}{label}{delimiter}{rel}", map.subject_id());
        let mut body = String::new();
        let _ = writeln!(body, "{}", map.feature_names().join(&delimiter.to_string()));
        for (r, roi) in map.roi_ids().iter().enumerate() {
            let mut row = roi.clone();
            for c in 0..map.n_feat() {
                row.push(delimiter);
                row.push_str(&format_f64(map.values()[(r, c)]));
            }
            let _ = writeln!(body, "{row}");
        }
        write_string(&dir.join(rel), &body)?;
    }
    let manifest_path = dir.join("manifest.csv");
    write_string(&manifest_path, &manifest)?;
    Ok(manifest_path)
}
