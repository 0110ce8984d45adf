//! In-memory raster model, class maps, sample sets and their file formats.
//!
//! Rasters are stored as a raw little-endian `f32` band-sequential payload
//! next to a JSON sidecar header (`<payload>.json`). Class maps use a `u8`
//! payload with the same sidecar convention; label 255 marks unlabeled
//! pixels. Sample sets interchange as CSV with header `f_0,...,f_{m-1},label`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Sentinel written into derived bands where a value is undefined.
pub const DEFAULT_NODATA: f32 = -9999.0;

/// Class-map label reserved for unlabeled pixels.
pub const UNLABELED: u8 = 255;

/// Path of the JSON sidecar that accompanies a binary payload.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// A multi-band grid of `f32` values, band-sequential and row-major within
/// each band.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    rows: usize,
    cols: usize,
    band_names: Vec<String>,
    data: Vec<f32>,
    nodata: Option<f32>,
}

impl Raster {
    pub fn new(
        rows: usize,
        cols: usize,
        band_names: Vec<String>,
        data: Vec<f32>,
        nodata: Option<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData("raster must have at least one pixel".into()));
        }
        if band_names.is_empty() {
            return Err(Error::InvalidData("raster must have at least one band".into()));
        }
        let expected = rows * cols * band_names.len();
        if data.len() != expected {
            return Err(Error::LengthMismatch(format!(
                "{rows}x{cols}x{} raster needs {expected} values, got {}",
                band_names.len(),
                data.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &band_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate band name `{name}`")));
            }
        }
        Ok(Raster {
            rows,
            cols,
            band_names,
            data,
            nodata,
        })
    }

    /// Single-band raster.
    pub fn single(
        rows: usize,
        cols: usize,
        name: impl Into<String>,
        data: Vec<f32>,
        nodata: Option<f32>,
    ) -> Result<Self> {
        Raster::new(rows, cols, vec![name.into()], data, nodata)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.band_names.len()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn nodata(&self) -> Option<f32> {
        self.nodata
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|n| n == name)
    }

    /// Copies band `b` out as a single-band raster.
    pub fn select_band(&self, b: usize) -> Raster {
        Raster {
            rows: self.rows,
            cols: self.cols,
            band_names: vec![self.band_names[b].clone()],
            data: self.band(b).to_vec(),
            nodata: self.nodata,
        }
    }

    pub fn select_band_by_name(&self, name: &str) -> Result<Raster> {
        self.band_index(name)
            .map(|b| self.select_band(b))
            .ok_or_else(|| Error::InvalidArgument(format!("no band named `{name}`")))
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.pixels() + row * self.cols + col]
    }

    /// A value is valid when it is finite and not the nodata sentinel.
    pub fn is_valid_value(&self, v: f32) -> bool {
        v.is_finite() && self.nodata != Some(v)
    }

    /// True when every band holds a valid value at flat pixel index `idx`.
    pub fn pixel_valid(&self, idx: usize) -> bool {
        let n = self.pixels();
        (0..self.bands()).all(|b| self.is_valid_value(self.data[b * n + idx]))
    }

    /// Band values at flat pixel index `idx`.
    pub fn pixel(&self, idx: usize) -> Vec<f32> {
        let n = self.pixels();
        (0..self.bands()).map(|b| self.data[b * n + idx]).collect()
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn rename_band(&mut self, b: usize, name: impl Into<String>) -> Result<()> {
        let name = name.into();
        if self.band_names.iter().enumerate().any(|(i, n)| i != b && *n == name) {
            return Err(Error::InvalidData(format!("duplicate band name `{name}`")));
        }
        self.band_names[b] = name;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterHeader {
    rows: usize,
    cols: usize,
    bands: usize,
    dtype: String,
    band_names: Vec<String>,
    nodata: Option<f32>,
}

fn read_header<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let header_path = sidecar_path(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Header(format!("{}: {e}", header_path.display())))
}

fn write_header<T: Serialize>(path: &Path, header: &T) -> Result<()> {
    let header_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))
}

/// Reads a raster from its payload path; the header is read from the
/// `<path>.json` sidecar.
pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let header: RasterHeader = read_header(path)?;
    if header.dtype != "f32" {
        return Err(Error::UnknownDtype(header.dtype));
    }
    if header.band_names.len() != header.bands {
        return Err(Error::Header(format!(
            "header declares {} bands but lists {} names",
            header.bands,
            header.band_names.len()
        )));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.rows * header.cols * header.bands * 4;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch(format!(
            "header declares {} values ({expected} bytes), payload has {} bytes",
            header.rows * header.cols * header.bands,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::new(header.rows, header.cols, header.band_names, data, header.nodata)
}

/// Writes the payload to `path` and the header to `<path>.json`. Non-finite
/// payload values are rejected; undefined pixels must use the nodata value.
pub fn write_raster(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(i) = r.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!(
            "non-finite value at payload index {i}; use the nodata sentinel"
        )));
    }
    if let Some(nd) = r.nodata {
        if !nd.is_finite() {
            return Err(Error::InvalidData("nodata sentinel must be finite".into()));
        }
    }
    let mut bytes = Vec::with_capacity(r.data.len() * 4);
    for v in &r.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_header(
        path,
        &RasterHeader {
            rows: r.rows,
            cols: r.cols,
            bands: r.bands(),
            dtype: "f32".into(),
            band_names: r.band_names.clone(),
            nodata: r.nodata,
        },
    )
}

/// Concatenates bands of same-shaped rasters in argument order. Repeated
/// band names get a `_2`, `_3`, ... suffix.
pub fn stack_bands(rasters: &[Raster]) -> Result<Raster> {
    let first = rasters
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
    let mut names: Vec<String> = Vec::new();
    let mut data = Vec::with_capacity(rasters.iter().map(|r| r.data.len()).sum());
    for r in rasters {
        if !r.same_shape(first) {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {}x{} with {}x{}",
                first.rows, first.cols, r.rows, r.cols
            )));
        }
        for name in &r.band_names {
            let mut candidate = name.clone();
            let mut k = 2;
            while names.contains(&candidate) {
                candidate = format!("{name}_{k}");
                k += 1;
            }
            names.push(candidate);
        }
        data.extend_from_slice(&r.data);
    }
    let nodata = rasters.iter().find_map(|r| r.nodata);
    // Bands from inputs with a different sentinel keep their raw values;
    // remap them so the stacked raster has one consistent nodata value.
    if let Some(nd) = nodata {
        let mut offset = 0;
        for r in rasters {
            let len = r.data.len();
            if let Some(own) = r.nodata {
                if own != nd {
                    for v in &mut data[offset..offset + len] {
                        if *v == own {
                            *v = nd;
                        }
                    }
                }
            }
            offset += len;
        }
    }
    Raster::new(first.rows, first.cols, names, data, nodata)
}

/// Per-pixel class labels with a legend; 255 means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    rows: usize,
    cols: usize,
    labels: Vec<u8>,
    legend: Vec<String>,
}

impl ClassMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u8>, legend: Vec<String>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::LengthMismatch(format!(
                "{rows}x{cols} class map needs {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        if legend.is_empty() {
            return Err(Error::InvalidData("legend must be non-empty".into()));
        }
        if legend.len() > UNLABELED as usize {
            return Err(Error::InvalidData("legend may hold at most 255 classes".into()));
        }
        let mut seen = HashSet::new();
        for name in &legend {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate class name `{name}`")));
            }
        }
        if let Some(bad) = labels
            .iter()
            .find(|&&l| l != UNLABELED && l as usize >= legend.len())
        {
            return Err(Error::InvalidData(format!(
                "label {bad} exceeds legend of {} classes",
                legend.len()
            )));
        }
        Ok(ClassMap {
            rows,
            cols,
            labels,
            legend,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn legend(&self) -> &[String] {
        &self.legend
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassMapHeader {
    rows: usize,
    cols: usize,
    dtype: String,
    legend: Vec<String>,
    unlabeled: u8,
}

pub fn read_class_map(path: impl AsRef<Path>) -> Result<ClassMap> {
    let path = path.as_ref();
    let header: ClassMapHeader = read_header(path)?;
    if header.dtype != "u8" {
        return Err(Error::UnknownDtype(header.dtype));
    }
    if header.unlabeled != UNLABELED {
        return Err(Error::Header(format!(
            "unlabeled sentinel must be {UNLABELED}, got {}",
            header.unlabeled
        )));
    }
    let labels = fs::read(path).map_err(|e| Error::io(path, e))?;
    if labels.len() != header.rows * header.cols {
        return Err(Error::LengthMismatch(format!(
            "header declares {} labels, payload has {}",
            header.rows * header.cols,
            labels.len()
        )));
    }
    ClassMap::new(header.rows, header.cols, labels, header.legend)
}

pub fn write_class_map(cm: &ClassMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, &cm.labels).map_err(|e| Error::io(path, e))?;
    write_header(
        path,
        &ClassMapHeader {
            rows: cm.rows,
            cols: cm.cols,
            dtype: "u8".into(),
            legend: cm.legend.clone(),
            unlabeled: UNLABELED,
        },
    )
}

/// Feature matrix (row-major, `n x m`) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    m: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl SampleSet {
    /// Builds a sample set where every class must have at least one sample.
    pub fn new(
        features: Vec<f32>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        Self::build(features, labels, feature_names, class_names, false)
    }

    /// Like [`SampleSet::new`] but classes may be absent (test partitions,
    /// class maps whose legend lists unseen classes).
    pub fn with_missing_classes(
        features: Vec<f32>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        Self::build(features, labels, feature_names, class_names, true)
    }

    fn build(
        features: Vec<f32>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
        allow_missing: bool,
    ) -> Result<Self> {
        let m = feature_names.len();
        if m == 0 {
            return Err(Error::InvalidData("sample set needs at least one feature".into()));
        }
        if class_names.is_empty() {
            return Err(Error::InvalidData("sample set needs at least one class".into()));
        }
        if features.len() != labels.len() * m {
            return Err(Error::LengthMismatch(format!(
                "{} samples x {m} features needs {} values, got {}",
                labels.len(),
                labels.len() * m,
                features.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature in sample {} (feature {})",
                i / m,
                i % m
            )));
        }
        let k = class_names.len();
        let mut present = vec![false; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidData(format!("label {l} exceeds {k} classes")));
            }
            present[l] = true;
        }
        if !allow_missing {
            if let Some(c) = present.iter().position(|p| !p) {
                return Err(Error::InvalidData(format!(
                    "class `{}` has no samples",
                    class_names[c]
                )));
            }
        }
        Ok(SampleSet {
            m,
            features,
            labels,
            feature_names,
            class_names,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.m..(i + 1) * self.m]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples at `indices` in the given order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        let mut features = Vec::with_capacity(indices.len() * self.m);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        SampleSet {
            m: self.m,
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Replaces the feature matrix, keeping labels and class names.
    pub fn with_features(&self, features: Vec<f32>, feature_names: Vec<String>) -> Result<SampleSet> {
        SampleSet::with_missing_classes(
            features,
            self.labels.clone(),
            feature_names,
            self.class_names.clone(),
        )
    }
}

/// One sample per labeled pixel, scanned row-major. Pixels holding nodata or
/// non-finite values in any band are skipped.
pub fn extract_samples(r: &Raster, cm: &ClassMap) -> Result<SampleSet> {
    if r.rows != cm.rows || r.cols != cm.cols {
        return Err(Error::DimensionMismatch(format!(
            "raster is {}x{}, class map is {}x{}",
            r.rows, r.cols, cm.rows, cm.cols
        )));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, &label) in cm.labels.iter().enumerate() {
        if label == UNLABELED || !r.pixel_valid(idx) {
            continue;
        }
        features.extend(r.pixel(idx));
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(Error::Degenerate("class map has no labeled pixels".into()));
    }
    SampleSet::with_missing_classes(features, labels, r.band_names.clone(), cm.legend.clone())
}

/// Per-class random split: class `c` with `n_c` samples sends exactly
/// `max(1, round(train_fraction * n_c))` samples to the training set.
/// Both partitions keep the original sample order.
pub fn stratified_split(
    s: &SampleSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    split_impl(s, train_fraction, seed, false)
}

/// Split used for internal validation hold-outs: like
/// [`stratified_split`] but a class with a single sample goes entirely to
/// the training side instead of failing.
pub fn holdout_split(s: &SampleSet, train_fraction: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
    split_impl(s, train_fraction, seed, true)
}

fn split_impl(
    s: &SampleSet,
    train_fraction: f64,
    seed_value: u64,
    allow_singletons: bool,
) -> Result<(SampleSet, SampleSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); s.k()];
    for (i, &l) in s.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train_mask = vec![false; s.n()];
    for (c, members) in by_class.iter_mut().enumerate() {
        let n_c = members.len();
        if n_c == 0 {
            continue;
        }
        if n_c < 2 && !allow_singletons {
            return Err(Error::Degenerate(format!(
                "class `{}` has {n_c} sample(s); stratified split needs at least 2",
                s.class_names[c]
            )));
        }
        let n_train = ((train_fraction * n_c as f64).round() as usize).clamp(1, n_c);
        let mut rng = seed::stream_rng(seed_value, c as u64);
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            train_mask[i] = true;
        }
    }
    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = (0..s.n()).partition(|&i| train_mask[i]);
    Ok((s.subset(&train_idx), s.subset(&test_idx)))
}

/// Writes `f_0,...,f_{m-1},label` CSV.
pub fn write_samples_csv(s: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..s.m).map(|j| format!("f_{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..s.n() {
        let mut rec: Vec<String> = s.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(s.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a sample CSV. Class names are `class_0..class_K` where `K` is the
/// largest label seen unless `class_names` is given.
pub fn read_samples_csv(path: impl AsRef<Path>, class_names: Option<Vec<String>>) -> Result<SampleSet> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 2 || &header[cols - 1] != "label" {
        return Err(Error::Csv("last column must be `label`".into()));
    }
    let m = cols - 1;
    for (j, name) in header.iter().take(m).enumerate() {
        if name != format!("f_{j}") {
            return Err(Error::Csv(format!("column {j} must be `f_{j}`, found `{name}`")));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for j in 0..m {
            let v: f32 = rec[j]
                .trim()
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: bad feature `{}`", line + 1, &rec[j])))?;
            features.push(v);
        }
        let l: usize = rec[m]
            .trim()
            .parse()
            .map_err(|_| Error::Csv(format!("row {}: bad label `{}`", line + 1, &rec[m])))?;
        labels.push(l);
    }
    let class_names = class_names.unwrap_or_else(|| {
        let k = labels.iter().max().map_or(1, |&l| l + 1);
        (0..k).map(|c| format!("class_{c}")).collect()
    });
    let feature_names = (0..m).map(|j| format!("f_{j}")).collect();
    SampleSet::with_missing_classes(features, labels, feature_names, class_names)
}
