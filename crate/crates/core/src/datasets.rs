//! Dataset ingestion: IDX archives (MNIST family), CSV tables, and a seeded
//! synthetic tabular generator with heterogeneous feature scales.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};

use crate::config::{DataConfig, DatasetKind};
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `samples × features`, row-major.
    pub features: Vec<f64>,
    pub feature_count: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        feature_count: usize,
        labels: Vec<usize>,
        classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::Dataset("dataset needs at least one feature".into()));
        }
        if features.len() != labels.len() * feature_count {
            return Err(Error::Dataset(format!(
                "feature matrix has {} values, expected {} × {}",
                features.len(),
                labels.len(),
                feature_count
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Dataset(format!(
                "label {l} of sample {i} outside 0..{classes}"
            )));
        }
        Ok(Self {
            features,
            feature_count,
            labels,
            classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_count);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            feature_count: self.feature_count,
            labels,
            classes: self.classes,
            provenance: self.provenance.clone(),
        }
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Deterministic shuffled split; `train_fraction` of the samples go to the
    /// first part. The two parts are disjoint and together cover every sample.
    pub fn split(&self, seed: u64, train_fraction: f64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5917);
        idx.shuffle(&mut rng);
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    /// Standard 80/20 train/validation split.
    pub fn split_80_20(&self, seed: u64) -> (Dataset, Dataset) {
        self.split(seed, 0.8)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn fmt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Images scaled to `[0, 1]`, with the image dimensions.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let magic = read_u32_be(bytes, 0).ok_or_else(|| fmt_err(path, "file shorter than IDX header"))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(fmt_err(
            path,
            format!("bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"),
        ));
    }
    let header = |o| read_u32_be(bytes, o).ok_or_else(|| fmt_err(path, "truncated IDX header"));
    let count = header(4)? as usize;
    let rows = header(8)? as usize;
    let cols = header(12)? as usize;
    let expected = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(fmt_err(
            path,
            format!(
                "image payload has {} bytes, expected {expected} ({count} × {rows} × {cols})",
                payload.len()
            ),
        ));
    }
    let pixels = payload.iter().map(|&p| p as f64 / 255.0).collect();
    Ok((pixels, count, rows * cols))
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32_be(bytes, 0).ok_or_else(|| fmt_err(path, "file shorter than IDX header"))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(fmt_err(
            path,
            format!("bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"),
        ));
    }
    let count = read_u32_be(bytes, 4).ok_or_else(|| fmt_err(path, "truncated IDX header"))? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(fmt_err(
            path,
            format!("label payload has {} bytes, expected {count}", payload.len()),
        ));
    }
    Ok(payload.iter().map(|&l| l as usize).collect())
}

/// Loads an IDX image/label archive pair (ten classes).
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images)?;
    let lbl_bytes = fs::read(labels)?;
    let (pixels, count, dim) = parse_idx_images(images, &img_bytes)?;
    let lbls = parse_idx_labels(labels, &lbl_bytes)?;
    if lbls.len() != count {
        return Err(Error::Dataset(format!(
            "{} images but {} labels",
            count,
            lbls.len()
        )));
    }
    if let Some(bad) = lbls.iter().find(|&&l| l > 9) {
        return Err(fmt_err(labels, format!("label {bad} outside 0..=9")));
    }
    Dataset::new(pixels, dim, lbls, 10, format!("idx:{}", images.display()))
}

/// MNIST-family directory with the four standard archive names.
pub fn load_idx_dir(dir: &Path, test: bool) -> Result<Dataset> {
    let (img, lbl) = if test {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    } else {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    };
    load_idx(&dir.join(img), &dir.join(lbl))
}

/// Directory of the MNIST-family archives for `kind`: the configured path,
/// else `WARP_MNIST_DIR` / `WARP_FASHION_DIR`, else `/root/data/<name>`.
pub fn idx_dir(kind: DatasetKind, configured: Option<&Path>) -> PathBuf {
    if let Some(p) = configured {
        return p.to_path_buf();
    }
    let (var, name) = match kind {
        DatasetKind::Fashion => ("WARP_FASHION_DIR", "fashion-mnist"),
        _ => ("WARP_MNIST_DIR", "mnist"),
    };
    std::env::var_os(var)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new("/root/data").join(name))
}

/// Loads the source named by `cfg` (the training archive for IDX kinds),
/// truncated to `cfg.limit` samples.
pub fn load_source(cfg: &DataConfig) -> Result<Dataset> {
    let ds = match cfg.kind {
        DatasetKind::Mnist | DatasetKind::Fashion => load_idx_dir(&idx_dir(cfg.kind, cfg.path.as_deref()), false)?,
        DatasetKind::Csv => {
            let path = cfg
                .path
                .as_deref()
                .ok_or_else(|| Error::Config("csv dataset needs `data.path`".into()))?;
            load_csv(path, &cfg.label_column)?
        }
        DatasetKind::Synth => synth_heterogeneous(cfg.seed, cfg.synth_samples, cfg.synth_features, cfg.synth_classes)?,
    };
    Ok(match cfg.limit {
        Some(n) if n < ds.len() => ds.take(n),
        _ => ds,
    })
}

/// Numeric CSV with a header row; `label_column` names the integer label column.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| fmt_err(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| fmt_err(path, e.to_string()))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| fmt_err(path, format!("no column named {label_column:?}")))?;
    let d = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| fmt_err(path, format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(fmt_err(path, format!("row {row}: expected {} columns, got {}", headers.len(), record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(fmt_err(path, format!("row {row}, column {}: missing value", c + 1)));
            }
            if c == label_idx {
                let l: usize = cell.parse().map_err(|_| {
                    fmt_err(path, format!("row {row}, column {}: label {cell:?} is not a non-negative integer", c + 1))
                })?;
                labels.push(l);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    fmt_err(path, format!("row {row}, column {}: {cell:?} is not numeric", c + 1))
                })?;
                if !v.is_finite() {
                    return Err(fmt_err(path, format!("row {row}, column {}: non-finite value", c + 1)));
                }
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Dataset(format!("{}: no data rows", path.display())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, d, labels, classes, format!("csv:{}", path.display()))
}

/// Writes `dataset` as CSV with columns `f0..f{d-1}` and a final `label`.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| fmt_err(path, e.to_string()))?;
    let mut header: Vec<String> = (0..dataset.feature_count).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| fmt_err(path, e.to_string()))?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(dataset.labels[i].to_string());
        w.write_record(&rec).map_err(|e| fmt_err(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Feature families used by [`synth_heterogeneous`], cycling by column index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    /// Uniform on `[0, 1]`.
    Unit,
    /// Normal with mean 50 and standard deviation 100.
    WideNormal,
    /// Log-normal with `sigma = 1.5`: heavy right tail.
    HeavyTail,
    /// Zero with probability 0.6, otherwise exponential with mean 20.
    Sparse,
}

pub const COLUMN_CYCLE: [ColumnKind; 4] = [
    ColumnKind::Unit,
    ColumnKind::WideNormal,
    ColumnKind::HeavyTail,
    ColumnKind::Sparse,
];

pub fn column_kind(j: usize) -> ColumnKind {
    COLUMN_CYCLE[j % COLUMN_CYCLE.len()]
}

impl ColumnKind {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ColumnKind::Unit => rng.random(),
            ColumnKind::WideNormal => Normal::new(50.0, 100.0).unwrap().sample(rng),
            ColumnKind::HeavyTail => LogNormal::new(0.0, 1.5).unwrap().sample(rng),
            ColumnKind::Sparse => {
                if rng.random::<f64>() < 0.6 {
                    0.0
                } else {
                    Exp::new(1.0 / 20.0).unwrap().sample(rng)
                }
            }
        }
    }

    /// Quantile function of the generating distribution.
    fn quantile(self, q: f64) -> f64 {
        match self {
            ColumnKind::Unit => q,
            ColumnKind::WideNormal => 50.0 + 100.0 * normal_quantile(q),
            ColumnKind::HeavyTail => (1.5 * normal_quantile(q)).exp(),
            ColumnKind::Sparse => {
                if q <= 0.6 {
                    0.0
                } else {
                    -20.0 * (1.0 - (q - 0.6) / 0.4).ln()
                }
            }
        }
    }
}

/// Standard normal quantile (Acklam's rational approximation, |err| < 1.2e-9).
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let pl = 0.02425;
    if p < pl {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - pl {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Planted cut quantiles; they sit between the quantiles a low-bit
/// distributive encoder would pick, so recovering them requires moving
/// thresholds.
const CUT_QUANTILES: [f64; 6] = [0.92, 0.25, 0.75, 0.08, 0.42, 0.58];

/// Seeded tabular data whose columns have wildly different scales and
/// densities. Labels follow a planted rule: a weighted vote of per-feature
/// threshold indicators `1{x_j > c_j}` plus logistic noise, bucketed into
/// `classes` equally populated classes.
pub fn synth_heterogeneous(seed: u64, samples: usize, d: usize, classes: usize) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::Dataset("synthetic data needs at least two features".into()));
    }
    if classes < 2 || samples < classes {
        return Err(Error::Dataset("synthetic data needs at least two classes and as many samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cuts: Vec<f64> = (0..d)
        .map(|j| column_kind(j).quantile(CUT_QUANTILES[j % CUT_QUANTILES.len()]))
        .collect();
    let weights: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut features = Vec::with_capacity(samples * d);
    let mut scores = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut score = 0.0;
        for j in 0..d {
            let v = column_kind(j).sample(&mut rng);
            features.push(v);
            if v > cuts[j] {
                score += weights[j];
            }
        }
        let u: f64 = rng.random_range(1e-12..1.0);
        score += 0.15 * (u / (1.0 - u)).ln();
        scores.push(score);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let bounds: Vec<f64> = (1..classes)
        .map(|c| sorted[c * samples / classes])
        .collect();
    let labels = scores
        .iter()
        .map(|s| bounds.iter().filter(|&&b| *s >= b).count())
        .collect();
    Dataset::new(features, d, labels, classes, format!("synth:{seed}"))
}
