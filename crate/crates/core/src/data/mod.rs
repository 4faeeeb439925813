//! CSV ingestion, cleaning, scaling, and train/test splitting.
//!
//! The pipeline mirrors a fixed preparation order: drop identifier columns,
//! impute non-finite cells with full-column means, standard-scale, then split.
//! Scaler statistics are fitted on the full dataset by default (matching the
//! reproduced workflow); a train-only mode is available for leakage-free runs.

mod cache;

pub use cache::{load_dataset, save_dataset};

use std::collections::BTreeSet;
use std::path::Path;

use crate::numerics::{Matrix, SplitMix64};
use crate::{Error, Result};

/// Columns dropped by default: per-flow identifiers that are not numeric
/// features (flow id, endpoints, timestamp) plus bookkeeping columns that some
/// exports of the dataset carry.
pub const DEFAULT_DROP_COLUMNS: &[&str] = &[
    "Flow ID",
    "Source IP",
    "Source Port",
    "Destination IP",
    "Destination Port",
    "Timestamp",
    "SimillarHTTP",
    "Unnamed: 0",
];

pub const DEFAULT_LABEL_COLUMN: &str = "Label";
pub const DEFAULT_BENIGN_LABEL: &str = "BENIGN";

/// How to parse and relabel a raw CSV.
#[derive(Debug, Clone)]
pub struct CleanConfig {
    /// Column names to remove before numeric parsing (matched after trimming
    /// surrounding whitespace).
    pub drop_columns: Vec<String>,
    /// Name of the class column.
    pub label_column: String,
    /// Label value mapped to class 0; every other non-empty value maps to
    /// class 1 (all attack subclasses collapse into one class).
    pub benign_label: String,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            drop_columns: DEFAULT_DROP_COLUMNS.iter().map(|s| s.to_string()).collect(),
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
            benign_label: DEFAULT_BENIGN_LABEL.to_string(),
        }
    }
}

/// Parsed CSV with identifier columns removed and the label column identified.
/// Cells are still raw text; `clean` turns them into a numeric matrix.
#[derive(Debug, Clone)]
pub struct RawFlowTable {
    /// Feature column names, in file order, label column excluded.
    pub feature_names: Vec<String>,
    /// One entry per row: feature cells in `feature_names` order.
    pub rows: Vec<Vec<String>>,
    /// Raw label cell per row.
    pub raw_labels: Vec<String>,
    pub label_column: String,
    /// Value of the label column that maps to class 0.
    pub benign_label: String,
}

impl RawFlowTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Load a headered CSV, drop configured columns, and locate the label column.
///
/// Every label cell is checked here: empty labels are unmappable. Header names
/// and label values are compared after trimming surrounding whitespace, since
/// common exports of the dataset pad header names with spaces.
pub fn load_csv(path: &Path, config: &CleanConfig) -> Result<RawFlowTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Data(format!("cannot open {}: {e}", path.display())),
            _ => Error::Csv(e),
        })?;

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::Data(format!("{}: missing header row", path.display())));
    }

    let drop: BTreeSet<&str> = config.drop_columns.iter().map(|s| s.trim()).collect();
    let label_name = config.label_column.trim();
    let label_idx = headers
        .iter()
        .position(|h| h == label_name)
        .ok_or_else(|| {
            Error::Data(format!(
                "{}: label column {:?} not found in header",
                path.display(),
                label_name
            ))
        })?;

    let mut keep_indices = Vec::new();
    let mut feature_names = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if i != label_idx && !drop.contains(name.as_str()) {
            keep_indices.push(i);
            feature_names.push(name.clone());
        }
    }
    if feature_names.is_empty() {
        return Err(Error::Data(format!(
            "{}: no feature columns remain after dropping",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                row_no + 1,
                record.len(),
                headers.len()
            )));
        }
        let label = record[label_idx].trim().to_string();
        if label.is_empty() {
            return Err(Error::UnmappableLabel {
                column: config.label_column.clone(),
                value: "<empty>".to_string(),
            });
        }
        raw_labels.push(label);
        rows.push(
            keep_indices
                .iter()
                .map(|&i| record[i].to_string())
                .collect(),
        );
    }
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: file has a header but no data rows",
            path.display()
        )));
    }

    Ok(RawFlowTable {
        feature_names,
        rows,
        raw_labels,
        label_column: config.label_column.clone(),
        benign_label: config.benign_label.clone(),
    })
}

/// Numeric features plus binary labels produced by `clean`.
#[derive(Debug, Clone)]
pub struct CleanedData {
    pub features: Matrix,
    /// 0 = benign, 1 = attack.
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Number of NaN/Inf/empty cells replaced by their column mean.
    pub imputed_cells: usize,
}

/// Parse cells to numbers, replacing NaN, ±Inf, and empty cells with the mean
/// of the finite values in their column, and map labels to {0, 1}.
pub fn clean(table: &RawFlowTable) -> Result<CleanedData> {
    let n = table.rows.len();
    let d = table.feature_names.len();

    // Parse pass: finite value or None for imputable cells. Anything that is
    // not a number and not an empty/NaN/Inf marker violates the input
    // contract.
    let mut cells: Vec<Option<f64>> = Vec::with_capacity(n * d);
    for (row_no, row) in table.rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Data(format!(
                "row {} has {} cells, expected {d}",
                row_no + 1,
                row.len()
            )));
        }
        for (j, cell) in row.iter().enumerate() {
            let text = cell.trim();
            if text.is_empty() {
                cells.push(None);
                continue;
            }
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(Some(v)),
                Ok(_) => cells.push(None), // NaN or ±Inf
                Err(_) => {
                    return Err(Error::Data(format!(
                        "row {} column {:?}: cannot parse {text:?} as a number",
                        row_no + 1,
                        table.feature_names[j]
                    )))
                }
            }
        }
    }

    // Column means over finite values only, computed on the full dataset.
    let mut means = vec![0.0f64; d];
    for j in 0..d {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if let Some(v) = cells[i * d + j] {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::UnimputableColumn {
                column: table.feature_names[j].clone(),
            });
        }
        means[j] = sum / count as f64;
    }

    let mut imputed_cells = 0usize;
    let data: Vec<f64> = cells
        .iter()
        .enumerate()
        .map(|(idx, cell)| match cell {
            Some(v) => *v,
            None => {
                imputed_cells += 1;
                means[idx % d]
            }
        })
        .collect();

    let labels = table
        .raw_labels
        .iter()
        .map(|raw| u8::from(raw != &table.benign_label))
        .collect();

    Ok(CleanedData {
        features: Matrix::from_vec(n, d, data)?,
        labels,
        feature_names: table.feature_names.clone(),
        imputed_cells,
    })
}

/// Threshold below which a feature's standard deviation counts as zero.
pub const STD_TOLERANCE: f64 = 1e-12;

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    /// Population standard deviations; near-zero values are stored as 1.0 and
    /// flagged so transform leaves those features centered but unscaled.
    pub stds: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl ScalerParams {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }
}

/// Fit column means and population (N-denominator) standard deviations.
pub fn fit_scaler(features: &Matrix) -> Result<ScalerParams> {
    let (n, d) = (features.rows(), features.cols());
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "cannot fit a scaler on an empty matrix".into(),
        ));
    }
    let mut means = vec![0.0f64; d];
    for i in 0..n {
        for (j, v) in features.row(i).iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut vars = vec![0.0f64; d];
    for i in 0..n {
        for (j, v) in features.row(i).iter().enumerate() {
            let diff = v - means[j];
            vars[j] += diff * diff;
        }
    }
    let mut stds = Vec::with_capacity(d);
    let mut flagged = Vec::with_capacity(d);
    for var in vars {
        let std = (var / n as f64).sqrt();
        if std < STD_TOLERANCE {
            stds.push(1.0);
            flagged.push(true);
        } else {
            stds.push(std);
            flagged.push(false);
        }
    }
    Ok(ScalerParams {
        means,
        stds,
        flagged,
    })
}

/// Apply (x − μ)/σ per feature.
pub fn transform(features: &Matrix, scaler: &ScalerParams) -> Result<Matrix> {
    scaled(features, scaler, |x, mu, sd| (x - mu) / sd)
}

/// Undo `transform`: x·σ + μ per feature.
pub fn inverse_transform(features: &Matrix, scaler: &ScalerParams) -> Result<Matrix> {
    scaled(features, scaler, |x, mu, sd| x * sd + mu)
}

fn scaled(
    features: &Matrix,
    scaler: &ScalerParams,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<Matrix> {
    let d = features.cols();
    if d != scaler.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "scaler fitted for {} features, matrix has {d}",
            scaler.n_features()
        )));
    }
    let mut data = Vec::with_capacity(features.rows() * d);
    for i in 0..features.rows() {
        for (j, &x) in features.row(i).iter().enumerate() {
            data.push(f(x, scaler.means[j], scaler.stds[j]));
        }
    }
    Matrix::from_vec(features.rows(), d, data)
}

/// Shuffle 0..n and carve off the test set.
///
/// The test set size is ceil(n × test_fraction): for 227,148 rows at 0.4 that
/// is 90,860 test rows and 136,288 training rows. Test indices are the first
/// chunk of the shuffled permutation; training indices are the remainder, kept
/// in shuffled order.
pub fn split(
    n: usize,
    test_fraction: f64,
    rng: &mut SplitMix64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let test_n = (n as f64 * test_fraction).ceil() as usize;
    if test_n == 0 || test_n >= n {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} leaves an empty split for n = {n}"
        )));
    }
    let mut perm = rng.shuffle_indices(n);
    let train = perm.split_off(test_n);
    Ok((train, perm))
}

/// Controls which rows the scaler statistics are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerFit {
    /// Fit on every row before splitting (the reproduced workflow's order).
    FullDataset,
    /// Fit on training rows only; avoids test-set leakage.
    TrainOnly,
}

/// Fully prepared dataset: scaled features, binary labels, and a fixed split.
#[derive(Debug, Clone)]
pub struct FlowDataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub scaler: ScalerParams,
    pub feature_names: Vec<String>,
}

impl FlowDataset {
    /// Scale and split cleaned data. `rng` drives only the split permutation.
    pub fn assemble(
        cleaned: CleanedData,
        test_fraction: f64,
        rng: &mut SplitMix64,
        scaler_fit: ScalerFit,
    ) -> Result<FlowDataset> {
        let n = cleaned.features.rows();
        if cleaned.labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} feature rows but {} labels",
                cleaned.labels.len()
            )));
        }
        let (train_indices, test_indices) = split(n, test_fraction, rng)?;
        let scaler = match scaler_fit {
            ScalerFit::FullDataset => fit_scaler(&cleaned.features)?,
            ScalerFit::TrainOnly => fit_scaler(&cleaned.features.gather_rows(&train_indices)?)?,
        };
        let features = transform(&cleaned.features, &scaler)?;
        Ok(FlowDataset {
            features,
            labels: cleaned.labels,
            train_indices,
            test_indices,
            scaler,
            feature_names: cleaned.feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn train_features(&self) -> Result<Matrix> {
        self.features.gather_rows(&self.train_indices)
    }

    pub fn test_features(&self) -> Result<Matrix> {
        self.features.gather_rows(&self.test_indices)
    }

    pub fn train_labels(&self) -> Vec<u8> {
        self.train_indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_labels(&self) -> Vec<u8> {
        self.test_indices.iter().map(|&i| self.labels[i]).collect()
    }
}
