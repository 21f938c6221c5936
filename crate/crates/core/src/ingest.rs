//! Tabular input, marginal standardization to the unit-Pareto scale and
//! selection of the extreme sub-sample.
//!
//! Margins are standardized with the empirical rule
//! `V = 1 / (1 - F(x))`, `F(x) = #{X < x} / n`, which gives
//! `V = n / (n - c)` where `c` is the number of strictly smaller values in the
//! column. Tied values share one rank.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("missing value at data row {row}, column `{column}`")]
    Missing { row: usize, column: String },
    #[error("non-finite value at data row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("dataset needs at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("{names} feature names for {cols} columns")]
    NameCount { names: usize, cols: usize },
    #[error("label column `{0}` not found in header")]
    UnknownLabelColumn(String),
    #[error("extreme quantile must lie in (0, 1), got {0}")]
    InvalidQuantile(f64),
    #[error("invalid extreme threshold: {0}")]
    InvalidThreshold(String),
    #[error("no row has a radius above the threshold {r0}")]
    EmptyExtremeSet { r0: f64 },
}

/// Observed feature matrix (`n x d`) with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    rows: Matrix,
    feature_names: Vec<String>,
}

impl RawDataset {
    pub fn new(rows: Matrix, feature_names: Vec<String>) -> Result<Self, IngestError> {
        if rows.nrows() < 2 {
            return Err(IngestError::TooFewRows {
                min: 2,
                got: rows.nrows(),
            });
        }
        if rows.ncols() == 0 {
            return Err(IngestError::NoFeatures);
        }
        if feature_names.len() != rows.ncols() {
            return Err(IngestError::NameCount {
                names: feature_names.len(),
                cols: rows.ncols(),
            });
        }
        for (i, row) in rows.rows_iter().enumerate() {
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(IngestError::NonFinite { row: i, column: j });
            }
        }
        Ok(Self {
            rows,
            feature_names,
        })
    }

    /// Builds a dataset with generated names `f1..fd`.
    pub fn unnamed(rows: Matrix) -> Result<Self, IngestError> {
        let names = (1..=rows.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(rows, names)
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }
}

/// Reads a headed CSV of numeric cells.
pub fn read_csv<R: Read>(reader: R) -> Result<RawDataset, IngestError> {
    read_csv_inner(reader, None).map(|(data, _)| data)
}

/// Reads a headed CSV whose column `label_column` holds class labels; the
/// remaining columns are the numeric features.
pub fn read_csv_with_labels<R: Read>(
    reader: R,
    label_column: &str,
) -> Result<(RawDataset, Vec<String>), IngestError> {
    read_csv_inner(reader, Some(label_column))
        .map(|(data, labels)| (data, labels.unwrap_or_default()))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<RawDataset, IngestError> {
    read_csv(std::fs::File::open(path)?)
}

fn read_csv_inner<R: Read>(
    reader: R,
    label_column: Option<&str>,
) -> Result<(RawDataset, Option<Vec<String>>), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| IngestError::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IngestError::UnknownLabelColumn(name.to_string()))?,
        ),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                if let Some(l) = labels.as_mut() {
                    l.push(cell.to_string());
                }
                continue;
            }
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
            {
                return Err(IngestError::Missing {
                    row: n,
                    column: header[j].clone(),
                });
            }
            let x: f64 = cell.parse().map_err(|_| IngestError::Parse {
                line,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            data.push(x);
        }
        n += 1;
    }
    let rows = Matrix::from_vec(n, names.len(), data);
    Ok((RawDataset::new(rows, names)?, labels))
}

/// Splits every feature into its positive and negative deviation from the
/// column mean: `max(x - mean, 0)` and `max(mean - x, 0)`.
pub fn sign_double(raw: &RawDataset) -> RawDataset {
    let (n, d) = (raw.n(), raw.d());
    let means: Vec<f64> = (0..d)
        .map(|j| raw.rows.rows_iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut out = Matrix::zeros(n, 2 * d);
    for (i, row) in raw.rows.rows_iter().enumerate() {
        for (j, (&x, &mean)) in row.iter().zip(&means).enumerate() {
            out.set(i, 2 * j, (x - mean).max(0.0));
            out.set(i, 2 * j + 1, (mean - x).max(0.0));
        }
    }
    let names = raw
        .feature_names
        .iter()
        .flat_map(|name| [format!("{name}+"), format!("{name}-")])
        .collect();
    RawDataset {
        rows: out,
        feature_names: names,
    }
}

/// How a [`StandardizedDataset`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Empirical strict-rank transform of raw features.
    EmpiricalRanks,
    /// Values supplied already on the unit-Pareto scale (e.g. simulated).
    Provided,
}

/// Data on the unit-Pareto scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDataset {
    pub v: Matrix,
    pub feature_names: Vec<String>,
    pub source: Standardization,
}

impl StandardizedDataset {
    /// Wraps values that are already on the unit-Pareto scale.
    pub fn provided(v: Matrix, feature_names: Vec<String>) -> Self {
        Self {
            v,
            feature_names,
            source: Standardization::Provided,
        }
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn d(&self) -> usize {
        self.v.ncols()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.v.row_sums()
    }
}

/// Sorted training columns; used to standardize training and new data alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMargins {
    sorted: Vec<Vec<f64>>,
}

impl EmpiricalMargins {
    pub fn fit(raw: &RawDataset) -> Self {
        let sorted = (0..raw.d())
            .into_par_iter()
            .map(|j| {
                let mut col = raw.rows.column(j);
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        Self { sorted }
    }

    pub fn n(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    fn strict_rank(&self, j: usize, x: f64) -> usize {
        self.sorted[j].partition_point(|&y| y < x)
    }

    /// Training-sample transform `n / (n - c)`.
    fn training_value(&self, j: usize, x: f64) -> f64 {
        let n = self.n() as f64;
        n / (n - self.strict_rank(j, x) as f64)
    }

    /// Transform for an observation outside the training sample. Uses
    /// `(n + 1) / (n + 1 - c)` so values above the training maximum stay
    /// finite (they map to `n + 1`).
    pub fn transform_value(&self, j: usize, x: f64) -> f64 {
        let n1 = self.n() as f64 + 1.0;
        n1 / (n1 - self.strict_rank(j, x) as f64)
    }

    /// Standardizes new rows with the training margins.
    pub fn transform(&self, raw: &RawDataset) -> StandardizedDataset {
        let mut v = Matrix::zeros(raw.n(), raw.d());
        for (i, row) in raw.rows.rows_iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                v.set(i, j, self.transform_value(j, x));
            }
        }
        StandardizedDataset {
            v,
            feature_names: raw.feature_names.clone(),
            source: Standardization::EmpiricalRanks,
        }
    }
}

/// Empirical unit-Pareto standardization of every column.
pub fn empirical_pareto_transform(raw: &RawDataset) -> StandardizedDataset {
    let margins = EmpiricalMargins::fit(raw);
    let (n, d) = (raw.n(), raw.d());
    let columns: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| margins.training_value(j, raw.rows.get(i, j)))
                .collect()
        })
        .collect();
    let mut v = Matrix::zeros(n, d);
    for (j, col) in columns.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            v.set(i, j, x);
        }
    }
    StandardizedDataset {
        v,
        feature_names: raw.feature_names.clone(),
        source: Standardization::EmpiricalRanks,
    }
}

/// Radial threshold rule for [`select_extremes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `r0` is the empirical quantile (linear interpolation) of the radii.
    Quantile(f64),
    /// `r0` given directly, in sum-norm units.
    Absolute(f64),
    /// `r0` is the `(n0 + 1)`-th largest radius, so at most `n0` rows survive.
    Top(usize),
}

/// Default quantile `1 - k/n` with `k = ceil(sqrt(n))`.
pub fn default_extreme_quantile(n: usize) -> f64 {
    let k = (n as f64).sqrt().ceil();
    1.0 - k / n as f64
}

/// Rows whose sum-norm radius exceeds `r0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSubset {
    pub indices: Vec<usize>,
    pub r0: f64,
    pub n0: usize,
}

impl ExtremeSubset {
    /// Extracts the selected rows.
    pub fn rows(&self, data: &StandardizedDataset) -> Matrix {
        data.v.select_rows(&self.indices)
    }
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn select_extremes(
    data: &StandardizedDataset,
    threshold: Threshold,
) -> Result<ExtremeSubset, IngestError> {
    let radii = data.radii();
    if radii.is_empty() {
        return Err(IngestError::TooFewRows { min: 1, got: 0 });
    }
    // Top(n0) with n0 >= n keeps every row and uses the smallest radius as
    // the scale, so that point sits on the boundary rather than above it
    let mut inclusive = false;
    let r0 = match threshold {
        Threshold::Quantile(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(IngestError::InvalidQuantile(q));
            }
            let mut sorted = radii.clone();
            sorted.sort_by(f64::total_cmp);
            interpolated_quantile(&sorted, q)
        }
        Threshold::Absolute(r0) => {
            if !r0.is_finite() || r0 < 0.0 {
                return Err(IngestError::InvalidThreshold(format!("r0 = {r0}")));
            }
            r0
        }
        Threshold::Top(n0) => {
            if n0 == 0 {
                return Err(IngestError::InvalidThreshold("top-n0 with n0 = 0".into()));
            }
            if n0 >= radii.len() {
                inclusive = true;
                radii.iter().copied().fold(f64::INFINITY, f64::min)
            } else {
                let mut sorted = radii.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                sorted[n0]
            }
        }
    };
    let indices: Vec<usize> = radii
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > r0 || (inclusive && r == r0))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(IngestError::EmptyExtremeSet { r0 });
    }
    Ok(ExtremeSubset {
        n0: indices.len(),
        indices,
        r0,
    })
}
