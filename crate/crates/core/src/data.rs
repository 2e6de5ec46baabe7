//! Dataset ingestion and preprocessing: CSV loading, categorical encoding,
//! standardization, a shared PCA basis, owner partitioning, and synthetic
//! instances with a known generating model.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{dot, top_eigenpairs, Matrix};
use crate::model::{Dataset, LossKind, ModelParams, Record};

pub const PCA_TOL: f64 = 1e-10;
pub const PCA_MAX_ITER: usize = 10_000;
/// Records used to fit preprocessing when no range is given (taken from the end).
pub const DEFAULT_FIT_RECORDS: usize = 10_000;
/// Synthetic SVM points closer than this to the separating hyperplane are dropped.
pub const SVM_MARGIN_FILTER: f64 = 0.1;

/// Text cells under a header. Rectangular.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::RaggedRow { line: i + 2, expected: columns.len(), found: row.len() });
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    /// Keeps `columns`, in the given order.
    pub fn select(&self, columns: &[&str]) -> Result<Self> {
        let idx = columns.iter().map(|c| self.column_index(c)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j].clone()).collect()).collect(),
        })
    }

    /// Converts to a dataset with the given feature columns and target.
    pub fn to_dataset(&self, target: &str, features: &[&str]) -> Result<Dataset> {
        let parse = |column: &str, v: &str| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::NotNumeric { column: column.to_string(), value: v.to_string() })
        };
        let t = self.column_index(target)?;
        let f = features.iter().map(|c| self.column_index(c)).collect::<Result<Vec<_>>>()?;
        let records = self
            .rows
            .iter()
            .map(|row| {
                let x = f.iter().zip(features).map(|(&j, name)| parse(name, &row[j])).collect::<Result<Vec<_>>>()?;
                Ok(Record::new(x, parse(target, &row[t])?))
            })
            .collect::<Result<Vec<_>>>()?;
        if records.is_empty() {
            return Err(Error::EmptyTable);
        }
        Dataset::new(records)
    }
}

/// Reads a comma-separated file with a header row and keeps the requested
/// feature columns followed by the target column.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, feature_columns: &[&str]) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let columns: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(Error::RaggedRow { line: i + 2, expected: columns.len(), found: rec.len() });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut wanted: Vec<&str> = feature_columns.to_vec();
    wanted.push(target_column);
    RawTable { columns, rows }.select(&wanted)
}

/// Replaces string values in `columns` by integer codes in order of first
/// appearance, starting at 0. Columns whose cells all parse as numbers are
/// left unchanged.
pub fn encode_categoricals(mut table: RawTable, columns: &[&str]) -> Result<RawTable> {
    for name in columns {
        let j = table.column_index(name)?;
        if table.rows.iter().all(|r| r[j].trim().parse::<f64>().is_ok()) {
            continue;
        }
        let mut codes: HashMap<String, usize> = HashMap::new();
        for row in &mut table.rows {
            let next = codes.len();
            let code = *codes.entry(row[j].clone()).or_insert(next);
            row[j] = code.to_string();
        }
    }
    Ok(table)
}

fn check_subset(subset: &Range<usize>, len: usize) -> Result<()> {
    if subset.start >= subset.end || subset.end > len {
        return Err(Error::InvalidParameter(format!("fit subset {subset:?} invalid for {len} records")));
    }
    Ok(())
}

/// The last `min(10⁴, count)` records.
pub fn default_fit_subset(count: usize) -> Range<usize> {
    count - count.min(DEFAULT_FIT_RECORDS)..count
}

/// Per-feature affine map to zero mean and unit variance on the fit subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviations; constant features keep scale 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset, fit_subset: Range<usize>) -> Result<Self> {
        check_subset(&fit_subset, data.len())?;
        let rows = &data.records()[fit_subset];
        let m = rows.len() as f64;
        let p = data.feature_dim();
        let mut mean = vec![0.0; p];
        for r in rows {
            mean.iter_mut().zip(&r.x).for_each(|(a, x)| *a += x / m);
        }
        let mut var = vec![0.0; p];
        for r in rows {
            var.iter_mut().zip(r.x.iter().zip(&mean)).for_each(|(v, (x, mu))| *v += (x - mu).powi(2) / m);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        ensure_dim(self.mean.len(), data.feature_dim())?;
        let records = data
            .records()
            .iter()
            .map(|r| {
                let x = r.x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect();
                Record::new(x, r.y)
            })
            .collect();
        Dataset::new(records)
    }
}

/// Shared feature basis: `vectors[i]` is the i-th principal direction (unit
/// norm), `values` are the matching covariance eigenvalues, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl PcaBasis {
    pub fn components(&self) -> usize {
        self.vectors.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.mean.len(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.vectors.iter().map(|v| dot(v, &centered)).collect())
    }

    /// Inverse of [`PcaBasis::project`] on the span of the basis.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.components(), z.len())?;
        let mut x = self.mean.clone();
        for (c, v) in z.iter().zip(&self.vectors) {
            x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
        }
        Ok(x)
    }
}

/// Top-`k` principal components of the records in `fit_subset`, using the
/// population covariance.
pub fn pca_fit(data: &Dataset, k: usize, fit_subset: Range<usize>) -> Result<PcaBasis> {
    let p = data.feature_dim();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("cannot extract {k} components from {p} features")));
    }
    check_subset(&fit_subset, data.len())?;
    let rows = &data.records()[fit_subset];
    let m = rows.len() as f64;
    let mut mean = vec![0.0; p];
    for r in rows {
        mean.iter_mut().zip(&r.x).for_each(|(a, x)| *a += x / m);
    }
    let centered: Vec<Vec<f64>> =
        rows.iter().map(|r| r.x.iter().zip(&mean).map(|(x, mu)| x - mu).collect()).collect();
    let cov = Matrix::gram(p, centered.iter().map(Vec::as_slice), 1.0 / m);

    let mut pairs = top_eigenpairs(&cov, k, PCA_TOL, PCA_MAX_ITER);
    pairs.sort_by(|a, b| b.value.total_cmp(&a.value));
    let mut vectors = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for mut pair in pairs {
        // First nonzero component positive.
        if let Some(&lead) = pair.vector.iter().find(|c| c.abs() > 1e-12) {
            if lead < 0.0 {
                pair.vector.iter_mut().for_each(|c| *c = -*c);
            }
        }
        values.push(pair.value.max(0.0));
        vectors.push(pair.vector);
    }
    Ok(PcaBasis { mean, vectors, values })
}

/// Maps every `x` to its coordinates in `basis`; targets are unchanged.
pub fn pca_transform(basis: &PcaBasis, data: &Dataset) -> Result<Dataset> {
    let records = data
        .records()
        .iter()
        .map(|r| Ok(Record::new(basis.project(&r.x)?, r.y)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records)
}

/// Consecutive index ranges of the given sizes, starting at 0.
pub fn partition_ranges(sizes: &[usize], available: usize) -> Result<Vec<Range<usize>>> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidParameter("shard sizes must be a non-empty list of positive integers".into()));
    }
    let requested: usize = sizes.iter().sum();
    if requested > available {
        return Err(Error::PartitionTooLarge { requested, available });
    }
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect())
}

/// Splits the leading records into contiguous, order-preserving shards.
/// Records past `Σ sizes` are dropped.
pub fn partition(data: &Dataset, sizes: &[usize]) -> Result<Vec<(Dataset, Range<usize>)>> {
    partition_ranges(sizes, data.len())?
        .into_iter()
        .map(|r| Ok((Dataset::new(data.records()[r.clone()].to_vec())?, r)))
        .collect()
}

/// A synthetic instance together with its generating parameters.
///
/// Regression: `x ~ U[−1, 1]^p`, `y = θᵀx + N(0, noise_sd²)`.
/// SVM: `y = sign(θᵀ[x; 1])`, rejecting points with `|θᵀ[x; 1]| < 0.1`.
/// `θ` is drawn from `U[−1, 1]` per coordinate. Deterministic in `seed`.
pub fn synth_instance(kind: LossKind, n: usize, p: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, ModelParams)> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("synthetic instances need n, p ≥ 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise_sd must be non-negative, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = match kind {
        LossKind::LinearRegression => p,
        LossKind::LinearSvm => p + 1,
    };
    let theta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut records = Vec::with_capacity(n);
    let max_draws = n.saturating_mul(10_000);
    let mut draws = 0usize;
    while records.len() < n {
        draws += 1;
        if draws > max_draws {
            return Err(Error::InvalidParameter("generating model leaves no points outside the margin".into()));
        }
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..=1.0)).collect();
        match kind {
            LossKind::LinearRegression => {
                let e: f64 = rng.sample(StandardNormal);
                let y = dot(&theta, &x) + noise_sd * e;
                records.push(Record::new(x, y));
            }
            LossKind::LinearSvm => {
                let margin = dot(&theta[..p], &x) + theta[p];
                if margin.abs() >= SVM_MARGIN_FILTER {
                    records.push(Record::new(x, margin.signum()));
                }
            }
        }
    }
    Ok((Dataset::new(records)?, ModelParams::new(theta)?))
}

/// Writes a dataset as CSV with columns `x0..x{p-1},y`.
pub fn write_dataset_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header: Vec<String> = (0..data.feature_dim()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for r in data.records() {
        let mut row: Vec<String> = r.x.iter().map(f64::to_string).collect();
        row.push(r.y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_dataset_csv`] (last column is the target).
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if columns.len() < 2 {
        return Err(Error::InvalidParameter("dataset CSV needs at least one feature and a target".into()));
    }
    let (target, features) = columns.split_last().expect("checked length");
    let features: Vec<&str> = features.iter().map(String::as_str).collect();
    load_csv(path, target, &features)?.to_dataset(target, &features)
}

/// Settings for the ingestion pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub path: String,
    pub target: String,
    pub features: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Number of principal components to keep; `None` keeps raw features.
    #[serde(default)]
    pub pca_components: Option<usize>,
    /// Fit range for standardization and PCA; defaults to the last 10⁴ records.
    #[serde(default)]
    pub fit_range: Option<Range<usize>>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub standardizer: Option<Standardizer>,
    pub basis: Option<PcaBasis>,
}

impl Prepared {
    /// Writes `dataset.csv`, plus `pca_basis.json` and `standardizer.json`
    /// when present.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_dataset_csv(&self.dataset, dir.join("dataset.csv"))?;
        if let Some(b) = &self.basis {
            File::create(dir.join("pca_basis.json"))?.write_all(serde_json::to_string_pretty(b)?.as_bytes())?;
        }
        if let Some(s) = &self.standardizer {
            File::create(dir.join("standardizer.json"))?.write_all(serde_json::to_string_pretty(s)?.as_bytes())?;
        }
        Ok(())
    }
}

/// Load, encode, standardize, and optionally project onto a shared PCA basis.
pub fn prepare(cfg: &PrepConfig) -> Result<Prepared> {
    let features: Vec<&str> = cfg.features.iter().map(String::as_str).collect();
    let categorical: Vec<&str> = cfg.categorical.iter().map(String::as_str).collect();
    let table = load_csv(&cfg.path, &cfg.target, &features)?;
    let table = encode_categoricals(table, &categorical)?;
    let mut dataset = table.to_dataset(&cfg.target, &features)?;
    let fit = cfg.fit_range.clone().unwrap_or_else(|| default_fit_subset(dataset.len()));
    let standardizer = if cfg.standardize {
        let s = Standardizer::fit(&dataset, fit.clone())?;
        dataset = s.apply(&dataset)?;
        Some(s)
    } else {
        None
    };
    let basis = match cfg.pca_components {
        Some(k) => {
            let b = pca_fit(&dataset, k, fit)?;
            dataset = pca_transform(&b, &dataset)?;
            Some(b)
        }
        None => None,
    };
    Ok(Prepared { dataset, standardizer, basis })
}
