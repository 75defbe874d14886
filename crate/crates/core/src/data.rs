//! Synthetic Gaussian scenario generation, fault injection by concatenation,
//! standardization, and CSV ingestion for external process datasets.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fault onset {onset} is out of bounds for {len} samples")]
    OnsetOutOfBounds { onset: usize, len: usize },
    #[error("line {line}: expected {expected} columns, found {got}")]
    RaggedRow { line: usize, expected: usize, got: usize },
    #[error("line {line}, column {column}: cell `{cell}` is not a finite number")]
    BadCell { line: usize, column: usize, cell: String },
    #[error("column selection matched nothing")]
    EmptySelection,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column index {index} out of range for {cols} columns (indices are 1-based)")]
    ColumnOutOfRange { index: usize, cols: usize },
    #[error("dimension {dim} has zero variance; cannot standardize")]
    ZeroVariance { dim: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Time-ordered measurement vectors with an optional fault onset. Samples
/// strictly before the onset are normal, at-and-after it faulty.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    values: Matrix,
    fault_onset: Option<usize>,
    variable_names: Option<Vec<String>>,
}

impl TimeSeriesDataset {
    pub fn new(
        values: Matrix,
        fault_onset: Option<usize>,
        variable_names: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        if let Some(onset) = fault_onset {
            if onset == 0 || onset >= values.rows() {
                return Err(DataError::OnsetOutOfBounds {
                    onset,
                    len: values.rows(),
                });
            }
        }
        if let Some(names) = &variable_names {
            if names.len() != values.cols() {
                return Err(DataError::DimensionMismatch {
                    expected: values.cols(),
                    got: names.len(),
                });
            }
        }
        if !values.is_finite() {
            return Err(DataError::InvalidSpec("values contain non-finite entries".into()));
        }
        Ok(Self {
            values,
            fault_onset,
            variable_names,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn fault_onset(&self) -> Option<usize> {
        self.fault_onset
    }

    pub fn with_fault_onset(mut self, onset: Option<usize>) -> Result<Self, DataError> {
        if let Some(o) = onset {
            if o == 0 || o >= self.len() {
                return Err(DataError::OnsetOutOfBounds { onset: o, len: self.len() });
            }
        }
        self.fault_onset = onset;
        Ok(self)
    }

    pub fn variable_names(&self) -> Option<&[String]> {
        self.variable_names.as_deref()
    }

    /// Rows strictly before the fault onset (the whole series if no onset).
    pub fn normal_segment(&self) -> Matrix {
        match self.fault_onset {
            Some(onset) => self.values.slice_rows(0, onset),
            None => self.values.clone(),
        }
    }

    /// Rows at and after the fault onset, if any.
    pub fn fault_segment(&self) -> Option<Matrix> {
        self.fault_onset
            .map(|onset| self.values.slice_rows(onset, self.values.rows()))
    }
}

/// Diagonal Gaussian over `dim` dimensions: `n` i.i.d. draws, seeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl GaussianSpec {
    /// Same scalar mean and std broadcast over every dimension.
    pub fn isotropic(mean: f64, std: f64, dim: usize, n: usize, seed: u64) -> Self {
        Self {
            mean: vec![mean; dim],
            std: vec![std; dim],
            n,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.mean.is_empty() {
            return Err(DataError::InvalidSpec("dimension must be positive".into()));
        }
        if self.mean.len() != self.std.len() {
            return Err(DataError::DimensionMismatch {
                expected: self.mean.len(),
                got: self.std.len(),
            });
        }
        if let Some(bad) = self.std.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(DataError::InvalidSpec(format!("std must be > 0, got {bad}")));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(DataError::InvalidSpec("mean must be finite".into()));
        }
        Ok(())
    }

    /// The same distribution shifted by `shift` in every dimension.
    pub fn shifted(&self, shift: f64, n: usize, seed: u64) -> Self {
        Self {
            mean: self.mean.iter().map(|m| m + shift).collect(),
            std: self.std.clone(),
            n,
            seed,
        }
    }
}

/// Mean-shift fault presets: small, medium, and large deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultPreset {
    F1,
    F2,
    F3,
}

impl FaultPreset {
    pub const ALL: [FaultPreset; 3] = [FaultPreset::F1, FaultPreset::F2, FaultPreset::F3];

    /// Mean shift in units of the normal standard deviation.
    pub fn shift(self) -> f64 {
        match self {
            FaultPreset::F1 => 0.5,
            FaultPreset::F2 => 1.0,
            FaultPreset::F3 => 2.0,
        }
    }
}

impl fmt::Display for FaultPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultPreset::F1 => write!(f, "f1"),
            FaultPreset::F2 => write!(f, "f2"),
            FaultPreset::F3 => write!(f, "f3"),
        }
    }
}

impl FromStr for FaultPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(FaultPreset::F1),
            "f2" => Ok(FaultPreset::F2),
            "f3" => Ok(FaultPreset::F3),
            other => Err(format!("unknown fault preset `{other}` (expected f1, f2, or f3)")),
        }
    }
}

fn draw_rows(spec: &GaussianSpec) -> Matrix {
    let dim = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(spec.n * dim);
    for _ in 0..spec.n {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(spec.mean[j] + spec.std[j] * z);
        }
    }
    Matrix::from_vec(spec.n, dim, data).expect("draw shape is consistent")
}

/// `n` i.i.d. draws from the diagonal Gaussian; deterministic given the seed.
pub fn generate_gaussian(spec: &GaussianSpec) -> Result<TimeSeriesDataset, DataError> {
    spec.validate()?;
    TimeSeriesDataset::new(draw_rows(spec), None, None)
}

/// Concatenates the first `onset` rows of `normal` with fresh draws from
/// `fault_spec` along the time axis. Pre-onset rows are preserved bit-exactly
/// and `fault_onset` is set to `onset`.
pub fn inject_fault(
    normal: &TimeSeriesDataset,
    fault_spec: &GaussianSpec,
    onset: usize,
) -> Result<TimeSeriesDataset, DataError> {
    fault_spec.validate()?;
    if fault_spec.dim() != normal.dim() {
        return Err(DataError::DimensionMismatch {
            expected: normal.dim(),
            got: fault_spec.dim(),
        });
    }
    if onset == 0 || onset > normal.len() {
        return Err(DataError::OnsetOutOfBounds {
            onset,
            len: normal.len(),
        });
    }
    let dim = normal.dim();
    let mut data = Vec::with_capacity((onset + fault_spec.n) * dim);
    data.extend_from_slice(&normal.values().data()[..onset * dim]);
    let fault_rows = draw_rows(fault_spec);
    data.extend_from_slice(fault_rows.data());
    let values = Matrix::from_vec(onset + fault_spec.n, dim, data).expect("concat shape");
    TimeSeriesDataset::new(values, Some(onset), normal.variable_names.clone())
}

/// Per-dimension affine standardization fitted on normal data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits mean and standard deviation per dimension. When the dataset has a
/// fault onset, only the pre-onset rows are used.
pub fn fit_scaler(dataset: &TimeSeriesDataset) -> Result<Scaler, DataError> {
    let normal = dataset.normal_segment();
    let rows = normal.rows();
    if rows == 0 {
        return Err(DataError::InvalidSpec("cannot fit a scaler on an empty dataset".into()));
    }
    let dim = normal.cols();
    let mut mean = vec![0.0; dim];
    for r in 0..rows {
        for (m, v) in mean.iter_mut().zip(normal.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut var = vec![0.0; dim];
    for r in 0..rows {
        for j in 0..dim {
            let d = normal.get(r, j) - mean[j];
            var[j] += d * d;
        }
    }
    let mut std = vec![0.0; dim];
    for (j, (s, v)) in std.iter_mut().zip(&var).enumerate() {
        *s = (v / rows as f64).sqrt();
        if *s < 1e-12 {
            return Err(DataError::ZeroVariance { dim: j });
        }
    }
    Ok(Scaler { mean, std })
}

impl Scaler {
    fn check_dim(&self, dim: usize) -> Result<(), DataError> {
        if dim != self.mean.len() {
            return Err(DataError::DimensionMismatch {
                expected: self.mean.len(),
                got: dim,
            });
        }
        Ok(())
    }

    /// `(x - mean) / std` per dimension; onset and names carry through.
    pub fn apply(&self, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DataError> {
        self.check_dim(dataset.dim())?;
        let mut values = dataset.values.clone();
        for r in 0..values.rows() {
            let row = values.row_mut(r);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        TimeSeriesDataset::new(values, dataset.fault_onset, dataset.variable_names.clone())
    }

    /// Inverse of [`Self::apply`].
    pub fn invert(&self, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DataError> {
        self.check_dim(dataset.dim())?;
        let mut values = dataset.values.clone();
        for r in 0..values.rows() {
            let row = values.row_mut(r);
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        TimeSeriesDataset::new(values, dataset.fault_onset, dataset.variable_names.clone())
    }
}

/// Which CSV columns to ingest. Indices and ranges are 1-based, matching the
/// usual numbering of process variables.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSelection {
    #[default]
    All,
    /// 1-based inclusive range, e.g. `1:22`.
    Range { start: usize, end: usize },
    /// 1-based indices.
    Indices(Vec<usize>),
    Names(Vec<String>),
}

impl FromStr for ColumnSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("all") {
            return Ok(ColumnSelection::All);
        }
        if let Some((a, b)) = s.split_once(':') {
            let start: usize = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
            let end: usize = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
            if start == 0 || end < start {
                return Err(format!("invalid 1-based range `{s}`"));
            }
            return Ok(ColumnSelection::Range { start, end });
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.iter().all(|p| p.parse::<usize>().is_ok()) {
            let indices: Vec<usize> = parts.iter().map(|p| p.parse().unwrap()).collect();
            if indices.contains(&0) {
                return Err("column indices are 1-based".into());
            }
            Ok(ColumnSelection::Indices(indices))
        } else {
            Ok(ColumnSelection::Names(parts.iter().map(|p| p.to_string()).collect()))
        }
    }
}

impl ColumnSelection {
    /// Resolves to 0-based column indices against the file layout.
    fn resolve(&self, cols: usize, names: Option<&[String]>) -> Result<Vec<usize>, DataError> {
        let out: Vec<usize> = match self {
            ColumnSelection::All => (0..cols).collect(),
            ColumnSelection::Range { start, end } => {
                if *end > cols {
                    return Err(DataError::ColumnOutOfRange { index: *end, cols });
                }
                (start - 1..*end).collect()
            }
            ColumnSelection::Indices(indices) => {
                let mut out = Vec::with_capacity(indices.len());
                for &i in indices {
                    if i == 0 || i > cols {
                        return Err(DataError::ColumnOutOfRange { index: i, cols });
                    }
                    out.push(i - 1);
                }
                out
            }
            ColumnSelection::Names(wanted) => {
                let names = names.ok_or_else(|| {
                    DataError::InvalidSpec("column names requested but the file has no header".into())
                })?;
                let mut out = Vec::with_capacity(wanted.len());
                for w in wanted {
                    let idx = names
                        .iter()
                        .position(|n| n == w)
                        .ok_or_else(|| DataError::UnknownColumn(w.clone()))?;
                    out.push(idx);
                }
                out
            }
        };
        if out.is_empty() {
            return Err(DataError::EmptySelection);
        }
        Ok(out)
    }
}

/// Sidecar options for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub has_header: bool,
    pub columns: ColumnSelection,
    pub fault_onset: Option<usize>,
    /// Optional additive Gaussian white noise applied after loading.
    pub noise_std: Option<f64>,
    pub noise_seed: u64,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            columns: ColumnSelection::All,
            fault_onset: None,
            noise_std: None,
            noise_seed: 0,
        }
    }
}

/// Loads a comma-separated file of time-ordered samples. Rows with ragged
/// widths or non-finite cells are rejected with their line number.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<TimeSeriesDataset, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .from_reader(file);

    let header: Option<Vec<String>> = if options.has_header {
        Some(reader.headers()?.iter().map(|h| h.trim().to_string()).collect())
    } else {
        None
    };

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let header_lines = usize::from(options.has_header);
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 1 + header_lines;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::RaggedRow {
                line,
                expected,
                got: record.len(),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .trim()
                .parse()
                .map_err(|_| DataError::BadCell {
                    line,
                    column: c + 1,
                    cell: cell.to_string(),
                })?;
            if !value.is_finite() {
                return Err(DataError::BadCell {
                    line,
                    column: c + 1,
                    cell: cell.to_string(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    let cols = width.unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(DataError::InvalidSpec(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let selected = options.columns.resolve(cols, header.as_deref())?;
    let names = header.map(|h| selected.iter().map(|&i| h[i].clone()).collect::<Vec<_>>());

    let mut data = Vec::with_capacity(rows.len() * selected.len());
    for row in &rows {
        for &c in &selected {
            data.push(row[c]);
        }
    }
    let mut values = Matrix::from_vec(rows.len(), selected.len(), data).expect("selection shape");

    if let Some(std) = options.noise_std {
        if std < 0.0 || !std.is_finite() {
            return Err(DataError::InvalidSpec(format!("noise_std must be >= 0, got {std}")));
        }
        if std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(options.noise_seed);
            for v in values.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += std * z;
            }
        }
    }

    TimeSeriesDataset::new(values, options.fault_onset, names)
}

/// Formats a float with 17 significant digits, enough to reparse the exact
/// same f64.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Writes the dataset as CSV with a header row. Floats carry 17 significant
/// digits so a round-trip reproduces them exactly.
pub fn export_csv(dataset: &TimeSeriesDataset, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    let names: Vec<String> = match dataset.variable_names() {
        Some(names) => names.to_vec(),
        None => (1..=dataset.dim()).map(|i| format!("x{i}")).collect(),
    };
    let io_err = |source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    writeln!(out, "{}", names.join(",")).map_err(io_err)?;
    for r in 0..dataset.len() {
        let row: Vec<String> = dataset.values().row(r).iter().map(|v| format_f64(*v)).collect();
        writeln!(out, "{}", row.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn generate_produces_requested_shape() {
        let spec = GaussianSpec::isotropic(2.0, 1.0, 16, 10_000, 7);
        let data = generate_gaussian(&spec).unwrap();
        assert_eq!((data.len(), data.dim()), (10_000, 16));
    }

    #[test]
    fn generation_is_deterministic_given_seed() {
        let spec = GaussianSpec::isotropic(2.0, 1.0, 4, 50, 11);
        assert_eq!(generate_gaussian(&spec).unwrap(), generate_gaussian(&spec).unwrap());
    }

    #[test]
    fn sample_mean_is_close_to_spec_mean() {
        // CLT bound: sigma/sqrt(n) = 0.01, allow 4 sigma.
        let spec = GaussianSpec::isotropic(2.0, 1.0, 16, 10_000, 3);
        let data = generate_gaussian(&spec).unwrap();
        for j in 0..16 {
            let mean: f64 =
                (0..data.len()).map(|r| data.values().get(r, j)).sum::<f64>() / data.len() as f64;
            assert!((mean - 2.0).abs() < 0.04, "dim {j}: mean {mean}");
        }
    }

    #[test]
    fn non_positive_std_is_rejected() {
        let spec = GaussianSpec::isotropic(0.0, -1.0, 2, 10, 0);
        assert!(generate_gaussian(&spec).is_err());
        let spec = GaussianSpec::isotropic(0.0, 0.0, 2, 10, 0);
        assert!(generate_gaussian(&spec).is_err());
    }

    #[test]
    fn inject_fault_preserves_pre_onset_rows_bit_exactly() {
        let normal = generate_gaussian(&GaussianSpec::isotropic(2.0, 1.0, 3, 200, 5)).unwrap();
        let fault = GaussianSpec::isotropic(2.5, 1.0, 3, 150, 6);
        let injected = inject_fault(&normal, &fault, 100).unwrap();
        assert_eq!(injected.len(), 250);
        assert_eq!(injected.fault_onset(), Some(100));
        for r in 0..100 {
            assert_eq!(injected.values().row(r), normal.values().row(r));
        }
    }

    #[test]
    fn single_faulty_row_at_the_boundary() {
        let normal = generate_gaussian(&GaussianSpec::isotropic(0.0, 1.0, 2, 10, 1)).unwrap();
        let fault = GaussianSpec::isotropic(5.0, 1.0, 2, 1, 2);
        let injected = inject_fault(&normal, &fault, 10).unwrap();
        assert_eq!(injected.len(), 11);
        assert_eq!(injected.fault_onset(), Some(10));
        assert_eq!(injected.fault_segment().unwrap().rows(), 1);
    }

    #[test]
    fn identical_fault_spec_is_statistically_indistinguishable() {
        let spec = GaussianSpec::isotropic(1.0, 1.0, 4, 4000, 9);
        let normal = generate_gaussian(&spec).unwrap();
        let injected = inject_fault(&normal, &spec.shifted(0.0, 4000, 10), 2000).unwrap();
        let pre = injected.normal_segment();
        let post = injected.fault_segment().unwrap();
        for j in 0..4 {
            let m1: f64 = (0..pre.rows()).map(|r| pre.get(r, j)).sum::<f64>() / pre.rows() as f64;
            let m2: f64 = (0..post.rows()).map(|r| post.get(r, j)).sum::<f64>() / post.rows() as f64;
            // Two-sample mean difference ~ N(0, 2/n); allow 4 sigma.
            let bound = 4.0 * (2.0f64 / 2000.0).sqrt();
            assert!((m1 - m2).abs() < bound, "dim {j}: {m1} vs {m2}");
        }
    }

    #[test]
    fn fault_presets_carry_the_documented_shifts() {
        assert_eq!(FaultPreset::F1.shift(), 0.5);
        assert_eq!(FaultPreset::F2.shift(), 1.0);
        assert_eq!(FaultPreset::F3.shift(), 2.0);
        assert_eq!("f2".parse::<FaultPreset>().unwrap(), FaultPreset::F2);
    }

    #[test]
    fn scaler_roundtrip_recovers_values() {
        let data = generate_gaussian(&GaussianSpec::isotropic(2.0, 1.5, 3, 500, 21)).unwrap();
        let scaler = fit_scaler(&data).unwrap();
        let scaled = scaler.apply(&data).unwrap();
        let restored = scaler.invert(&scaled).unwrap();
        for (a, b) in restored.values().data().iter().zip(data.values().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_estimates_the_generating_moments() {
        let data = generate_gaussian(&GaussianSpec::isotropic(2.0, 1.0, 4, 20_000, 13)).unwrap();
        let scaler = fit_scaler(&data).unwrap();
        for j in 0..4 {
            assert!((scaler.mean[j] - 2.0).abs() < 0.05);
            assert!((scaler.std[j] - 1.0).abs() < 0.05);
        }
        let scaled = scaler.apply(&data).unwrap();
        let refit = fit_scaler(&scaled).unwrap();
        for j in 0..4 {
            assert!(refit.mean[j].abs() < 1e-9);
            assert!((refit.std[j] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaler_rejects_constant_column() {
        let values = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 4.0]]).unwrap();
        let data = TimeSeriesDataset::new(values, None, None).unwrap();
        match fit_scaler(&data) {
            Err(DataError::ZeroVariance { dim }) => assert_eq!(dim, 0),
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn scaler_fits_on_normal_segment_only() {
        let normal = generate_gaussian(&GaussianSpec::isotropic(0.0, 1.0, 2, 3000, 31)).unwrap();
        let fault = GaussianSpec::isotropic(50.0, 1.0, 2, 3000, 32);
        let injected = inject_fault(&normal, &fault, 3000).unwrap();
        let scaler = fit_scaler(&injected).unwrap();
        assert!(scaler.mean[0].abs() < 0.1, "fault rows leaked into the fit");
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let data = generate_gaussian(&GaussianSpec::isotropic(2.0, 1.0, 3, 40, 17)).unwrap();
        export_csv(&data, &path).unwrap();
        let loaded = load_csv(&path, &CsvOptions::default()).unwrap();
        assert_eq!(loaded.values(), data.values());
        assert_eq!(
            loaded.variable_names().unwrap(),
            &["x1".to_string(), "x2".into(), "x3".into()]
        );
    }

    #[test]
    fn small_csv_with_header_loads() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n3.0,4.0\n5.5,6.5\n").unwrap();
        let data = load_csv(&path, &CsvOptions::default()).unwrap();
        assert_eq!((data.len(), data.dim()), (3, 2));
        assert_eq!(data.variable_names().unwrap(), &["a".to_string(), "b".into()]);
        assert_eq!(data.values().get(2, 1), 6.5);
    }

    #[test]
    fn column_range_selection_takes_first_22_of_52() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("wide.csv");
        let mut content = String::new();
        for r in 0..5 {
            let row: Vec<String> = (0..52).map(|c| format!("{}", r * 52 + c)).collect();
            content.push_str(&row.join(","));
            content.push('\n');
        }
        std::fs::write(&path, content).unwrap();
        let options = CsvOptions {
            has_header: false,
            columns: "1:22".parse().unwrap(),
            ..CsvOptions::default()
        };
        let data = load_csv(&path, &options).unwrap();
        assert_eq!((data.len(), data.dim()), (5, 22));
        assert_eq!(data.values().get(1, 0), 52.0);
        assert_eq!(data.values().get(1, 21), 73.0);
    }

    #[test]
    fn nan_cell_is_rejected_with_row_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\nNaN,4.0\n").unwrap();
        match load_csv(&path, &CsvOptions::default()) {
            Err(DataError::BadCell { line, column, .. }) => {
                assert_eq!((line, column), (3, 1));
            }
            other => panic!("expected bad-cell error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_rejected_with_row_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n3.0\n").unwrap();
        match load_csv(&path, &CsvOptions::default()) {
            Err(DataError::RaggedRow { line, expected, got }) => {
                assert_eq!((line, expected, got), (3, 2, 1));
            }
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_csv(Path::new("/nonexistent/f.csv"), &CsvOptions::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/f.csv"));
    }

    #[test]
    fn name_selection_and_unknown_name() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("named.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n4,5,6\n").unwrap();
        let options = CsvOptions {
            columns: "c,a".parse().unwrap(),
            ..CsvOptions::default()
        };
        let data = load_csv(&path, &options).unwrap();
        assert_eq!(data.variable_names().unwrap(), &["c".to_string(), "a".into()]);
        assert_eq!(data.values().row(0), &[3.0, 1.0]);

        let options = CsvOptions {
            columns: "zz".parse().unwrap(),
            ..CsvOptions::default()
        };
        assert!(matches!(load_csv(&path, &options), Err(DataError::UnknownColumn(_))));
    }

    #[test]
    fn additive_noise_is_seeded_and_optional() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("n.csv");
        std::fs::write(&path, "a\n1.0\n1.0\n1.0\n1.0\n").unwrap();
        let clean = load_csv(&path, &CsvOptions::default()).unwrap();
        assert!(clean.values().data().iter().all(|v| *v == 1.0));

        let noisy_opts = CsvOptions {
            noise_std: Some(0.5),
            noise_seed: 4,
            ..CsvOptions::default()
        };
        let noisy1 = load_csv(&path, &noisy_opts).unwrap();
        let noisy2 = load_csv(&path, &noisy_opts).unwrap();
        assert_eq!(noisy1, noisy2);
        assert!(noisy1.values().data().iter().any(|v| (*v - 1.0).abs() > 1e-6));
    }

    #[test]
    fn onset_bounds_are_validated() {
        let values = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(TimeSeriesDataset::new(values.clone(), Some(0), None).is_err());
        assert!(TimeSeriesDataset::new(values.clone(), Some(3), None).is_err());
        assert!(TimeSeriesDataset::new(values, Some(2), None).is_ok());
    }
}
