//! Tabular data model: schema, CSV ingestion, min-max scaled distances and
//! the small fixture datasets used throughout the test suites.

use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("cell at row {row}, column '{col}' does not parse as a finite number")]
    Parse { row: u64, col: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-feature kind. Only numeric features are supported for now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
}

/// Feature names, kinds and the ordered class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub class_names: Vec<String>,
}

impl FeatureSchema {
    pub fn numeric(names: Vec<String>, class_names: Vec<String>) -> Result<Self, DatasetError> {
        if names.is_empty() {
            return Err(DatasetError::Schema("no feature columns".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if a.is_empty() {
                return Err(DatasetError::Schema(format!("feature {i} has empty name")));
            }
            if names[..i].contains(a) {
                return Err(DatasetError::Schema(format!("duplicate feature name '{a}'")));
            }
        }
        let kinds = vec![FeatureKind::Numeric; names.len()];
        Ok(FeatureSchema { names, kinds, class_names })
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    /// Display name for a class index; falls back to the index itself when the
    /// dataset carried no label column.
    pub fn class_name(&self, idx: usize) -> String {
        self.class_names.get(idx).cloned().unwrap_or_else(|| idx.to_string())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A single point in feature space, aligned with a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub values: Vec<f64>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Instance { values }
    }
}

impl From<Vec<f64>> for Instance {
    fn from(values: Vec<f64>) -> Self {
        Instance { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            other => Err(format!("unknown metric '{other}' (expected euclidean or manhattan)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Euclidean => write!(f, "euclidean"),
            Metric::Manhattan => write!(f, "manhattan"),
        }
    }
}

/// Immutable row-major feature matrix with optional ground-truth labels.
///
/// Feature ranges are frozen at construction; every distance computed through
/// this dataset first min-max scales both operands to `[0, 1]` using those
/// ranges. Constant features scale to 0.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: FeatureSchema,
    x: Vec<f64>,
    y_true: Option<Vec<usize>>,
    mins: Vec<f64>,
    inv_ranges: Vec<f64>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<f64>>,
        y_true: Option<Vec<usize>>,
    ) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let d = schema.n_features();
        let mut x = Vec::with_capacity(rows.len() * d);
        for row in &rows {
            if row.len() != d {
                return Err(DatasetError::DimensionMismatch { expected: d, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::Schema("non-finite value in row".into()));
            }
            x.extend_from_slice(row);
        }
        if let Some(y) = &y_true {
            if y.len() != rows.len() {
                return Err(DatasetError::Schema("label count differs from row count".into()));
            }
        }
        let (mins, inv_ranges) = feature_ranges(&x, d);
        Ok(Dataset { schema, x, y_true, mins, inv_ranges })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.x.len() / self.schema.n_features()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.schema.n_features();
        &self.x[i * d..(i + 1) * d]
    }

    pub fn instance(&self, i: usize) -> Instance {
        Instance::new(self.row(i).to_vec())
    }

    pub fn y_true(&self) -> Option<&[usize]> {
        self.y_true.as_deref()
    }

    /// Min-max scale a raw vector using this dataset's frozen ranges.
    pub fn scale(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mins.iter().zip(&self.inv_ranges))
            .map(|(v, (lo, inv))| (v - lo) * inv)
            .collect()
    }

    /// Scaled distance between two instances.
    pub fn distance(&self, a: &Instance, b: &Instance, metric: Metric) -> Result<f64, DatasetError> {
        let d = self.schema.n_features();
        if a.values.len() != d {
            return Err(DatasetError::DimensionMismatch { expected: d, got: a.values.len() });
        }
        if b.values.len() != d {
            return Err(DatasetError::DimensionMismatch { expected: d, got: b.values.len() });
        }
        Ok(scaled_distance(&self.scale(&a.values), &self.scale(&b.values), metric))
    }

    /// Scaled distance from an already-scaled query to row `i`.
    pub fn distance_to_row(&self, scaled_query: &[f64], i: usize, metric: Metric) -> f64 {
        let row = self.scale(self.row(i));
        scaled_distance(scaled_query, &row, metric)
    }

    /// A copy of this dataset with every feature min-max scaled to `[0, 1]`.
    pub fn scaled_copy(&self) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..self.n_rows()).map(|i| self.scale(self.row(i))).collect();
        Dataset::new(self.schema.clone(), rows, self.y_true.clone()).expect("scaled copy of a valid dataset")
    }
}

fn feature_ranges(x: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in x.chunks_exact(d) {
        for (j, v) in row.iter().enumerate() {
            mins[j] = mins[j].min(*v);
            maxs[j] = maxs[j].max(*v);
        }
    }
    let inv_ranges = mins
        .iter()
        .zip(&maxs)
        .map(|(lo, hi)| {
            let r = hi - lo;
            if r > 0.0 {
                1.0 / r
            } else {
                0.0 // constant feature: scales to 0 everywhere
            }
        })
        .collect();
    (mins, inv_ranges)
}

pub fn scaled_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt(),
        Metric::Manhattan => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum(),
    }
}

/// Load a dataset from an RFC-4180 style CSV file with a header row.
///
/// Lines starting with `#` are treated as comments (our own writers emit a
/// provenance header in that form). When `label_column` is given, that column
/// becomes `y_true`, with class names assigned in first-appearance order.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, cell) in record.iter().enumerate() {
            if Some(i) == label_idx {
                let name = cell.to_string();
                let cls = match class_names.iter().position(|c| *c == name) {
                    Some(c) => c,
                    None => {
                        class_names.push(name);
                        class_names.len() - 1
                    }
                };
                labels.push(cls);
            } else {
                let v: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                    row: line,
                    col: headers.get(i).cloned().unwrap_or_else(|| i.to_string()),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::Parse {
                        row: line,
                        col: headers.get(i).cloned().unwrap_or_else(|| i.to_string()),
                    });
                }
                row.push(v);
            }
        }
        if row.len() != feature_names.len() {
            return Err(DatasetError::Parse {
                row: line,
                col: "<row width>".to_string(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if label_idx.is_some() && class_names.len() < 2 {
        return Err(DatasetError::Schema(format!(
            "label column has {} distinct class(es); need at least 2",
            class_names.len()
        )));
    }
    let schema = FeatureSchema::numeric(feature_names, class_names)?;
    let y = label_idx.map(|_| labels);
    Dataset::new(schema, rows, y)
}

/// Write a dataset to CSV. Labels, when present, go into a trailing column
/// named `label` using the schema's class names. `provenance` lines, if any,
/// are emitted first as `#` comments.
pub fn write_csv(
    data: &Dataset,
    path: impl AsRef<Path>,
    provenance: &[String],
) -> Result<(), DatasetError> {
    use std::io::Write;
    let mut file = std::fs::File::create(path.as_ref())?;
    for line in provenance {
        writeln!(file, "# {line}")?;
    }
    let mut header: Vec<String> = data.schema().names.clone();
    if data.y_true().is_some() {
        header.push("label".to_string());
    }
    writeln!(file, "{}", header.join(","))?;
    for i in 0..data.n_rows() {
        let mut cells: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(y) = data.y_true() {
            cells.push(data.schema().class_name(y[i]));
        }
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Two well-separated 4-point blobs; the canonical oracle dataset for the
/// whole test suite. Class 0 near the origin, class 1 near (5.5, 5.5).
pub fn toy_blobs() -> Dataset {
    let schema = FeatureSchema::numeric(
        vec!["x1".into(), "x2".into()],
        vec!["0".into(), "1".into()],
    )
    .unwrap();
    let rows = vec![
        vec![0.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![1.0, 1.0],
        vec![5.0, 5.0],
        vec![5.0, 6.0],
        vec![6.0, 5.0],
        vec![6.0, 6.0],
    ];
    let y = vec![0, 0, 0, 0, 1, 1, 1, 1];
    Dataset::new(schema, rows, Some(y)).unwrap()
}
