//! Tabular datasets: schema, validation, preprocessing, splitting, resampling.
//!
//! A dataset owns every transformation between raw CSV records and the
//! numeric matrices the trainers consume. Values stay in their original
//! domain (category codes as strings, numbers as f64) until [`encode`]
//! produces the one-hot / min-max matrix; the synthesizer therefore emits
//! original-domain values.
//!
//! [`encode`]: TabularDataset::encode

mod csv_io;
mod encode;

pub use csv_io::{load_csv, load_csv_reader, load_schema, save_csv, save_schema, write_csv};
pub use encode::{
    decode, BlockEncoding, EncodedMatrix, EncodingMap, FeatureBlock, Matrix, OovPolicy,
};

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Minimum record count required by the 8:1:1 split.
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: expected {expected} fields, got {got}")]
    MalformedRow {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: attribute '{attribute}' expects a number, got '{value}'")]
    ParseField {
        line: usize,
        attribute: String,
        value: String,
    },
    #[error("attribute '{attribute}': value '{value}' is not in the declared domain")]
    UnknownCategory { attribute: String, value: String },
    #[error("attribute '{attribute}': non-finite numerical value")]
    NonFiniteValue { attribute: String },
    #[error("attribute '{attribute}': missing value where none is allowed")]
    MissingValue { attribute: String },
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("dataset has {rows} rows; at least {min} required")]
    TooSmall { rows: usize, min: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

/// Attribute kind: category codes or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    Categorical,
    Numerical,
}

/// Value domain of one attribute. Categorical domains are ordered and
/// duplicate-free; numerical domains carry the (min, max) observed on the
/// data they were fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttrDomain {
    Categorical { domain: Vec<String> },
    Numerical { min: f64, max: f64 },
}

/// One column of the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub domain: AttrDomain,
}

impl AttributeSpec {
    pub fn kind(&self) -> AttrKind {
        match self.domain {
            AttrDomain::Categorical { .. } => AttrKind::Categorical,
            AttrDomain::Numerical { .. } => AttrKind::Numerical,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        match &self.domain {
            AttrDomain::Categorical { domain } => {
                if domain.is_empty() {
                    return Err(DataError::SchemaViolation(format!(
                        "categorical attribute '{}' has an empty domain",
                        self.name
                    )));
                }
                let mut seen = HashSet::new();
                for v in domain {
                    if !seen.insert(v) {
                        return Err(DataError::SchemaViolation(format!(
                            "categorical attribute '{}' has duplicate domain value '{v}'",
                            self.name
                        )));
                    }
                }
            }
            AttrDomain::Numerical { min, max } => {
                if !(min.is_finite() && max.is_finite()) {
                    return Err(DataError::NonFiniteValue {
                        attribute: self.name.clone(),
                    });
                }
                if min > max {
                    return Err(DataError::SchemaViolation(format!(
                        "numerical attribute '{}' has min {min} > max {max}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered attribute specs plus the (categorical) label column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<AttributeSpec>,
    pub label: AttributeSpec,
    /// Class treated as positive for F1. Defaults to the highest label value
    /// under numeric-aware ordering when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
}

impl Schema {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.attributes.is_empty() {
            return Err(DataError::SchemaViolation(
                "schema needs at least one attribute".into(),
            ));
        }
        let mut names = HashSet::new();
        for spec in &self.attributes {
            spec.validate()?;
            if !names.insert(spec.name.as_str()) {
                return Err(DataError::SchemaViolation(format!(
                    "duplicate attribute name '{}'",
                    spec.name
                )));
            }
        }
        if names.contains(self.label.name.as_str()) {
            return Err(DataError::SchemaViolation(format!(
                "label name '{}' collides with an attribute",
                self.label.name
            )));
        }
        self.label.validate()?;
        let AttrDomain::Categorical { domain } = &self.label.domain else {
            return Err(DataError::SchemaViolation(format!(
                "label '{}' must be categorical",
                self.label.name
            )));
        };
        if let Some(pos) = &self.positive_label {
            if !domain.contains(pos) {
                return Err(DataError::SchemaViolation(format!(
                    "positive label '{pos}' is not in the label domain"
                )));
            }
        }
        Ok(())
    }

    pub fn label_domain(&self) -> &[String] {
        match &self.label.domain {
            AttrDomain::Categorical { domain } => domain,
            AttrDomain::Numerical { .. } => unreachable!("label is validated categorical"),
        }
    }

    /// Class index used as positive for F1: the declared `positive_label`,
    /// otherwise the highest label value under numeric-aware ordering.
    pub fn positive_class(&self) -> usize {
        let domain = self.label_domain();
        match &self.positive_label {
            Some(pos) => domain
                .iter()
                .position(|v| v == pos)
                .unwrap_or(domain.len() - 1),
            None => {
                let mut best = 0;
                for (i, v) in domain.iter().enumerate() {
                    if value_order(v, &domain[best]) == Ordering::Greater {
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// Refit attribute domains (categorical value sets, numerical ranges) on
    /// the given dataset, keeping kinds and the label spec. Encoding fits its
    /// ranges on the training split only; this is how.
    pub fn refit_attributes(&self, d: &TabularDataset) -> Result<Schema, DataError> {
        let mut attributes = Vec::with_capacity(self.attributes.len());
        for (j, spec) in self.attributes.iter().enumerate() {
            let domain = match spec.kind() {
                AttrKind::Categorical => {
                    let mut values: Vec<String> = Vec::new();
                    for row in &d.rows {
                        if let Cell::Cat(v) = &row[j] {
                            if !values.contains(v) {
                                values.push(v.clone());
                            }
                        }
                    }
                    values.sort_by(|a, b| value_order(a, b));
                    if values.is_empty() {
                        return Err(DataError::Degenerate(format!(
                            "attribute '{}' has no observed values",
                            spec.name
                        )));
                    }
                    AttrDomain::Categorical { domain: values }
                }
                AttrKind::Numerical => {
                    let mut min = f64::INFINITY;
                    let mut max = f64::NEG_INFINITY;
                    for row in &d.rows {
                        if let Cell::Num(v) = row[j] {
                            min = min.min(v);
                            max = max.max(v);
                        }
                    }
                    if !min.is_finite() {
                        return Err(DataError::Degenerate(format!(
                            "attribute '{}' has no observed values",
                            spec.name
                        )));
                    }
                    AttrDomain::Numerical { min, max }
                }
            };
            attributes.push(AttributeSpec {
                name: spec.name.clone(),
                domain,
            });
        }
        let schema = Schema {
            attributes,
            label: self.label.clone(),
            positive_label: self.positive_label.clone(),
        };
        schema.validate()?;
        Ok(schema)
    }
}

/// Numeric-aware total order on raw values: numbers compare numerically,
/// everything else lexicographically. Used to sort categorical domains and to
/// pick the default positive class.
pub fn value_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => x
            .partial_cmp(&y)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// One value of one row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Num(f64),
    Cat(String),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    /// Total order for multiset comparisons in tests and marginal checks.
    pub fn cmp_total(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Missing, Cell::Missing) => Ordering::Equal,
            (Cell::Missing, _) => Ordering::Less,
            (_, Cell::Missing) => Ordering::Greater,
            (Cell::Num(a), Cell::Num(b)) => a.total_cmp(b),
            (Cell::Num(_), Cell::Cat(_)) => Ordering::Less,
            (Cell::Cat(_), Cell::Num(_)) => Ordering::Greater,
            (Cell::Cat(a), Cell::Cat(b)) => a.cmp(b),
        }
    }
}

/// Preprocessing switches. Constant attributes and null rows are always
/// dropped; flooring float columns to integers is opt-in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessPolicy {
    pub floor_floats: bool,
}

/// Schema-tagged rows of mixed categorical/numerical attributes plus a label
/// column. Immutable after construction; every transformation returns a new
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    schema: Schema,
    rows: Vec<Vec<Cell>>,
}

impl TabularDataset {
    /// Build a dataset, checking schema validity and full row conformance:
    /// arity, kind shape, domain membership for categorical values, finite
    /// numbers. Missing values are allowed (preprocessing removes them).
    pub fn from_parts(schema: Schema, rows: Vec<Vec<Cell>>) -> Result<Self, DataError> {
        schema.validate()?;
        if rows.is_empty() {
            return Err(DataError::Degenerate("dataset has no rows".into()));
        }
        let arity = schema.attributes.len() + 1;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != arity {
                return Err(DataError::MalformedRow {
                    line: i + 1,
                    expected: arity,
                    got: row.len(),
                });
            }
            for (cell, spec) in row.iter().zip(
                schema
                    .attributes
                    .iter()
                    .chain(std::iter::once(&schema.label)),
            ) {
                conform(cell, spec)?;
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Record count.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Attribute count (label excluded).
    pub fn d(&self) -> usize {
        self.schema.attributes.len()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.rows[i]
    }

    /// The label cell of row `i` (always the last cell).
    pub fn label_cell(&self, i: usize) -> &Cell {
        self.rows[i].last().expect("rows have label")
    }

    /// Rows with the label column removed; the synthesizer's input grid.
    pub fn attribute_grid(&self) -> Vec<Vec<Cell>> {
        let d = self.d();
        self.rows.iter().map(|r| r[..d].to_vec()).collect()
    }

    /// One attribute column as a vector of cells.
    pub fn attribute_column(&self, j: usize) -> Vec<Cell> {
        self.rows.iter().map(|r| r[j].clone()).collect()
    }

    /// Drop rows containing nulls, optionally floor float columns, then drop
    /// attributes that are constant across all surviving records. Domains are
    /// refitted to the surviving data.
    pub fn preprocess(&self, policy: &PreprocessPolicy) -> Result<Self, DataError> {
        let mut rows: Vec<Vec<Cell>> = self
            .rows
            .iter()
            .filter(|r| !r.iter().any(Cell::is_missing))
            .cloned()
            .collect();
        if rows.is_empty() {
            return Err(DataError::Degenerate(
                "preprocessing removed every row".into(),
            ));
        }
        if policy.floor_floats {
            for row in &mut rows {
                for cell in row.iter_mut() {
                    if let Cell::Num(v) = cell {
                        *v = v.floor();
                    }
                }
            }
        }
        let keep: Vec<usize> = (0..self.d())
            .filter(|&j| rows.iter().any(|r| r[j] != rows[0][j]))
            .collect();
        if keep.is_empty() {
            return Err(DataError::Degenerate(
                "preprocessing removed every attribute".into(),
            ));
        }
        let rows: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                keep.iter()
                    .map(|&j| r[j].clone())
                    .chain(std::iter::once(r[self.d()].clone()))
                    .collect()
            })
            .collect();
        let pruned = Schema {
            attributes: keep
                .iter()
                .map(|&j| self.schema.attributes[j].clone())
                .collect(),
            label: self.schema.label.clone(),
            positive_label: self.schema.positive_label.clone(),
        };
        let interim = Self {
            schema: pruned.clone(),
            rows,
        };
        let schema = pruned.refit_attributes(&interim)?;
        Ok(Self {
            schema,
            rows: interim.rows,
        })
    }

    /// 8:1:1 split by uniform row permutation then contiguous slicing.
    /// Sizes are (floor(0.8 n), floor(0.1 n), remainder); deterministic per
    /// seed; partitions are disjoint and their union is the dataset.
    pub fn split(&self, seed: u64) -> Result<(Self, Self, Self), DataError> {
        let n = self.n();
        if n < MIN_SPLIT_ROWS {
            return Err(DataError::TooSmall {
                rows: n,
                min: MIN_SPLIT_ROWS,
            });
        }
        let mut rng = rng::stream_rng(seed, rng::stream::SPLIT);
        let perm = rng::permutation(n, &mut rng);
        let n_train = (0.8 * n as f64).floor() as usize;
        let n_val = (0.1 * n as f64).floor() as usize;
        let take = |range: std::ops::Range<usize>| -> Self {
            Self {
                schema: self.schema.clone(),
                rows: perm[range].iter().map(|&i| self.rows[i].clone()).collect(),
            }
        };
        Ok((
            take(0..n_train),
            take(n_train..n_train + n_val),
            take(n_train + n_val..n),
        ))
    }

    /// Enlarge the dataset `factor`-fold by sampling rows with replacement.
    /// `factor == 1` returns the dataset unchanged.
    pub fn bootstrap_scale(&self, factor: usize, seed: u64) -> Result<Self, DataError> {
        if factor == 0 {
            return Err(DataError::InvalidArgument(
                "bootstrap factor must be at least 1".into(),
            ));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let n = self.n();
        let mut rng = rng::stream_rng(seed, rng::stream::BOOTSTRAP);
        let rows = (0..n * factor)
            .map(|_| self.rows[rng.random_range(0..n)].clone())
            .collect();
        Ok(Self {
            schema: self.schema.clone(),
            rows,
        })
    }

    /// Strict encode: out-of-domain categorical values are an error.
    pub fn encode(&self, schema: &Schema) -> Result<EncodedMatrix, DataError> {
        encode::encode(self, schema, OovPolicy::Error)
    }

    /// Encode with a chosen out-of-vocabulary policy. Evaluation encodes test
    /// rows with [`OovPolicy::ZeroBlock`] so unseen categories never crash.
    pub fn encode_with(&self, schema: &Schema, oov: OovPolicy) -> Result<EncodedMatrix, DataError> {
        encode::encode(self, schema, oov)
    }
}

use rand::Rng;

fn conform(cell: &Cell, spec: &AttributeSpec) -> Result<(), DataError> {
    match (cell, &spec.domain) {
        (Cell::Missing, _) => Ok(()),
        (Cell::Num(v), AttrDomain::Numerical { .. }) => {
            if v.is_finite() {
                Ok(())
            } else {
                Err(DataError::NonFiniteValue {
                    attribute: spec.name.clone(),
                })
            }
        }
        (Cell::Cat(v), AttrDomain::Categorical { domain }) => {
            if domain.contains(v) {
                Ok(())
            } else {
                Err(DataError::UnknownCategory {
                    attribute: spec.name.clone(),
                    value: v.clone(),
                })
            }
        }
        _ => Err(DataError::SchemaViolation(format!(
            "attribute '{}': cell kind does not match schema",
            spec.name
        ))),
    }
}
