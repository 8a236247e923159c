//! Feature encoding: one-hot categorical blocks and min-max scaled numerical
//! columns, with an encoding map that makes the decode exact.

use serde::{Deserialize, Serialize};

use super::{AttrDomain, AttributeSpec, Cell, DataError, Schema, TabularDataset};

/// Dense row-major real matrix; just storage with shape checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// How encoding treats a categorical value absent from the fitted domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    /// Reject the row with a domain error.
    Error,
    /// Emit an all-zeros block so evaluation on unseen categories never
    /// crashes. Such blocks cannot be decoded back.
    ZeroBlock,
}

/// Placement of one attribute inside the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum BlockEncoding {
    OneHot { offset: usize, values: Vec<String> },
    MinMax { offset: usize, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub attribute: String,
    #[serde(flatten)]
    pub encoding: BlockEncoding,
}

/// Per-attribute offsets plus the label value table; everything needed to
/// encode new rows against a fitted schema and to decode exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub blocks: Vec<FeatureBlock>,
    pub label_values: Vec<String>,
    pub width: usize,
}

impl EncodingMap {
    /// Lay out feature blocks in schema order: one column per categorical
    /// domain value, one column per numerical attribute.
    pub fn fit(schema: &Schema) -> Result<Self, DataError> {
        schema.validate()?;
        let mut blocks = Vec::with_capacity(schema.attributes.len());
        let mut offset = 0usize;
        for spec in &schema.attributes {
            let encoding = match &spec.domain {
                AttrDomain::Categorical { domain } => {
                    let block = BlockEncoding::OneHot {
                        offset,
                        values: domain.clone(),
                    };
                    offset += domain.len();
                    block
                }
                AttrDomain::Numerical { min, max } => {
                    let block = BlockEncoding::MinMax {
                        offset,
                        min: *min,
                        max: *max,
                    };
                    offset += 1;
                    block
                }
            };
            blocks.push(FeatureBlock {
                attribute: spec.name.clone(),
                encoding,
            });
        }
        Ok(Self {
            blocks,
            label_values: schema.label_domain().to_vec(),
            width: offset,
        })
    }

    pub fn class_count(&self) -> usize {
        self.label_values.len()
    }

    /// Encode one attribute row (no label) into `out`, which must be zeroed
    /// and `width` wide.
    pub fn encode_row_into(
        &self,
        cells: &[Cell],
        oov: OovPolicy,
        out: &mut [f64],
    ) -> Result<(), DataError> {
        if cells.len() != self.blocks.len() {
            return Err(DataError::MalformedRow {
                line: 0,
                expected: self.blocks.len(),
                got: cells.len(),
            });
        }
        for (cell, block) in cells.iter().zip(&self.blocks) {
            match (&block.encoding, cell) {
                (BlockEncoding::OneHot { offset, values }, Cell::Cat(v)) => {
                    match values.iter().position(|x| x == v) {
                        Some(i) => out[offset + i] = 1.0,
                        None => match oov {
                            OovPolicy::ZeroBlock => {}
                            OovPolicy::Error => {
                                return Err(DataError::UnknownCategory {
                                    attribute: block.attribute.clone(),
                                    value: v.clone(),
                                })
                            }
                        },
                    }
                }
                (BlockEncoding::MinMax { offset, min, max }, Cell::Num(v)) => {
                    if !v.is_finite() {
                        return Err(DataError::NonFiniteValue {
                            attribute: block.attribute.clone(),
                        });
                    }
                    let scaled = if max > min {
                        (v - min) / (max - min)
                    } else {
                        0.0
                    };
                    // Test-time values outside the fitted range clamp to [0, 1].
                    out[*offset] = scaled.clamp(0.0, 1.0);
                }
                (_, Cell::Missing) => {
                    return Err(DataError::MissingValue {
                        attribute: block.attribute.clone(),
                    })
                }
                _ => {
                    return Err(DataError::SchemaViolation(format!(
                        "attribute '{}': cell kind does not match encoding",
                        block.attribute
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn label_index(&self, cell: &Cell) -> Result<usize, DataError> {
        let Cell::Cat(v) = cell else {
            return Err(DataError::SchemaViolation(
                "label must be categorical".into(),
            ));
        };
        self.label_values
            .iter()
            .position(|x| x == v)
            .ok_or_else(|| DataError::UnknownCategory {
                attribute: "label".into(),
                value: v.clone(),
            })
    }

    /// Rebuild the schema this map was fitted from.
    pub fn to_schema(&self) -> Schema {
        Schema {
            attributes: self
                .blocks
                .iter()
                .map(|b| AttributeSpec {
                    name: b.attribute.clone(),
                    domain: match &b.encoding {
                        BlockEncoding::OneHot { values, .. } => AttrDomain::Categorical {
                            domain: values.clone(),
                        },
                        BlockEncoding::MinMax { min, max, .. } => AttrDomain::Numerical {
                            min: *min,
                            max: *max,
                        },
                    },
                })
                .collect(),
            label: AttributeSpec {
                name: "label".into(),
                domain: AttrDomain::Categorical {
                    domain: self.label_values.clone(),
                },
            },
            positive_label: None,
        }
    }
}

/// Feature matrix plus integer class labels plus the map that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub encoding_map: EncodingMap,
}

impl EncodedMatrix {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.encoding_map.class_count()
    }
}

pub fn encode(
    d: &TabularDataset,
    schema: &Schema,
    oov: OovPolicy,
) -> Result<EncodedMatrix, DataError> {
    let map = EncodingMap::fit(schema)?;
    if schema.attributes.len() != d.d() {
        return Err(DataError::SchemaViolation(format!(
            "schema has {} attributes, dataset has {}",
            schema.attributes.len(),
            d.d()
        )));
    }
    let mut features = Matrix::zeros(d.n(), map.width);
    let mut labels = Vec::with_capacity(d.n());
    for i in 0..d.n() {
        let row = d.row(i);
        map.encode_row_into(&row[..d.d()], oov, features.row_mut(i))?;
        labels.push(map.label_index(&row[d.d()])?);
    }
    Ok(EncodedMatrix {
        features,
        labels,
        encoding_map: map,
    })
}

/// Invert an encoded matrix back to raw values. Categorical values decode
/// exactly; numerical values invert the min-max scaling. All-zero one-hot
/// blocks (out-of-vocabulary rows) cannot be decoded.
pub fn decode(m: &EncodedMatrix) -> Result<TabularDataset, DataError> {
    let schema = m.encoding_map.to_schema();
    let mut rows = Vec::with_capacity(m.n());
    for i in 0..m.n() {
        let feat = m.features.row(i);
        let mut row: Vec<Cell> = Vec::with_capacity(m.encoding_map.blocks.len() + 1);
        for block in &m.encoding_map.blocks {
            match &block.encoding {
                BlockEncoding::OneHot { offset, values } => {
                    let hot = feat[*offset..offset + values.len()]
                        .iter()
                        .position(|&v| v == 1.0);
                    match hot {
                        Some(k) => row.push(Cell::Cat(values[k].clone())),
                        None => {
                            return Err(DataError::InvalidArgument(format!(
                                "row {i}: attribute '{}' has no active one-hot column",
                                block.attribute
                            )))
                        }
                    }
                }
                BlockEncoding::MinMax { offset, min, max } => {
                    row.push(Cell::Num(min + feat[*offset] * (max - min)));
                }
            }
        }
        row.push(Cell::Cat(m.encoding_map.label_values[m.labels[i]].clone()));
        rows.push(row);
    }
    TabularDataset::from_parts(schema, rows)
}
