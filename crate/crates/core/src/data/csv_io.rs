//! CSV and schema-file IO.
//!
//! Dialect: comma-separated, first row is the header, UTF-8, fields trimmed;
//! `?` and the empty string are nulls. The last column is the label. Schema
//! files are JSON documents listing attribute name, kind, and domain, and are
//! re-consumable bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{
    value_order, AttrDomain, AttrKind, AttributeSpec, Cell, DataError, Schema, TabularDataset,
};

/// Load a CSV file. Without a schema hint, kinds are inferred (a column is
/// numerical when every non-null value parses as a finite number; the label
/// column is always categorical) and categorical domains are the sorted set
/// of observed values. With a hint, column names must match and values must
/// conform to the hinted domains.
pub fn load_csv(path: &Path, schema_hint: Option<&Schema>) -> Result<TabularDataset, DataError> {
    let file = File::open(path)?;
    load_csv_reader(BufReader::new(file), schema_hint)
}

/// [`load_csv`] over any reader; used by tests.
pub fn load_csv_reader<R: Read>(
    reader: R,
    schema_hint: Option<&Schema>,
) -> Result<TabularDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 2 {
        return Err(DataError::SchemaViolation(
            "a dataset needs at least one attribute column and a label column".into(),
        ));
    }
    let arity = header.len();
    let mut raw: Vec<Vec<Option<String>>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(raw.len() + 2);
        if record.len() != arity {
            return Err(DataError::MalformedRow {
                line,
                expected: arity,
                got: record.len(),
            });
        }
        raw.push(
            record
                .iter()
                .map(|f| {
                    let f = f.trim();
                    if f.is_empty() || f == "?" {
                        None
                    } else {
                        Some(f.to_string())
                    }
                })
                .collect(),
        );
    }
    match schema_hint {
        Some(hint) => build_with_hint(&header, raw, hint),
        None => build_inferred(&header, raw),
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn build_inferred(
    header: &[String],
    raw: Vec<Vec<Option<String>>>,
) -> Result<TabularDataset, DataError> {
    let d = header.len() - 1;
    let mut attributes = Vec::with_capacity(d);
    for j in 0..d {
        let observed: Vec<&String> = raw.iter().filter_map(|r| r[j].as_ref()).collect();
        if observed.is_empty() {
            return Err(DataError::Degenerate(format!(
                "attribute '{}' has no observed values",
                header[j]
            )));
        }
        let numeric = observed.iter().all(|v| parse_number(v).is_some());
        let domain = if numeric {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for v in &observed {
                let x = parse_number(v).expect("checked numeric");
                min = min.min(x);
                max = max.max(x);
            }
            AttrDomain::Numerical { min, max }
        } else {
            let mut values: Vec<String> = Vec::new();
            for v in observed {
                if !values.contains(v) {
                    values.push(v.clone());
                }
            }
            values.sort_by(|a, b| value_order(a, b));
            AttrDomain::Categorical { domain: values }
        };
        attributes.push(AttributeSpec {
            name: header[j].clone(),
            domain,
        });
    }
    let label_observed: Vec<&String> = raw.iter().filter_map(|r| r[d].as_ref()).collect();
    if label_observed.is_empty() {
        return Err(DataError::Degenerate(format!(
            "label '{}' has no observed values",
            header[d]
        )));
    }
    let mut label_values: Vec<String> = Vec::new();
    for v in label_observed {
        if !label_values.contains(v) {
            label_values.push(v.clone());
        }
    }
    label_values.sort_by(|a, b| value_order(a, b));
    let schema = Schema {
        attributes,
        label: AttributeSpec {
            name: header[d].clone(),
            domain: AttrDomain::Categorical {
                domain: label_values,
            },
        },
        positive_label: None,
    };
    let rows = materialize(&schema, raw, 2)?;
    TabularDataset::from_parts(schema, rows)
}

fn build_with_hint(
    header: &[String],
    raw: Vec<Vec<Option<String>>>,
    hint: &Schema,
) -> Result<TabularDataset, DataError> {
    hint.validate()?;
    let expected: Vec<&str> = hint
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .chain(std::iter::once(hint.label.name.as_str()))
        .collect();
    let got: Vec<&str> = header.iter().map(String::as_str).collect();
    if expected != got {
        return Err(DataError::SchemaViolation(format!(
            "header {:?} does not match schema columns {:?}",
            got, expected
        )));
    }
    let rows = materialize(hint, raw, 2)?;
    TabularDataset::from_parts(hint.clone(), rows)
}

/// Turn raw optional strings into cells under the given schema.
/// `first_line` is the 1-based line number of the first data row.
fn materialize(
    schema: &Schema,
    raw: Vec<Vec<Option<String>>>,
    first_line: usize,
) -> Result<Vec<Vec<Cell>>, DataError> {
    let d = schema.attributes.len();
    let mut rows = Vec::with_capacity(raw.len());
    for (i, rec) in raw.into_iter().enumerate() {
        let line = first_line + i;
        let mut row = Vec::with_capacity(d + 1);
        for (j, field) in rec.into_iter().enumerate() {
            let spec = if j < d {
                &schema.attributes[j]
            } else {
                &schema.label
            };
            let cell = match field {
                None => Cell::Missing,
                Some(s) => match spec.kind() {
                    AttrKind::Numerical => match parse_number(&s) {
                        Some(v) => Cell::Num(v),
                        None => {
                            return Err(DataError::ParseField {
                                line,
                                attribute: spec.name.clone(),
                                value: s,
                            })
                        }
                    },
                    AttrKind::Categorical => Cell::Cat(s),
                },
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Format a numeric cell: integral values print without a decimal point so a
/// loaded-and-saved integer column round-trips byte-identically.
pub(crate) fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Write a dataset as CSV with its original header; missing cells print `?`.
pub fn write_csv<W: Write>(d: &TabularDataset, out: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(out);
    let schema = d.schema();
    let header: Vec<&str> = schema
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .chain(std::iter::once(schema.label.name.as_str()))
        .collect();
    wtr.write_record(&header)?;
    for row in d.rows() {
        let fields: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Missing => "?".to_string(),
                Cell::Num(v) => format_number(*v),
                Cell::Cat(s) => s.clone(),
            })
            .collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(d: &TabularDataset, path: &Path) -> Result<(), DataError> {
    let file = File::create(path)?;
    write_csv(d, BufWriter::new(file))
}

pub fn save_schema(schema: &Schema, path: &Path) -> Result<(), DataError> {
    schema.validate()?;
    let mut file = BufWriter::new(File::create(path)?);
    let json = serde_json::to_string_pretty(schema)?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

pub fn load_schema(path: &Path) -> Result<Schema, DataError> {
    let file = File::open(path)?;
    let schema: Schema = serde_json::from_reader(BufReader::new(file))?;
    schema.validate()?;
    Ok(schema)
}
