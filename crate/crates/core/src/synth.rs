//! Dataset synthesis: independently permute each private attribute column,
//! relabel the shuffled rows with the DP model, and fuse attributes and
//! labels into the synthetic dataset.
//!
//! Column-wise shuffling preserves every attribute's marginal distribution
//! exactly while breaking attribute and record correlations. The original
//! label column is extracted and discarded before any shuffling; output
//! labels come solely from the model, which is the only place the synthetic
//! dataset's label information originates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    AttrDomain, AttributeSpec, BlockEncoding, Cell, DataError, Schema, TabularDataset,
};
use crate::mlp::ModelError;
use crate::rng;
use crate::trainer::{ModelCheckpoint, TrainError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] TrainError),
    #[error("schema mismatch between model provenance and input: {0}")]
    SchemaMismatch(String),
    #[error("empty input: {0}")]
    Empty(String),
}

/// An attribute grid whose columns are each a permutation of the source
/// columns; original-domain values, no label.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffledAttributes {
    names: Vec<String>,
    grid: Vec<Vec<Cell>>,
    column_seeds: Vec<u64>,
}

impl ShuffledAttributes {
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.grid
    }

    /// Seeds of the per-column permutation generators, in column order.
    pub fn column_seeds(&self) -> &[u64] {
        &self.column_seeds
    }

    /// The degenerate shuffle that leaves every column in place. Lets tests
    /// and debugging runs compare synthesized labels against predictions on
    /// the original rows.
    pub fn identity(names: Vec<String>, grid: Vec<Vec<Cell>>) -> Result<Self, SynthError> {
        check_grid(&names, &grid)?;
        Ok(Self {
            names,
            grid,
            column_seeds: Vec::new(),
        })
    }
}

fn check_grid(names: &[String], grid: &[Vec<Cell>]) -> Result<(), SynthError> {
    if grid.is_empty() {
        return Err(SynthError::Empty("attribute grid has no rows".into()));
    }
    if names.is_empty() {
        return Err(SynthError::Empty("attribute grid has no columns".into()));
    }
    if grid.iter().any(|r| r.len() != names.len()) {
        return Err(SynthError::SchemaMismatch("ragged attribute grid".into()));
    }
    Ok(())
}

/// Permute every column independently by a uniform permutation. Column `j`
/// draws its permutation from the seed stream `COLUMN_BASE + j`, so adding a
/// trailing column never perturbs the permutations of existing columns.
pub fn shuffle_attributes(
    names: Vec<String>,
    grid: &[Vec<Cell>],
    seed: u64,
) -> Result<ShuffledAttributes, SynthError> {
    check_grid(&names, grid)?;
    let n = grid.len();
    let d = names.len();
    let mut column_seeds = Vec::with_capacity(d);
    let mut out: Vec<Vec<Cell>> = vec![Vec::with_capacity(d); n];
    #[allow(clippy::needless_range_loop)]
    for j in 0..d {
        let column_seed = rng::derive_seed(seed, rng::stream::COLUMN_BASE + j as u64);
        column_seeds.push(column_seed);
        let mut column_rng = rng::seeded(column_seed);
        let perm = rng::permutation(n, &mut column_rng);
        for (row, &src) in out.iter_mut().zip(&perm) {
            row.push(grid[src][j].clone());
        }
    }
    Ok(ShuffledAttributes {
        names,
        grid: out,
        column_seeds,
    })
}

/// Predict a label for every shuffled row with the checkpointed model.
/// Rows are encoded with the checkpoint's own encoding map; categories the
/// model never saw become zero blocks rather than errors.
pub fn synthesize_labels(
    model: &ModelCheckpoint,
    shuffled: &ShuffledAttributes,
) -> Result<Vec<usize>, SynthError> {
    let map = &model.encoding_map;
    if map.blocks.len() != shuffled.d()
        || map
            .blocks
            .iter()
            .zip(shuffled.names())
            .any(|(b, n)| b.attribute != *n)
    {
        return Err(SynthError::SchemaMismatch(format!(
            "model encodes attributes {:?}, input has {:?}",
            map.blocks.iter().map(|b| &b.attribute).collect::<Vec<_>>(),
            shuffled.names()
        )));
    }
    let mut buffer = vec![0.0; map.width];
    let mut labels = Vec::with_capacity(shuffled.n());
    for row in shuffled.rows() {
        buffer.fill(0.0);
        map.encode_row_into(row, crate::data::OovPolicy::ZeroBlock, &mut buffer)?;
        labels.push(model.model.predict(&buffer)?);
    }
    Ok(labels)
}

/// Where a synthetic dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProvenance {
    pub checkpoint_id: String,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub oversample_factor: usize,
}

/// Shuffled attributes fused with model-synthesized labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    attributes: ShuffledAttributes,
    labels: Vec<usize>,
    schema: Schema,
    provenance: SynthProvenance,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.attributes.n()
    }

    pub fn attributes(&self) -> &ShuffledAttributes {
        &self.attributes
    }

    /// Synthesized class indices, one per row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &SynthProvenance {
        &self.provenance
    }

    /// Schema of the fused output: the source attributes with the label
    /// domain taken from the model (labels originate there, not in the
    /// source dataset).
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Materialize as a tabular dataset with original-domain values.
    pub fn to_dataset(&self) -> Result<TabularDataset, SynthError> {
        let label_domain = self.schema.label_domain();
        let rows: Vec<Vec<Cell>> = self
            .attributes
            .rows()
            .iter()
            .zip(&self.labels)
            .map(|(attrs, &y)| {
                let mut row = attrs.clone();
                row.push(Cell::Cat(label_domain[y].clone()));
                row
            })
            .collect();
        Ok(TabularDataset::from_parts(self.schema.clone(), rows)?)
    }
}

/// Synthesis knobs; the default synthesizes exactly one output row per input
/// row. An oversample factor above 1 bootstrap-resamples the rows before
/// shuffling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub oversample_factor: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            oversample_factor: 1,
        }
    }
}

/// The full synthesis pipeline: extract the attribute matrix (discarding the
/// original labels), shuffle each column, relabel with the DP model, fuse.
pub fn synthesize(
    d: &TabularDataset,
    model: &ModelCheckpoint,
    seed: u64,
) -> Result<SyntheticDataset, SynthError> {
    synthesize_with_options(d, model, seed, SynthOptions::default())
}

pub fn synthesize_with_options(
    d: &TabularDataset,
    model: &ModelCheckpoint,
    seed: u64,
    options: SynthOptions,
) -> Result<SyntheticDataset, SynthError> {
    check_compatibility(d.schema(), model)?;
    if options.oversample_factor == 0 {
        return Err(SynthError::Empty(
            "oversample factor must be at least 1".into(),
        ));
    }
    let source = if options.oversample_factor > 1 {
        d.bootstrap_scale(options.oversample_factor, seed)?
    } else {
        d.clone()
    };
    let names: Vec<String> = source
        .schema()
        .attributes
        .iter()
        .map(|a| a.name.clone())
        .collect();
    // Original labels are dropped here and never touched again.
    let grid = source.attribute_grid();
    let shuffled = shuffle_attributes(names, &grid, seed)?;
    let labels = synthesize_labels(model, &shuffled)?;
    let schema = Schema {
        attributes: source.schema().attributes.clone(),
        label: AttributeSpec {
            name: source.schema().label.name.clone(),
            domain: AttrDomain::Categorical {
                domain: model.encoding_map.label_values.clone(),
            },
        },
        positive_label: source.schema().positive_label.clone(),
    };
    Ok(SyntheticDataset {
        attributes: shuffled,
        labels,
        schema,
        provenance: SynthProvenance {
            checkpoint_id: model.id()?,
            seed,
            epsilon: model.provenance.epsilon,
            delta: model.provenance.delta,
            oversample_factor: options.oversample_factor,
        },
    })
}

fn check_compatibility(schema: &Schema, model: &ModelCheckpoint) -> Result<(), SynthError> {
    let blocks = &model.encoding_map.blocks;
    if blocks.len() != schema.attributes.len() {
        return Err(SynthError::SchemaMismatch(format!(
            "model encodes {} attributes, dataset has {}",
            blocks.len(),
            schema.attributes.len()
        )));
    }
    for (block, spec) in blocks.iter().zip(&schema.attributes) {
        if block.attribute != spec.name {
            return Err(SynthError::SchemaMismatch(format!(
                "attribute order differs: model has '{}', dataset has '{}'",
                block.attribute, spec.name
            )));
        }
        let kinds_match = matches!(
            (&block.encoding, &spec.domain),
            (BlockEncoding::OneHot { .. }, AttrDomain::Categorical { .. })
                | (BlockEncoding::MinMax { .. }, AttrDomain::Numerical { .. })
        );
        if !kinds_match {
            return Err(SynthError::SchemaMismatch(format!(
                "attribute '{}' has different kinds in model and dataset",
                spec.name
            )));
        }
    }
    Ok(())
}
