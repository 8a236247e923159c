//! DP-SGD training: per-example gradients, L2 clipping, one Gaussian draw on
//! the summed clipped gradients, and plain SGD parameter updates over Poisson
//! batches.
//!
//! Batches are Poisson-sampled at rate q = b/N (each example included
//! independently per step) so the accountant's subsampled-Gaussian bound
//! applies exactly. Noise is a single draw ξ ~ N(0, z²C²·I) added to the
//! clipped-gradient sum before averaging; the provenance record names this
//! placement. Empty batches skip the update but still count toward the step
//! budget. All reductions run in fixed order, so a (config, seed) pair
//! reproduces the parameter trajectory bitwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accountant::{self, AccountantError, PrivacyBudget, SamplingConfig};
use crate::data::{EncodedMatrix, EncodingMap, Schema};
use crate::mlp::{GradientBuffer, MlpModel, ModelError};
use crate::rng;

/// Slack allowed when re-verifying that a configuration satisfies its budget;
/// covers rounding in the bisection that produced z.
pub const BUDGET_VERIFY_SLACK: f64 = 1e-9;

/// How this trainer places its Gaussian noise; echoed in every provenance
/// record so external accountants can audit the assumption.
pub const NOISE_PLACEMENT: &str = "single_draw_on_summed_clipped_gradients";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("accountant error: {0}")]
    Accountant(#[from] AccountantError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient encountered: {0}")]
    NumericError(String),
    #[error("training diverged at step {step} with config {config:?}")]
    Diverged { step: u64, config: DpSgdConfig },
    #[error(
        "config does not satisfy the declared budget: achieves epsilon={achieved:.6} > {target}"
    )]
    BudgetMismatch { achieved: f64, target: f64 },
    #[error("hyperparameter tuning failed: every grid point diverged; grid was {0}")]
    TuningFailed(String),
    #[error("empty batch passed to noisy_aggregate")]
    EmptyBatch,
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Every hyperparameter of one DP-SGD run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSgdConfig {
    /// Training-set size N; must equal the encoded matrix row count.
    pub n: usize,
    /// Expected Poisson batch size b.
    pub batch_size: usize,
    /// Epochs E.
    pub epochs: u32,
    /// Learning rate η.
    pub learning_rate: f64,
    /// Clipping bound C on per-example gradient L2 norms.
    pub clip_bound: f64,
    /// Noise multiplier z.
    pub noise_multiplier: f64,
    pub seed: u64,
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "n, batch size, and epochs must be positive".into(),
            ));
        }
        if self.batch_size > self.n {
            return Err(TrainError::InvalidConfig(format!(
                "batch size {} exceeds training-set size {}",
                self.batch_size, self.n
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "clipping bound must be positive".into(),
            ));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "noise multiplier must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Nominal step count E·⌈N/b⌉.
    pub fn steps(&self) -> u64 {
        self.epochs as u64 * self.n.div_ceil(self.batch_size) as u64
    }

    /// Poisson inclusion rate q = b/N.
    pub fn sampling_rate(&self) -> f64 {
        self.batch_size as f64 / self.n as f64
    }
}

/// A trained DP model with the configuration and budget that produced it.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub config: DpSgdConfig,
    /// None for non-private runs (z chosen freely, e.g. the z = 0
    /// degeneration tests); Some implies the config was re-verified against
    /// the accountant.
    pub budget: Option<PrivacyBudget>,
    pub validation_accuracy: f64,
}

/// Clip a gradient to L2 norm at most `c`: g / max(1, ‖g‖₂/c).
pub fn clip_gradient(mut g: GradientBuffer, c: f64) -> Result<GradientBuffer, TrainError> {
    clip_in_place(&mut g, c)?;
    Ok(g)
}

fn clip_in_place(g: &mut GradientBuffer, c: f64) -> Result<(), TrainError> {
    if c.is_nan() || c <= 0.0 {
        return Err(TrainError::InvalidConfig(
            "clipping bound must be positive".into(),
        ));
    }
    if !g.is_finite() {
        return Err(TrainError::NumericError("per-example gradient".into()));
    }
    let norm = g.l2_norm();
    if norm > c {
        g.scale(c / norm);
    }
    debug_assert!(g.l2_norm() <= c + 1e-9, "post-clip norm exceeds the bound");
    Ok(())
}

/// (1/|B|)·(Σ clipped_i + ξ) with ξ ~ N(0, z²c²·I), one draw on the sum.
/// Deterministic given the RNG state.
pub fn noisy_aggregate<R: Rng>(
    clipped: &[GradientBuffer],
    c: f64,
    z: f64,
    rng: &mut R,
) -> Result<GradientBuffer, TrainError> {
    let Some(first) = clipped.first() else {
        return Err(TrainError::EmptyBatch);
    };
    if z < 0.0 {
        return Err(TrainError::InvalidConfig(
            "noise multiplier must be non-negative".into(),
        ));
    }
    let mut sum = first.clone();
    for g in &clipped[1..] {
        sum.add_assign(g);
    }
    finish_aggregate(&mut sum, clipped.len(), c, z, rng);
    Ok(sum)
}

/// Shared tail of the aggregation: perturb the sum with one Gaussian draw per
/// coordinate and divide by the batch size. The training loop accumulates its
/// sum incrementally and lands here, so both paths add noise identically.
fn finish_aggregate<R: Rng>(
    sum: &mut GradientBuffer,
    batch_len: usize,
    c: f64,
    z: f64,
    rng: &mut R,
) {
    if z > 0.0 {
        sum.perturb_with(z * c, || rng.sample::<f64, _>(StandardNormal));
    }
    sum.scale(1.0 / batch_len as f64);
}

/// Accuracy of a model over an encoded matrix.
pub fn model_accuracy(model: &MlpModel, data: &EncodedMatrix) -> Result<f64, ModelError> {
    let predictions = model.predict_rows(&data.features)?;
    let correct = predictions
        .iter()
        .zip(&data.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / data.n().max(1) as f64)
}

/// Run the DP-SGD loop: E epochs of Poisson batches, per-example backprop,
/// clipping, noisy aggregation, and SGD updates. `hidden` gives the hidden
/// layer widths; input and class widths come from the data.
///
/// When a budget is declared, the (config, budget) pair is re-verified
/// through the accountant before training starts.
pub fn dp_train(
    train: &EncodedMatrix,
    validation: Option<&EncodedMatrix>,
    config: &DpSgdConfig,
    budget: Option<PrivacyBudget>,
    hidden: &[usize],
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if config.n != train.n() {
        return Err(TrainError::InvalidConfig(format!(
            "config.n = {} but the training matrix has {} rows",
            config.n,
            train.n()
        )));
    }
    if let Some(budget) = budget {
        let achieved = accountant::compute_epsilon(
            config.n,
            config.batch_size,
            config.epochs,
            config.noise_multiplier,
            budget.delta,
        )?;
        if achieved > budget.epsilon + BUDGET_VERIFY_SLACK {
            return Err(TrainError::BudgetMismatch {
                achieved,
                target: budget.epsilon,
            });
        }
    }
    let dims = layer_dims(train, hidden);
    let mut model = MlpModel::new_seeded(&dims, config.seed)?;
    let mut batch_rng = rng::stream_rng(config.seed, rng::stream::BATCH);
    let mut noise_rng = rng::stream_rng(config.seed, rng::stream::NOISE);
    let mut ws = model.workspace();
    let mut example_grad = GradientBuffer::zeros_like(&model);
    let mut sum = GradientBuffer::zeros_like(&model);
    let q = config.sampling_rate();
    let total_steps = config.steps();
    let mut batch: Vec<usize> = Vec::with_capacity(config.batch_size * 2);

    for step in 0..total_steps {
        batch.clear();
        for i in 0..config.n {
            if batch_rng.random::<f64>() < q {
                batch.push(i);
            }
        }
        if batch.is_empty() {
            // Poisson sampling can come up empty; the step still counts
            // toward the accounted total.
            continue;
        }
        sum.fill_zero();
        for &i in &batch {
            let loss = model.backprop_into(
                train.features.row(i),
                train.labels[i],
                &mut ws,
                &mut example_grad,
            )?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    step,
                    config: *config,
                });
            }
            clip_in_place(&mut example_grad, config.clip_bound)?;
            sum.add_assign(&example_grad);
        }
        finish_aggregate(
            &mut sum,
            batch.len(),
            config.clip_bound,
            config.noise_multiplier,
            &mut noise_rng,
        );
        model.apply_step(&sum, config.learning_rate);
        if !model.is_finite() {
            return Err(TrainError::Diverged {
                step,
                config: *config,
            });
        }
    }

    let validation_accuracy = model_accuracy(&model, validation.unwrap_or(train))?;
    Ok(TrainedModel {
        model,
        config: *config,
        budget,
        validation_accuracy,
    })
}

/// Plain (non-private) minibatch SGD: shuffled epochs, batch-mean gradients.
/// Used for hyperparameter tuning, the non-private baseline, and the MLP
/// downstream model.
pub fn sgd_train(
    data: &EncodedMatrix,
    hidden: &[usize],
    batch_size: usize,
    epochs: u32,
    learning_rate: f64,
    seed: u64,
) -> Result<MlpModel, TrainError> {
    if batch_size == 0 || epochs == 0 || learning_rate.is_nan() || learning_rate <= 0.0 {
        return Err(TrainError::InvalidConfig(
            "batch size, epochs, and learning rate must be positive".into(),
        ));
    }
    let dims = layer_dims(data, hidden);
    let mut model = MlpModel::new_seeded(&dims, seed)?;
    let mut order_rng = rng::stream_rng(seed, rng::stream::BATCH);
    let mut ws = model.workspace();
    let mut example_grad = GradientBuffer::zeros_like(&model);
    let mut sum = GradientBuffer::zeros_like(&model);
    let n = data.n();
    for epoch in 0..epochs {
        let order = rng::permutation(n, &mut order_rng);
        for chunk in order.chunks(batch_size.min(n)) {
            sum.fill_zero();
            for &i in chunk {
                model.backprop_into(
                    data.features.row(i),
                    data.labels[i],
                    &mut ws,
                    &mut example_grad,
                )?;
                sum.add_assign(&example_grad);
            }
            sum.scale(1.0 / chunk.len() as f64);
            model.apply_step(&sum, learning_rate);
        }
        if !model.is_finite() {
            return Err(TrainError::Diverged {
                step: (epoch as u64 + 1) * n.div_ceil(batch_size) as u64,
                config: DpSgdConfig {
                    n,
                    batch_size,
                    epochs,
                    learning_rate,
                    clip_bound: f64::INFINITY,
                    noise_multiplier: 0.0,
                    seed,
                },
            });
        }
    }
    Ok(model)
}

/// The (b, E, η) grid searched by [`tune_hyperparameters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<u32>,
    pub learning_rates: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            batch_sizes: vec![64, 128, 256],
            epochs: vec![10, 20, 40],
            learning_rates: vec![0.05, 0.1, 0.2],
        }
    }
}

impl HyperGrid {
    pub fn is_empty(&self) -> bool {
        self.batch_sizes.is_empty() || self.epochs.is_empty() || self.learning_rates.is_empty()
    }
}

/// The tuning stage's output: the selected SGD hyperparameters plus the
/// calibrated clipping bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub batch_size: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub clip_bound: f64,
}

/// Grid search for the (b, E, η) maximizing non-private validation accuracy,
/// then calibrate the clipping bound to the median per-example gradient norm
/// of a one-epoch non-private warm-up at the selected settings.
pub fn tune_hyperparameters(
    train: &EncodedMatrix,
    validation: &EncodedMatrix,
    grid: &HyperGrid,
    hidden: &[usize],
    seed: u64,
) -> Result<TunedParams, TrainError> {
    if grid.is_empty() {
        return Err(TrainError::TuningFailed(format!("{grid:?}")));
    }
    let mut best: Option<(f64, usize, u32, f64)> = None;
    for &b in &grid.batch_sizes {
        for &e in &grid.epochs {
            for &lr in &grid.learning_rates {
                let b = b.min(train.n());
                let model = match sgd_train(train, hidden, b, e, lr, seed) {
                    Ok(m) => m,
                    Err(TrainError::Diverged { .. }) => continue,
                    Err(other) => return Err(other),
                };
                let acc = model_accuracy(&model, validation)?;
                if best.is_none_or(|(a, ..)| acc > a) {
                    best = Some((acc, b, e, lr));
                }
            }
        }
    }
    let Some((_, batch_size, epochs, learning_rate)) = best else {
        return Err(TrainError::TuningFailed(format!("{grid:?}")));
    };
    let clip_bound = warmup_clip_bound(train, hidden, batch_size, learning_rate, seed)?;
    Ok(TunedParams {
        batch_size,
        epochs,
        learning_rate,
        clip_bound,
    })
}

/// One non-private warm-up epoch; returns the median per-example gradient
/// norm observed along the way. Replayable from the public pieces: the model
/// is `MlpModel::new_seeded(dims, seed)` and the batch order comes from the
/// WARMUP stream of the seed.
pub fn warmup_clip_bound(
    train: &EncodedMatrix,
    hidden: &[usize],
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<f64, TrainError> {
    let dims = layer_dims(train, hidden);
    let mut model = MlpModel::new_seeded(&dims, seed)?;
    let mut order_rng = rng::stream_rng(seed, rng::stream::WARMUP);
    let mut ws = model.workspace();
    let mut example_grad = GradientBuffer::zeros_like(&model);
    let mut sum = GradientBuffer::zeros_like(&model);
    let n = train.n();
    let order = rng::permutation(n, &mut order_rng);
    let mut norms = Vec::with_capacity(n);
    for chunk in order.chunks(batch_size.min(n)) {
        sum.fill_zero();
        for &i in chunk {
            model.backprop_into(
                train.features.row(i),
                train.labels[i],
                &mut ws,
                &mut example_grad,
            )?;
            norms.push(example_grad.l2_norm());
            sum.add_assign(&example_grad);
        }
        sum.scale(1.0 / chunk.len() as f64);
        model.apply_step(&sum, learning_rate);
    }
    if norms.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NumericError("warm-up gradient norms".into()));
    }
    Ok(median(&mut norms))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn layer_dims(data: &EncodedMatrix, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(data.width());
    dims.extend_from_slice(hidden);
    dims.push(data.class_count());
    dims
}

/// The (ε, δ, z, b, E, η, C, seed) record embedded in every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub z: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub clip_bound: f64,
    pub seed: u64,
    pub steps: u64,
    pub sampling_rate: f64,
    pub noise_placement: String,
    pub validation_accuracy: f64,
}

/// Versioned JSON document holding the layer specs and parameters, the
/// encoding map the model was trained against, the schema, and the training
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub schema: Schema,
    pub encoding_map: EncodingMap,
    pub model: MlpModel,
    pub provenance: Provenance,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl ModelCheckpoint {
    pub fn from_trained(
        trained: &TrainedModel,
        schema: Schema,
        encoding_map: EncodingMap,
    ) -> Result<Self, TrainError> {
        let sampling = SamplingConfig::from_dataset(
            trained.config.n,
            trained.config.batch_size,
            trained.config.epochs,
        )?;
        Ok(Self {
            version: CHECKPOINT_VERSION,
            schema,
            encoding_map,
            model: trained.model.clone(),
            provenance: Provenance {
                epsilon: trained.budget.map(|b| b.epsilon),
                delta: trained.budget.map(|b| b.delta),
                z: trained.config.noise_multiplier,
                batch_size: trained.config.batch_size,
                epochs: trained.config.epochs,
                learning_rate: trained.config.learning_rate,
                clip_bound: trained.config.clip_bound,
                seed: trained.config.seed,
                steps: sampling.steps,
                sampling_rate: sampling.sampling_rate,
                noise_placement: NOISE_PLACEMENT.to_string(),
                validation_accuracy: trained.validation_accuracy,
            },
        })
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Stable fingerprint of the serialized checkpoint; referenced by
    /// synthetic-data provenance.
    pub fn id(&self) -> Result<String, TrainError> {
        Ok(format!(
            "{:016x}",
            rng::fingerprint(self.to_json()?.as_bytes())
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(self.to_json()?.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let file = File::open(path)?;
        let checkpoint: Self = serde_json::from_reader(BufReader::new(file))?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(TrainError::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                checkpoint.version
            )));
        }
        Ok(checkpoint)
    }
}
