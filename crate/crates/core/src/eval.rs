//! Downstream utility evaluation: train a model on synthetic data, score it
//! on the real held-out test split, and report accuracy, F1, and wall-clock
//! runtime next to a non-private baseline trained on the real train split.
//!
//! F1 is the binary F1 of the positive class (the higher label value unless
//! the schema overrides it). A model that never predicts the positive class
//! scores F1 = 0 and raises the collapse flag.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accountant::{self, AccountantError, PrivacyBudget};
use crate::data::{
    DataError, EncodedMatrix, EncodingMap, OovPolicy, PreprocessPolicy, Schema, TabularDataset,
};
use crate::mlp::{MlpModel, ModelError};
use crate::rng;
use crate::synth::{synthesize, SynthError, SyntheticDataset};
use crate::trainer::{
    self, dp_train, sgd_train, DpSgdConfig, HyperGrid, ModelCheckpoint, TrainError,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("training error: {0}")]
    Train(#[from] TrainError),
    #[error("synthesis error: {0}")]
    Synth(#[from] SynthError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("accountant error: {0}")]
    Accountant(#[from] AccountantError),
    #[error("linear SVM supports binary labels only, got {classes} classes")]
    NotBinary { classes: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Downstream model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownstreamModelKind {
    Mlp,
    LinearSvm,
}

impl std::fmt::Display for DownstreamModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DownstreamModelKind::Mlp => write!(f, "mlp"),
            DownstreamModelKind::LinearSvm => write!(f, "linear_svm"),
        }
    }
}

impl std::str::FromStr for DownstreamModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "linear_svm" | "svm" => Ok(Self::LinearSvm),
            other => Err(format!(
                "unknown downstream model '{other}' (use: mlp | linear_svm)"
            )),
        }
    }
}

/// Hinge objective for one point with L2 regularization:
/// max(0, 1 − y·(w·x + b)) + (λ/2)·‖w‖², with y ∈ {−1, +1}.
pub fn hinge_point_objective(w: &[f64], b: f64, x: &[f64], y: f64, lambda: f64) -> f64 {
    let margin = y * (dot(w, x) + b);
    (1.0 - margin).max(0.0) + 0.5 * lambda * dot(w, w)
}

/// Gradient of [`hinge_point_objective`] in (w, b). At the hinge kink the
/// margin-violation branch is taken.
pub fn hinge_point_gradient(w: &[f64], b: f64, x: &[f64], y: f64, lambda: f64) -> (Vec<f64>, f64) {
    let margin = y * (dot(w, x) + b);
    let mut grad_w: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
    let mut grad_b = 0.0;
    if margin <= 1.0 {
        for (g, xi) in grad_w.iter_mut().zip(x) {
            *g -= y * xi;
        }
        grad_b = -y;
    }
    (grad_w, grad_b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary linear SVM trained by SGD on hinge loss with L2 regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    weights: Vec<f64>,
    bias: f64,
    positive_class: usize,
    negative_class: usize,
}

impl LinearSvm {
    pub fn train(
        data: &EncodedMatrix,
        positive_class: usize,
        hyper: &DownstreamHyper,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let classes = data.class_count();
        if classes != 2 {
            return Err(EvalError::NotBinary { classes });
        }
        if positive_class >= classes {
            return Err(EvalError::InvalidArgument(format!(
                "positive class {positive_class} out of range"
            )));
        }
        let negative_class = 1 - positive_class;
        let width = data.width();
        let mut w = vec![0.0; width];
        let mut b = 0.0;
        let mut order_rng = rng::stream_rng(seed, rng::stream::DOWNSTREAM);
        let n = data.n();
        let signs: Vec<f64> = data
            .labels
            .iter()
            .map(|&c| if c == positive_class { 1.0 } else { -1.0 })
            .collect();
        let batch = hyper.svm_batch.min(n).max(1);
        let mut grad_w = vec![0.0; width];
        for _ in 0..hyper.svm_epochs {
            let order = rng::permutation(n, &mut order_rng);
            for chunk in order.chunks(batch) {
                for (g, wi) in grad_w.iter_mut().zip(&w) {
                    *g = hyper.svm_lambda * wi;
                }
                let mut grad_b = 0.0;
                let inv = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let x = data.features.row(i);
                    let y = signs[i];
                    if y * (dot(&w, x) + b) <= 1.0 {
                        for (g, xi) in grad_w.iter_mut().zip(x) {
                            *g -= inv * y * xi;
                        }
                        grad_b -= inv * y;
                    }
                }
                for (wi, g) in w.iter_mut().zip(&grad_w) {
                    *wi -= hyper.svm_lr * g;
                }
                b -= hyper.svm_lr * grad_b;
            }
        }
        Ok(Self {
            weights: w,
            bias: b,
            positive_class,
            negative_class,
        })
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        if self.margin(x) > 0.0 {
            self.positive_class
        } else {
            self.negative_class
        }
    }
}

/// A trained downstream model of either family.
#[derive(Debug, Clone)]
pub enum DownstreamModel {
    Mlp(MlpModel),
    Svm(LinearSvm),
}

impl DownstreamModel {
    pub fn predict(&self, x: &[f64]) -> Result<usize, EvalError> {
        match self {
            DownstreamModel::Mlp(m) => Ok(m.predict(x)?),
            DownstreamModel::Svm(s) => Ok(s.predict(x)),
        }
    }
}

/// A downstream model together with the encoding it was fitted under.
#[derive(Debug, Clone)]
pub struct FittedDownstream {
    pub kind: DownstreamModelKind,
    pub model: DownstreamModel,
    pub schema: Schema,
    pub encoding_map: EncodingMap,
    /// True when the training labels collapsed to a single class; the model
    /// still trains and predicts that constant class.
    pub degenerate_labels: bool,
}

/// Fixed downstream hyperparameters; never tuned against the real test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamHyper {
    pub mlp_hidden: Vec<usize>,
    pub mlp_batch: usize,
    pub mlp_epochs: u32,
    pub mlp_lr: f64,
    pub svm_lambda: f64,
    pub svm_batch: usize,
    pub svm_epochs: u32,
    pub svm_lr: f64,
}

impl Default for DownstreamHyper {
    fn default() -> Self {
        Self {
            mlp_hidden: vec![64, 64],
            mlp_batch: 128,
            mlp_epochs: 30,
            mlp_lr: 0.1,
            svm_lambda: 1e-4,
            svm_batch: 64,
            svm_epochs: 30,
            svm_lr: 0.1,
        }
    }
}

/// Train a downstream model on (typically synthetic) tabular data. The
/// encoding is fitted on the given training data; the label domain comes from
/// its schema so evaluation labels always resolve.
pub fn train_downstream(
    kind: DownstreamModelKind,
    train: &TabularDataset,
    hyper: &DownstreamHyper,
    seed: u64,
) -> Result<FittedDownstream, EvalError> {
    let schema = train.schema().refit_attributes(train)?;
    let encoded = train.encode(&schema)?;
    let mut observed = vec![false; encoded.class_count()];
    for &y in &encoded.labels {
        observed[y] = true;
    }
    let degenerate_labels = observed.iter().filter(|&&b| b).count() < 2;
    let model = match kind {
        DownstreamModelKind::Mlp => DownstreamModel::Mlp(sgd_train(
            &encoded,
            &hyper.mlp_hidden,
            hyper.mlp_batch,
            hyper.mlp_epochs,
            hyper.mlp_lr,
            rng::derive_seed(seed, rng::stream::DOWNSTREAM),
        )?),
        DownstreamModelKind::LinearSvm => DownstreamModel::Svm(LinearSvm::train(
            &encoded,
            schema.positive_class(),
            hyper,
            seed,
        )?),
    };
    Ok(FittedDownstream {
        kind,
        model,
        schema,
        encoding_map: encoded.encoding_map,
        degenerate_labels,
    })
}

/// Accuracy, binary F1 on the positive class, and the collapse flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub collapse: bool,
}

/// Metrics from prediction/label pairs; the confusion-matrix arithmetic in
/// one place.
pub fn metrics_from_predictions(
    predictions: &[usize],
    labels: &[usize],
    positive_class: usize,
) -> Result<Metrics, EvalError> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(EvalError::EmptyTestSet);
    }
    let (mut correct, mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            correct += 1;
        }
        match (p == positive_class, y == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    let f1 = if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok(Metrics {
        accuracy: correct as f64 / predictions.len() as f64,
        f1,
        collapse: tp + fp == 0,
    })
}

/// Score a fitted model on the real test split. Test rows are encoded with
/// the model's own map; unseen categories become zero blocks.
pub fn evaluate(fitted: &FittedDownstream, test: &TabularDataset) -> Result<Metrics, EvalError> {
    if test.n() == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    let encoded = test.encode_with(&fitted.schema, OovPolicy::ZeroBlock)?;
    let mut predictions = Vec::with_capacity(encoded.n());
    for i in 0..encoded.n() {
        predictions.push(fitted.model.predict(encoded.features.row(i))?);
    }
    metrics_from_predictions(
        &predictions,
        &encoded.labels,
        fitted.schema.positive_class(),
    )
}

/// DP trainer settings for benchmark cells. `clip_bound: None` calibrates the
/// bound from the warm-up median; `noise_multiplier: None` asks the
/// accountant for the smallest z meeting the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSettings {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub clip_bound: Option<f64>,
    pub noise_multiplier: Option<f64>,
    pub tune: bool,
    pub grid: HyperGrid,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            batch_size: 1024,
            epochs: 40,
            learning_rate: 0.8,
            clip_bound: None,
            noise_multiplier: None,
            tune: false,
            grid: HyperGrid::default(),
        }
    }
}

/// Benchmark harness options.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub trainer: TrainerSettings,
    pub downstream: DownstreamHyper,
    pub preprocess: PreprocessPolicy,
    /// Record wall-clock runtimes in reports. Off for byte-reproducible
    /// artifacts, on for efficiency experiments.
    pub measure_runtime: bool,
    /// A cell exceeding this budget is reported as timed out instead of
    /// failing the suite.
    pub cell_timeout: Duration,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            trainer: TrainerSettings::default(),
            downstream: DownstreamHyper::default(),
            preprocess: PreprocessPolicy::default(),
            measure_runtime: true,
            cell_timeout: Duration::from_secs(6 * 3600),
        }
    }
}

/// Metrics of one repeat of one (synthesizer, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub f1: f64,
    pub collapse: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synth_runtime_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_runtime_s: Option<f64>,
}

/// One (dataset, synthesizer, model) cell of the benchmark, averaged over
/// repeats. Timed-out cells carry zero metrics and `timed_out = true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub synthesizer: String,
    pub model: DownstreamModelKind,
    pub accuracy: f64,
    pub f1: f64,
    pub collapse: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synth_runtime_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_runtime_s: Option<f64>,
    pub seed: u64,
    pub repeat_count: u32,
    pub scale_factor: usize,
    pub timed_out: bool,
    pub per_repeat: Vec<RepeatMetrics>,
}

/// The synthesizer ids reported by the harness.
pub const SYNTH_DPDSYN: &str = "dpdsyn";
pub const SYNTH_NP_BASELINE: &str = "np_baseline";

/// Everything produced by one pipeline cell: the DP model, the synthetic
/// dataset, and per-model-kind metrics for both the synthetic-trained model
/// and the non-private baseline.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub checkpoint: ModelCheckpoint,
    pub synthetic: SyntheticDataset,
    pub synth_runtime_s: Option<f64>,
    pub per_kind: Vec<KindOutcome>,
}

#[derive(Debug, Clone)]
pub struct KindOutcome {
    pub kind: DownstreamModelKind,
    pub dpdsyn: Metrics,
    pub dpdsyn_train_s: Option<f64>,
    pub np_baseline: Metrics,
    pub np_train_s: Option<f64>,
    pub degenerate_labels: bool,
}

/// The preprocessed 8:1:1 split with the encoding fitted on the train split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: TabularDataset,
    pub validation: TabularDataset,
    pub test: TabularDataset,
    pub enc_schema: Schema,
    pub train_enc: EncodedMatrix,
    pub validation_enc: EncodedMatrix,
}

/// Preprocess and split a dataset, fitting the feature encoding (categorical
/// domains, numeric ranges) on the train split only.
pub fn prepare(
    dataset: &TabularDataset,
    policy: &PreprocessPolicy,
    seed: u64,
) -> Result<Prepared, EvalError> {
    let pre = dataset.preprocess(policy)?;
    let (train, validation, test) = pre.split(seed)?;
    let enc_schema = pre.schema().refit_attributes(&train)?;
    let train_enc = train.encode(&enc_schema)?;
    let validation_enc = validation.encode_with(&enc_schema, OovPolicy::ZeroBlock)?;
    Ok(Prepared {
        train,
        validation,
        test,
        enc_schema,
        train_enc,
        validation_enc,
    })
}

/// The training stage: resolve the clipping bound (explicit, tuned, or
/// warm-up median), resolve the noise multiplier (explicit or accountant),
/// run DP-SGD, and package the checkpoint.
pub fn train_dp_model(
    prepared: &Prepared,
    budget: PrivacyBudget,
    seed: u64,
    settings: &TrainerSettings,
) -> Result<ModelCheckpoint, EvalError> {
    let train_enc = &prepared.train_enc;
    let n = train_enc.n();
    let (batch_size, epochs, learning_rate, clip_bound) = if settings.tune {
        let tuned = trainer::tune_hyperparameters(
            train_enc,
            &prepared.validation_enc,
            &settings.grid,
            &settings.hidden,
            seed,
        )?;
        (
            tuned.batch_size,
            tuned.epochs,
            tuned.learning_rate,
            tuned.clip_bound,
        )
    } else {
        let clip = match settings.clip_bound {
            Some(c) => c,
            None => trainer::warmup_clip_bound(
                train_enc,
                &settings.hidden,
                settings.batch_size.min(n),
                settings.learning_rate,
                seed,
            )?,
        };
        (
            settings.batch_size.min(n),
            settings.epochs,
            settings.learning_rate,
            clip,
        )
    };
    let noise_multiplier = match settings.noise_multiplier {
        Some(z) => z,
        None => accountant::compute_noise(n, batch_size, epochs, &budget)?,
    };
    let config = DpSgdConfig {
        n,
        batch_size,
        epochs,
        learning_rate,
        clip_bound,
        noise_multiplier,
        seed,
    };
    let trained = dp_train(
        train_enc,
        Some(&prepared.validation_enc),
        &config,
        Some(budget),
        &settings.hidden,
    )?;
    Ok(ModelCheckpoint::from_trained(
        &trained,
        prepared.enc_schema.clone(),
        train_enc.encoding_map.clone(),
    )?)
}

/// Run one full cell: preprocess, split 8:1:1, calibrate, train the DP model,
/// synthesize from the train split, then train and score every downstream
/// kind on the synthetic data and on the real train split.
pub fn run_cell(
    dataset: &TabularDataset,
    budget: PrivacyBudget,
    kinds: &[DownstreamModelKind],
    seed: u64,
    options: &BenchOptions,
) -> Result<CellOutcome, EvalError> {
    let prepared = prepare(dataset, &options.preprocess, seed)?;
    // Synthesis wall-clock covers DP training + shuffle + relabel.
    let synth_start = Instant::now();
    let checkpoint = train_dp_model(&prepared, budget, seed, &options.trainer)?;
    let (train, test) = (prepared.train, prepared.test);
    let synthetic = synthesize(&train, &checkpoint, seed)?;
    let synth_runtime_s = options
        .measure_runtime
        .then(|| synth_start.elapsed().as_secs_f64());

    let synth_tab = synthetic.to_dataset()?;
    let downstream_seed = rng::derive_seed(seed, rng::stream::DOWNSTREAM);
    let mut per_kind = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let t0 = Instant::now();
        let fitted_dp = train_downstream(kind, &synth_tab, &options.downstream, downstream_seed)?;
        let dpdsyn_train_s = options.measure_runtime.then(|| t0.elapsed().as_secs_f64());
        let dpdsyn = evaluate(&fitted_dp, &test)?;

        let t1 = Instant::now();
        let fitted_np = train_downstream(kind, &train, &options.downstream, downstream_seed)?;
        let np_train_s = options.measure_runtime.then(|| t1.elapsed().as_secs_f64());
        let np_baseline = evaluate(&fitted_np, &test)?;

        per_kind.push(KindOutcome {
            kind,
            dpdsyn,
            dpdsyn_train_s,
            np_baseline,
            np_train_s,
            degenerate_labels: fitted_dp.degenerate_labels,
        });
    }
    Ok(CellOutcome {
        checkpoint,
        synthetic,
        synth_runtime_s,
        per_kind,
    })
}

/// The full utility benchmark: `repeats` independent pipeline cells, means
/// reported per (synthesizer, model) pair, the non-private baseline included.
pub fn run_benchmark(
    dataset: &TabularDataset,
    dataset_id: &str,
    budget: PrivacyBudget,
    kinds: &[DownstreamModelKind],
    repeats: u32,
    seed: u64,
    options: &BenchOptions,
) -> Result<Vec<EvalReport>, EvalError> {
    run_benchmark_scaled(
        dataset, dataset_id, budget, kinds, repeats, seed, options, 1,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_benchmark_scaled(
    dataset: &TabularDataset,
    dataset_id: &str,
    budget: PrivacyBudget,
    kinds: &[DownstreamModelKind],
    repeats: u32,
    seed: u64,
    options: &BenchOptions,
    scale_factor: usize,
) -> Result<Vec<EvalReport>, EvalError> {
    if repeats == 0 {
        return Err(EvalError::InvalidArgument(
            "repeats must be at least 1".into(),
        ));
    }
    if kinds.is_empty() {
        return Err(EvalError::InvalidArgument(
            "no downstream model kinds given".into(),
        ));
    }
    let started = Instant::now();
    let mut cells: Vec<CellOutcome> = Vec::with_capacity(repeats as usize);
    let mut seeds: Vec<u64> = Vec::with_capacity(repeats as usize);
    let mut timed_out = false;
    for r in 0..repeats {
        if started.elapsed() >= options.cell_timeout {
            timed_out = true;
            break;
        }
        let repeat_seed = rng::derive_seed(seed, rng::stream::REPEAT_BASE + r as u64);
        seeds.push(repeat_seed);
        cells.push(run_cell(dataset, budget, kinds, repeat_seed, options)?);
    }
    if timed_out || cells.is_empty() {
        // Report the whole cell as T/O rather than failing the suite.
        return Ok(kinds
            .iter()
            .flat_map(|&kind| {
                [SYNTH_NP_BASELINE, SYNTH_DPDSYN].map(|synthesizer| EvalReport {
                    dataset: dataset_id.to_string(),
                    synthesizer: synthesizer.to_string(),
                    model: kind,
                    accuracy: 0.0,
                    f1: 0.0,
                    collapse: false,
                    synth_runtime_s: None,
                    train_runtime_s: None,
                    seed,
                    repeat_count: repeats,
                    scale_factor,
                    timed_out: true,
                    per_repeat: Vec::new(),
                })
            })
            .collect());
    }
    Ok(assemble_reports(
        dataset_id,
        kinds,
        &cells,
        &seeds,
        seed,
        repeats,
        scale_factor,
    ))
}

/// Mean-of-repeats reports, one per (synthesizer, model kind) pair, with the
/// per-repeat rows embedded.
pub fn assemble_reports(
    dataset_id: &str,
    kinds: &[DownstreamModelKind],
    cells: &[CellOutcome],
    seeds: &[u64],
    seed: u64,
    repeats: u32,
    scale_factor: usize,
) -> Vec<EvalReport> {
    let mut reports = Vec::with_capacity(kinds.len() * 2);
    for (k, &kind) in kinds.iter().enumerate() {
        for synthesizer in [SYNTH_NP_BASELINE, SYNTH_DPDSYN] {
            let pick = |cell: &CellOutcome| -> (Metrics, Option<f64>, Option<f64>) {
                let outcome = &cell.per_kind[k];
                match synthesizer {
                    SYNTH_DPDSYN => (outcome.dpdsyn, cell.synth_runtime_s, outcome.dpdsyn_train_s),
                    _ => (outcome.np_baseline, None, outcome.np_train_s),
                }
            };
            let per_repeat: Vec<RepeatMetrics> = cells
                .iter()
                .zip(seeds)
                .map(|(cell, &rs)| {
                    let (m, synth_s, train_s) = pick(cell);
                    RepeatMetrics {
                        seed: rs,
                        accuracy: m.accuracy,
                        f1: m.f1,
                        collapse: m.collapse,
                        synth_runtime_s: synth_s,
                        train_runtime_s: train_s,
                    }
                })
                .collect();
            let count = per_repeat.len() as f64;
            let mean =
                |f: &dyn Fn(&RepeatMetrics) -> f64| per_repeat.iter().map(f).sum::<f64>() / count;
            let mean_opt = |f: &dyn Fn(&RepeatMetrics) -> Option<f64>| {
                let vals: Vec<f64> = per_repeat.iter().filter_map(f).collect();
                (vals.len() == per_repeat.len()).then(|| vals.iter().sum::<f64>() / count)
            };
            reports.push(EvalReport {
                dataset: dataset_id.to_string(),
                synthesizer: synthesizer.to_string(),
                model: kind,
                accuracy: mean(&|r| r.accuracy),
                f1: mean(&|r| r.f1),
                collapse: per_repeat.iter().any(|r| r.collapse),
                synth_runtime_s: mean_opt(&|r| r.synth_runtime_s),
                train_runtime_s: mean_opt(&|r| r.train_runtime_s),
                seed,
                repeat_count: repeats,
                scale_factor,
                timed_out: false,
                per_repeat,
            });
        }
    }
    reports
}

/// The scalability experiment: bootstrap the dataset to each factor, re-run
/// the full benchmark (the accountant recalibrates for the scaled N), and tag
/// every report with its factor.
#[allow(clippy::too_many_arguments)]
pub fn scalability_run(
    dataset: &TabularDataset,
    dataset_id: &str,
    factors: &[usize],
    budget: PrivacyBudget,
    kinds: &[DownstreamModelKind],
    repeats: u32,
    seed: u64,
    options: &BenchOptions,
) -> Result<Vec<EvalReport>, EvalError> {
    if factors.is_empty() || factors.iter().any(|f| !(1..=3).contains(f)) {
        return Err(EvalError::InvalidArgument(
            "scale factors must be a non-empty subset of {1, 2, 3}".into(),
        ));
    }
    let mut reports = Vec::new();
    for &factor in factors {
        let scaled = dataset.bootstrap_scale(factor, seed)?;
        reports.extend(run_benchmark_scaled(
            &scaled, dataset_id, budget, kinds, repeats, seed, options, factor,
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv_reader, Cell};

    /// Linearly separable tabular data with a margin gap: one numeric column
    /// decides the label.
    fn separable_tabular(n: usize) -> TabularDataset {
        let mut csv = String::from("x,extra,y\n");
        for i in 0..n {
            let t = i as f64 / n as f64;
            let (x, label) = if i % 2 == 0 {
                (0.4 * t, "neg")
            } else {
                (0.6 + 0.4 * t, "pos")
            };
            csv.push_str(&format!("{x},{},{label}\n", i % 7));
        }
        load_csv_reader(csv.as_bytes(), None).unwrap()
    }

    #[test]
    fn separable_data_trains_to_perfect_accuracy() {
        let d = separable_tabular(80);
        let hyper = DownstreamHyper {
            mlp_epochs: 200,
            svm_epochs: 200,
            ..DownstreamHyper::default()
        };
        for kind in [DownstreamModelKind::Mlp, DownstreamModelKind::LinearSvm] {
            let fitted = train_downstream(kind, &d, &hyper, 7).unwrap();
            let m = evaluate(&fitted, &d).unwrap();
            assert!(m.accuracy > 0.99, "{kind} reached only {}", m.accuracy);
        }
    }

    #[test]
    fn single_class_labels_yield_a_constant_predictor() {
        let d = separable_tabular(40);
        let rows: Vec<Vec<Cell>> = d
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let last = r.len() - 1;
                r[last] = Cell::Cat("neg".into());
                r
            })
            .collect();
        let constant = TabularDataset::from_parts(d.schema().clone(), rows).unwrap();
        for kind in [DownstreamModelKind::Mlp, DownstreamModelKind::LinearSvm] {
            let fitted = train_downstream(kind, &constant, &DownstreamHyper::default(), 3).unwrap();
            assert!(fitted.degenerate_labels);
            // scored against mixed labels, the absent class earns F1 = 0
            let m = evaluate(&fitted, &d).unwrap();
            assert_eq!(m.f1, 0.0);
            assert!(m.collapse);
        }
    }

    #[test]
    fn hinge_gradient_matches_finite_differences() {
        use rand::Rng;
        let mut rng = rng::seeded(11);
        for _ in 0..20 {
            let dim = rng.random_range(2..6usize);
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: f64 = rng.random_range(-1.0..1.0);
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = if rng.random_range(0..2) == 0 {
                -1.0
            } else {
                1.0
            };
            let lambda = 0.01;
            let margin = y * (dot(&w, &x) + b);
            if (margin - 1.0).abs() < 1e-3 {
                continue; // keep clear of the hinge kink
            }
            let (gw, gb) = hinge_point_gradient(&w, b, &x, y, lambda);
            let h = 1e-6;
            for i in 0..dim {
                let mut wp = w.clone();
                wp[i] += h;
                let up = hinge_point_objective(&wp, b, &x, y, lambda);
                wp[i] -= 2.0 * h;
                let down = hinge_point_objective(&wp, b, &x, y, lambda);
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - gw[i]).abs() < 1e-5,
                    "w[{i}]: fd {fd} vs analytic {}",
                    gw[i]
                );
            }
            let up = hinge_point_objective(&w, b + h, &x, y, lambda);
            let down = hinge_point_objective(&w, b - h, &x, y, lambda);
            assert!(((up - down) / (2.0 * h) - gb).abs() < 1e-5);
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let m = metrics_from_predictions(&[0, 1, 1, 0], &[0, 1, 1, 0], 1).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
        assert!(!m.collapse);
    }

    #[test]
    fn never_positive_predictor_collapses() {
        let m = metrics_from_predictions(&[0, 0, 0, 0], &[0, 1, 1, 0], 1).unwrap();
        assert_eq!(m.f1, 0.0);
        assert!(m.collapse);
    }

    #[test]
    fn f1_matches_confusion_matrix_arithmetic() {
        // TP=3, FP=1, FN=2 -> F1 = 2*3 / (2*3 + 1 + 2) = 6/9
        let predictions = [1, 1, 1, 1, 0, 0, 0];
        let labels = [1, 1, 1, 0, 1, 1, 0];
        let m = metrics_from_predictions(&predictions, &labels, 1).unwrap();
        assert!((m.f1 - 6.0 / 9.0).abs() < 1e-12);
        assert!((m.accuracy - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(matches!(
            metrics_from_predictions(&[], &[], 1),
            Err(EvalError::EmptyTestSet)
        ));
    }

    #[test]
    fn scalability_rejects_bad_factors() {
        let d = separable_tabular(40);
        let budget = PrivacyBudget::new(3.0, 1e-5).unwrap();
        let err = scalability_run(
            &d,
            "toy",
            &[4],
            budget,
            &[DownstreamModelKind::Mlp],
            1,
            0,
            &BenchOptions::default(),
        );
        assert!(matches!(err, Err(EvalError::InvalidArgument(_))));
    }

    #[test]
    fn metrics_stay_in_unit_interval() {
        use proptest::prelude::*;
        use proptest::test_runner::TestRunner;
        let mut runner = TestRunner::default();
        runner
            .run(
                &(
                    proptest::collection::vec(0usize..3, 1..50),
                    proptest::collection::vec(0usize..3, 1..50),
                    0usize..3,
                ),
                |(mut predictions, labels, positive)| {
                    predictions.resize(labels.len(), 0);
                    let m = metrics_from_predictions(&predictions, &labels, positive).unwrap();
                    prop_assert!((0.0..=1.0).contains(&m.accuracy));
                    prop_assert!((0.0..=1.0).contains(&m.f1));
                    Ok(())
                },
            )
            .unwrap();
    }

    #[test]
    fn kind_parsing_round_trips() {
        assert_eq!(
            "mlp".parse::<DownstreamModelKind>().unwrap(),
            DownstreamModelKind::Mlp
        );
        assert_eq!(
            "linear_svm".parse::<DownstreamModelKind>().unwrap(),
            DownstreamModelKind::LinearSvm
        );
        assert!("transformer".parse::<DownstreamModelKind>().is_err());
    }

    #[test]
    fn exhausted_timeout_reports_cells_as_timed_out() {
        let d = crate::sample::census(600, 4);
        let budget = PrivacyBudget::new(4.0, 1e-5).unwrap();
        let options = BenchOptions {
            cell_timeout: Duration::ZERO,
            ..BenchOptions::default()
        };
        let reports = run_benchmark(
            &d,
            "census",
            budget,
            &[DownstreamModelKind::Mlp],
            3,
            5,
            &options,
        )
        .unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert!(r.timed_out);
            assert!(r.per_repeat.is_empty());
        }
    }

    #[test]
    fn scale_factor_one_equals_the_plain_benchmark() {
        let d = crate::sample::census(600, 4);
        let budget = PrivacyBudget::new(4.0, 1e-5).unwrap();
        let kinds = [DownstreamModelKind::Mlp];
        let options = BenchOptions {
            trainer: TrainerSettings {
                hidden: vec![8],
                batch_size: 64,
                epochs: 3,
                ..TrainerSettings::default()
            },
            measure_runtime: false,
            ..BenchOptions::default()
        };
        let bench = run_benchmark(&d, "census", budget, &kinds, 1, 5, &options).unwrap();
        let scaled = scalability_run(&d, "census", &[1], budget, &kinds, 1, 5, &options).unwrap();
        assert_eq!(bench, scaled);
    }

    #[test]
    fn benchmark_mean_is_recomputable_from_per_repeat_rows() {
        let d = crate::sample::census(600, 4);
        let budget = PrivacyBudget::new(4.0, 1e-5).unwrap();
        let options = BenchOptions {
            trainer: TrainerSettings {
                hidden: vec![8],
                batch_size: 64,
                epochs: 3,
                ..TrainerSettings::default()
            },
            measure_runtime: false,
            ..BenchOptions::default()
        };
        let reports = run_benchmark(
            &d,
            "census",
            budget,
            &[DownstreamModelKind::Mlp],
            2,
            5,
            &options,
        )
        .unwrap();
        for r in &reports {
            assert_eq!(r.repeat_count, 2);
            assert_eq!(r.per_repeat.len(), 2);
            let mean_acc =
                r.per_repeat.iter().map(|m| m.accuracy).sum::<f64>() / r.per_repeat.len() as f64;
            let mean_f1 =
                r.per_repeat.iter().map(|m| m.f1).sum::<f64>() / r.per_repeat.len() as f64;
            assert!((mean_acc - r.accuracy).abs() < 1e-12);
            assert!((mean_f1 - r.f1).abs() < 1e-12);
        }
    }
}
