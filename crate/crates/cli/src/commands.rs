//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use dpdsyn_core::accountant::{self, EpsilonReport, PrivacyBudget};
use dpdsyn_core::data::{self, PreprocessPolicy, TabularDataset};
use dpdsyn_core::eval::{
    self, BenchOptions, DownstreamHyper, DownstreamModelKind, EvalReport, TrainerSettings,
};
use dpdsyn_core::pipeline::{
    run_pipeline, PipelineConfig, MODEL_FILE, PROVENANCE_FILE, REPORT_FILE, SYNTHETIC_FILE,
};
use dpdsyn_core::sample;
use dpdsyn_core::synth::{synthesize_with_options, SynthOptions};
use dpdsyn_core::trainer::ModelCheckpoint;

use crate::config::{dataset_id, RunConfig, OUT_DIR_ENV};
use crate::error::{CliError, Result};
use crate::summary;

fn load_dataset(csv: &Path, schema: Option<&PathBuf>) -> Result<TabularDataset> {
    let hint = match schema {
        Some(path) => Some(data::load_schema(path)?),
        None => None,
    };
    Ok(data::load_csv(csv, hint.as_ref())?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn resolve_out_dir(flag: &str) -> PathBuf {
    match std::env::var(OUT_DIR_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(flag),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// infer-schema
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct InferSchemaArgs {
    /// CSV file to inspect
    #[arg(long)]
    pub csv: PathBuf,
    /// Where to write the schema JSON; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn infer_schema(args: InferSchemaArgs) -> Result<()> {
    let dataset = data::load_csv(&args.csv, None)?;
    match &args.out {
        Some(path) => {
            data::save_schema(dataset.schema(), path)?;
            eprintln!("schema written to {}", path.display());
        }
        None => {
            let mut text = serde_json::to_string_pretty(dataset.schema())?;
            text.push('\n');
            print!("{text}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shared trainer flag block
// ---------------------------------------------------------------------------

#[derive(Args, Clone)]
pub struct TrainerFlags {
    /// Expected Poisson batch size b
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training epochs E
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Per-example gradient clipping bound C; calibrated from a warm-up
    /// median when omitted
    #[arg(long)]
    pub clip_bound: Option<f64>,
    /// Noise multiplier z; computed from the budget when omitted
    #[arg(long)]
    pub noise_multiplier: Option<f64>,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Grid-search (b, E, eta) and calibrate C before DP training
    #[arg(long)]
    pub tune: bool,
    /// Floor float-valued numerical columns to integers during preprocessing
    #[arg(long)]
    pub floor_floats: bool,
}

impl TrainerFlags {
    fn apply(&self, settings: &mut TrainerSettings) {
        if let Some(b) = self.batch_size {
            settings.batch_size = b;
        }
        if let Some(e) = self.epochs {
            settings.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            settings.learning_rate = lr;
        }
        if self.clip_bound.is_some() {
            settings.clip_bound = self.clip_bound;
        }
        if self.noise_multiplier.is_some() {
            settings.noise_multiplier = self.noise_multiplier;
        }
        if let Some(hidden) = &self.hidden {
            settings.hidden = hidden.clone();
        }
        if self.tune {
            settings.tune = true;
        }
    }

    fn preprocess(&self) -> PreprocessPolicy {
        PreprocessPolicy {
            floor_floats: self.floor_floats,
        }
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    /// Private dataset CSV (last column is the label)
    #[arg(long)]
    pub csv: PathBuf,
    /// Schema JSON; inferred from the CSV when omitted
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Target privacy loss bound
    #[arg(long)]
    pub epsilon: f64,
    /// Privacy failure probability
    #[arg(long, default_value_t = accountant::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for model.json and train_provenance.json
    #[arg(long, default_value = "out")]
    pub out_dir: String,
    #[command(flatten)]
    pub trainer: TrainerFlags,
}

/// Provenance record emitted next to the model checkpoint.
#[derive(Serialize)]
struct TrainProvenance {
    config_hash: String,
    dataset: String,
    seed: u64,
    target_epsilon: f64,
    delta: f64,
    accountant: EpsilonReport,
    checkpoint_id: String,
    noise_placement: String,
    validation_accuracy: f64,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let budget = PrivacyBudget::new(args.epsilon, args.delta)?;
    let dataset = load_dataset(&args.csv, args.schema.as_ref())?;
    let mut settings = TrainerSettings::default();
    args.trainer.apply(&mut settings);
    let prepared = eval::prepare(&dataset, &args.trainer.preprocess(), args.seed)?;
    let checkpoint = eval::train_dp_model(&prepared, budget, args.seed, &settings)?;

    let out_dir = resolve_out_dir(&args.out_dir);
    ensure_dir(&out_dir)?;
    let model_path = out_dir.join(MODEL_FILE);
    checkpoint.save(&model_path).map_err(CliError::Train)?;
    let p = &checkpoint.provenance;
    let accountant_report = accountant::compute_epsilon_detailed(
        prepared.train.n(),
        p.batch_size,
        p.epochs,
        p.z,
        args.delta,
    )?;
    let config_hash = format!(
        "{:016x}",
        dpdsyn_core::rng::fingerprint(
            format!(
                "train:{}:{}:{}:{}:{:?}",
                args.csv.display(),
                args.epsilon,
                args.delta,
                args.seed,
                (p.batch_size, p.epochs, p.learning_rate, p.clip_bound, p.z)
            )
            .as_bytes()
        )
    );
    let provenance = TrainProvenance {
        config_hash,
        dataset: dataset_id(&args.csv),
        seed: args.seed,
        target_epsilon: args.epsilon,
        delta: args.delta,
        accountant: accountant_report,
        checkpoint_id: checkpoint.id().map_err(CliError::Train)?,
        noise_placement: p.noise_placement.clone(),
        validation_accuracy: p.validation_accuracy,
    };
    write_json(&out_dir.join("train_provenance.json"), &provenance)?;
    eprintln!(
        "model written to {} (epsilon={:.4} at z={:.4}, validation accuracy {:.4})",
        model_path.display(),
        provenance.accountant.epsilon,
        p.z,
        p.validation_accuracy
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SynthArgs {
    /// Source dataset CSV
    #[arg(long)]
    pub csv: PathBuf,
    /// Schema JSON; inferred when omitted
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Model checkpoint produced by `train`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output CSV path; a provenance sidecar is written next to it
    #[arg(long)]
    pub out: PathBuf,
    /// Bootstrap-resample the rows this many times before shuffling
    #[arg(long, default_value_t = 1)]
    pub oversample: usize,
}

#[derive(Serialize)]
struct SynthSidecar<'a> {
    config_hash: String,
    source_dataset: String,
    synthetic_csv: String,
    provenance: &'a dpdsyn_core::synth::SynthProvenance,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let dataset = load_dataset(&args.csv, args.schema.as_ref())?;
    let checkpoint = ModelCheckpoint::load(&args.model).map_err(CliError::Train)?;
    let synthetic = synthesize_with_options(
        &dataset,
        &checkpoint,
        args.seed,
        SynthOptions {
            oversample_factor: args.oversample,
        },
    )?;
    let out_tab = synthetic.to_dataset()?;
    data::save_csv(&out_tab, &args.out)?;
    let sidecar_path = sidecar_path(&args.out);
    let config_hash = format!(
        "{:016x}",
        dpdsyn_core::rng::fingerprint(
            format!(
                "synth:{}:{}:{}:{}",
                args.csv.display(),
                args.model.display(),
                args.seed,
                args.oversample
            )
            .as_bytes()
        )
    );
    write_json(
        &sidecar_path,
        &SynthSidecar {
            config_hash,
            source_dataset: dataset_id(&args.csv),
            synthetic_csv: args.out.display().to_string(),
            provenance: synthetic.provenance(),
        },
    )?;
    eprintln!(
        "synthetic dataset written to {} ({} rows); provenance in {}",
        args.out.display(),
        out_tab.n(),
        sidecar_path.display()
    );
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic.csv".into());
    name.push_str(".provenance.json");
    out.with_file_name(name)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    /// Synthetic training CSV
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Real test CSV
    #[arg(long)]
    pub test: PathBuf,
    /// Downstream model kinds, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [DownstreamModelKind::Mlp, DownstreamModelKind::LinearSvm])]
    pub kinds: Vec<DownstreamModelKind>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock training time in the report
    #[arg(long)]
    pub measure_runtime: bool,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let synthetic = data::load_csv(&args.synthetic, None)?;
    let test = data::load_csv(&args.test, None)?;
    // The label universe is the union of both files' observed labels, so a
    // single-class synthetic CSV still trains (as a constant predictor)
    // rather than erroring.
    let synthetic = with_label_union(&synthetic, &test)?;
    let hyper = DownstreamHyper::default();
    let mut reports: Vec<EvalReport> = Vec::new();
    for &kind in &args.kinds {
        let t0 = std::time::Instant::now();
        let fitted = eval::train_downstream(kind, &synthetic, &hyper, args.seed)?;
        let train_runtime_s = args.measure_runtime.then(|| t0.elapsed().as_secs_f64());
        if fitted.degenerate_labels {
            eprintln!("warning: synthetic labels are single-class; {kind} predicts a constant");
        }
        let metrics = eval::evaluate(&fitted, &test)?;
        reports.push(EvalReport {
            dataset: dataset_id(&args.test),
            synthesizer: "synthetic_csv".to_string(),
            model: kind,
            accuracy: metrics.accuracy,
            f1: metrics.f1,
            collapse: metrics.collapse,
            synth_runtime_s: None,
            train_runtime_s,
            seed: args.seed,
            repeat_count: 1,
            scale_factor: 1,
            timed_out: false,
            per_repeat: vec![dpdsyn_core::eval::RepeatMetrics {
                seed: args.seed,
                accuracy: metrics.accuracy,
                f1: metrics.f1,
                collapse: metrics.collapse,
                synth_runtime_s: None,
                train_runtime_s,
            }],
        });
    }
    match &args.out {
        Some(path) => {
            write_json(path, &reports)?;
            eprintln!("report written to {}", path.display());
        }
        None => {
            let mut text = serde_json::to_string_pretty(&reports)?;
            text.push('\n');
            print!("{text}");
        }
    }
    Ok(())
}

/// Rebuild `a` with its label domain widened to the union of both datasets'
/// label values.
fn with_label_union(a: &TabularDataset, b: &TabularDataset) -> Result<TabularDataset> {
    use dpdsyn_core::data::{value_order, AttrDomain, AttributeSpec, Schema};
    let mut domain: Vec<String> = a.schema().label_domain().to_vec();
    for v in b.schema().label_domain() {
        if !domain.contains(v) {
            domain.push(v.clone());
        }
    }
    domain.sort_by(|x, y| value_order(x, y));
    let schema = Schema {
        attributes: a.schema().attributes.clone(),
        label: AttributeSpec {
            name: a.schema().label.name.clone(),
            domain: AttrDomain::Categorical { domain },
        },
        positive_label: a.schema().positive_label.clone(),
    };
    Ok(TabularDataset::from_parts(schema, a.rows().to_vec())?)
}

// ---------------------------------------------------------------------------
// bench / scale
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct BenchArgs {
    /// Private dataset CSV
    #[arg(long)]
    pub csv: PathBuf,
    /// Schema JSON; inferred when omitted
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Target privacy loss bound
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = accountant::DEFAULT_DELTA)]
    pub delta: f64,
    /// Downstream model kinds, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [DownstreamModelKind::Mlp, DownstreamModelKind::LinearSvm])]
    pub kinds: Vec<DownstreamModelKind>,
    /// Independent pipeline repeats averaged in the report
    #[arg(long, default_value_t = 5)]
    pub repeats: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for report.json and summary.csv
    #[arg(long, default_value = "out")]
    pub out_dir: String,
    /// Skip wall-clock measurement so reruns are byte-identical
    #[arg(long)]
    pub no_runtime: bool,
    /// Abort a cell and report T/O past this many seconds
    #[arg(long, default_value_t = 6.0 * 3600.0)]
    pub timeout_s: f64,
    #[command(flatten)]
    pub trainer: TrainerFlags,
}

fn bench_options(trainer: &TrainerFlags, no_runtime: bool, timeout_s: f64) -> BenchOptions {
    let mut settings = TrainerSettings::default();
    trainer.apply(&mut settings);
    BenchOptions {
        trainer: settings,
        downstream: DownstreamHyper::default(),
        preprocess: trainer.preprocess(),
        measure_runtime: !no_runtime,
        cell_timeout: std::time::Duration::from_secs_f64(timeout_s),
    }
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let budget = PrivacyBudget::new(args.epsilon, args.delta)?;
    let dataset = load_dataset(&args.csv, args.schema.as_ref())?;
    let options = bench_options(&args.trainer, args.no_runtime, args.timeout_s);
    let reports = eval::run_benchmark(
        &dataset,
        &dataset_id(&args.csv),
        budget,
        &args.kinds,
        args.repeats,
        args.seed,
        &options,
    )?;
    let out_dir = resolve_out_dir(&args.out_dir);
    ensure_dir(&out_dir)?;
    write_json(&out_dir.join("report.json"), &reports)?;
    let table = summary::utility_table(&reports, &args.kinds);
    fs::write(out_dir.join("summary.csv"), &table)?;
    eprintln!("benchmark written to {}", out_dir.display());
    print!("{table}");
    Ok(())
}

#[derive(Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Bootstrap scale factors, a subset of 1,2,3
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    pub factors: Vec<usize>,
}

pub fn scale(args: ScaleArgs) -> Result<()> {
    let budget = PrivacyBudget::new(args.bench.epsilon, args.bench.delta)?;
    let dataset = load_dataset(&args.bench.csv, args.bench.schema.as_ref())?;
    let options = bench_options(
        &args.bench.trainer,
        args.bench.no_runtime,
        args.bench.timeout_s,
    );
    let reports = eval::scalability_run(
        &dataset,
        &dataset_id(&args.bench.csv),
        &args.factors,
        budget,
        &args.bench.kinds,
        args.bench.repeats,
        args.bench.seed,
        &options,
    )?;
    let out_dir = resolve_out_dir(&args.bench.out_dir);
    ensure_dir(&out_dir)?;
    write_json(&out_dir.join("scale_report.json"), &reports)?;
    let table = summary::scale_table(&reports, &args.bench.kinds, &args.factors);
    fs::write(out_dir.join("scale_summary.csv"), &table)?;
    eprintln!("scalability reports written to {}", out_dir.display());
    print!("{table}");
    Ok(())
}

// ---------------------------------------------------------------------------
// accountant
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct AccountantArgs {
    /// Training-set size N
    #[arg(long)]
    pub n: usize,
    /// Expected batch size b
    #[arg(long)]
    pub batch_size: usize,
    /// Epochs E
    #[arg(long)]
    pub epochs: u32,
    #[arg(long, default_value_t = accountant::DEFAULT_DELTA)]
    pub delta: f64,
    /// Noise multiplier; reports the epsilon it achieves
    #[arg(long)]
    pub z: Option<f64>,
    /// Target epsilon; reports the smallest z achieving it
    #[arg(long)]
    pub epsilon: Option<f64>,
}

pub fn accountant(args: AccountantArgs) -> Result<()> {
    let report = match (args.z, args.epsilon) {
        (Some(z), None) => accountant::compute_epsilon_detailed(
            args.n,
            args.batch_size,
            args.epochs,
            z,
            args.delta,
        )?,
        (None, Some(epsilon)) => {
            let budget = PrivacyBudget::new(epsilon, args.delta)?;
            let z = accountant::compute_noise(args.n, args.batch_size, args.epochs, &budget)?;
            accountant::compute_epsilon_detailed(
                args.n,
                args.batch_size,
                args.epochs,
                z,
                args.delta,
            )?
        }
        _ => {
            return Err(CliError::Config(
                "pass exactly one of --z (reports epsilon) or --epsilon (reports z)".into(),
            ))
        }
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct PipelineArgs {
    /// Run configuration JSON; flags below override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Record wall-clock runtimes (makes reruns non-identical)
    #[arg(long)]
    pub measure_runtime: bool,
}

pub fn pipeline(args: PipelineArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let csv = args
                .csv
                .clone()
                .ok_or_else(|| CliError::Config("either --config or --csv is required".into()))?;
            let epsilon = args.epsilon.ok_or_else(|| {
                CliError::Config("--epsilon is required without a config file".into())
            })?;
            RunConfig {
                dataset: csv,
                schema: None,
                epsilon,
                delta: accountant::DEFAULT_DELTA,
                seed: 42,
                output_dir: "out".into(),
                kinds: vec![DownstreamModelKind::Mlp, DownstreamModelKind::LinearSvm],
                trainer: TrainerSettings::default(),
                downstream: DownstreamHyper::default(),
                preprocess: PreprocessPolicy::default(),
                measure_runtime: false,
            }
        }
    };
    if let Some(csv) = &args.csv {
        config.dataset = csv.clone();
    }
    if let Some(epsilon) = args.epsilon {
        config.epsilon = epsilon;
    }
    if let Some(delta) = args.delta {
        config.delta = delta;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out_dir) = &args.out_dir {
        config.output_dir = out_dir.clone();
    }
    if args.measure_runtime {
        config.measure_runtime = true;
    }
    config.validate()?;

    let budget = PrivacyBudget::new(config.epsilon, config.delta)?;
    let dataset = load_dataset(&config.dataset, config.schema.as_ref())?;
    let pipeline_config = PipelineConfig {
        dataset_id: dataset_id(&config.dataset),
        budget,
        seed: config.seed,
        kinds: config.kinds.clone(),
        trainer: config.trainer.clone(),
        downstream: config.downstream.clone(),
        preprocess: config.preprocess,
        measure_runtime: config.measure_runtime,
    };
    let artifacts = run_pipeline(&dataset, &pipeline_config)?;

    let out_dir = config.resolved_output_dir();
    ensure_dir(&out_dir)?;
    artifacts
        .checkpoint
        .save(&out_dir.join(MODEL_FILE))
        .map_err(CliError::Train)?;
    data::save_csv(
        &artifacts.synthetic.to_dataset()?,
        &out_dir.join(SYNTHETIC_FILE),
    )?;
    // the provenance record carries the RunConfig hash every artifact is
    // tied to
    let mut provenance = artifacts.provenance.clone();
    provenance.config_hash = config.fingerprint();
    write_json(&out_dir.join(PROVENANCE_FILE), &provenance)?;
    #[derive(Serialize)]
    struct ReportFile<'a> {
        config_hash: &'a str,
        reports: &'a [EvalReport],
    }
    write_json(
        &out_dir.join(REPORT_FILE),
        &ReportFile {
            config_hash: &provenance.config_hash,
            reports: &artifacts.reports,
        },
    )?;
    eprintln!(
        "pipeline artifacts written to {} (epsilon={:.4} at z={:.4})",
        out_dir.display(),
        provenance.accountant.epsilon,
        provenance.accountant.z
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sample-data
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SampleDataArgs {
    /// Number of records to generate
    #[arg(long, default_value_t = 32_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generator's schema JSON here
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

pub fn sample_data(args: SampleDataArgs) -> Result<()> {
    if args.rows == 0 {
        return Err(CliError::Config("--rows must be positive".into()));
    }
    let dataset = sample::census(args.rows, args.seed);
    data::save_csv(&dataset, &args.out)?;
    if let Some(schema_path) = &args.schema_out {
        data::save_schema(dataset.schema(), schema_path)?;
    }
    eprintln!(
        "sample dataset with {} rows written to {}",
        args.rows,
        args.out.display()
    );
    Ok(())
}
