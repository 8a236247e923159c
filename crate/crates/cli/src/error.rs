//! Error classification and the fixed exit-code map:
//! 2 config, 3 data, 4 training, 5 evaluation/synthesis, 6 infeasible budget.

use dpdsyn_core::accountant::AccountantError;
use dpdsyn_core::data::DataError;
use dpdsyn_core::eval::EvalError;
use dpdsyn_core::mlp::ModelError;
use dpdsyn_core::synth::SynthError;
use dpdsyn_core::trainer::TrainError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(std::io::Error),
    Data(DataError),
    Train(TrainError),
    Synth(SynthError),
    Eval(EvalError),
    Accountant(AccountantError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Train(e) => write!(f, "{e}"),
            CliError::Synth(e) => write!(f, "{e}"),
            CliError::Eval(e) => write!(f, "{e}"),
            CliError::Accountant(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Train(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Synth(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Eval(e)
    }
}

impl From<AccountantError> for CliError {
    fn from(e: AccountantError) -> Self {
        CliError::Accountant(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json error: {e}"))
    }
}

impl CliError {
    /// (failing stage, exit code) for the top-level handler.
    pub fn stage_and_code(&self) -> (&'static str, i32) {
        match self {
            CliError::Config(_) => ("config", 2),
            CliError::Io(_) => ("data", 3),
            CliError::Data(_) => ("data", 3),
            CliError::Train(e) => train_stage(e),
            CliError::Synth(e) => synth_stage(e),
            CliError::Eval(e) => eval_stage(e),
            CliError::Accountant(e) => accountant_stage(e),
        }
    }
}

fn accountant_stage(e: &AccountantError) -> (&'static str, i32) {
    match e {
        AccountantError::InfeasibleBudget { .. } => ("accountant", 6),
        _ => ("config", 2),
    }
}

fn train_stage(e: &TrainError) -> (&'static str, i32) {
    match e {
        TrainError::Accountant(inner) => match accountant_stage(inner) {
            (_, 6) => ("training", 6),
            other => other,
        },
        _ => ("training", 4),
    }
}

fn model_stage(_e: &ModelError) -> (&'static str, i32) {
    ("training", 4)
}

fn synth_stage(e: &SynthError) -> (&'static str, i32) {
    match e {
        SynthError::Data(inner) => {
            let _ = inner;
            ("data", 3)
        }
        SynthError::Model(inner) => model_stage(inner),
        SynthError::Checkpoint(inner) => train_stage(inner),
        _ => ("synthesis", 5),
    }
}

fn eval_stage(e: &EvalError) -> (&'static str, i32) {
    match e {
        EvalError::Data(inner) => {
            let _ = inner;
            ("data", 3)
        }
        EvalError::Train(inner) => train_stage(inner),
        EvalError::Synth(inner) => synth_stage(inner),
        EvalError::Model(inner) => model_stage(inner),
        EvalError::Accountant(inner) => match accountant_stage(inner) {
            (_, 6) => ("accountant", 6),
            other => other,
        },
        _ => ("evaluation", 5),
    }
}
