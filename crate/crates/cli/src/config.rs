//! Run configuration: command-line flags over a JSON config file over defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use handshake::data::Standard;
use handshake::eval::MatchMode;
use handshake::model::{ModelConfig, OptimizerKind};
use handshake::Mode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardArg {
    LastWord,
    WholeSpan,
}

impl From<StandardArg> for Standard {
    fn from(s: StandardArg) -> Self {
        match s {
            StandardArg::LastWord => Standard::LastWord,
            StandardArg::WholeSpan => Standard::WholeSpan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Strict,
    Lenient,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Lenient => Mode::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchArg {
    Partial,
    Exact,
}

impl From<MatchArg> for MatchMode {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Partial => MatchMode::Partial,
            MatchArg::Exact => MatchMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        }
    }
}

/// Options shared by every subcommand. Each may also come from the `--config` file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Input file; its kind depends on the command
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Training split
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    /// Validation split
    #[arg(long, global = true)]
    pub valid: Option<PathBuf>,
    /// Test split
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub standard: Option<StandardArg>,
    /// Relation schema; inferred from the data when absent
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Model checkpoint (written by train, read by eval and bench)
    #[arg(long, global = true)]
    pub ckpt: Option<PathBuf>,
    /// Output path
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub mode: Option<ModeArg>,
    /// Triple matching for evaluation
    #[arg(long = "match", value_enum, global = true)]
    #[serde(rename = "match")]
    pub match_mode: Option<MatchArg>,
    /// Break scores down by overlap pattern and triple count
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub by_subset: Option<bool>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, global = true)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
    /// Context mixer size per direction; 0 disables the mixer
    #[arg(long, global = true)]
    pub mixer_hidden: Option<usize>,
    #[arg(long, global = true)]
    pub pair_dim: Option<usize>,
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    /// Check gradients against finite differences before training
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub grad_check: Option<bool>,
    /// Randomized cases per selftest suite
    #[arg(long, global = true)]
    pub cases: Option<usize>,
    /// Random model instances for the gradient selftest
    #[arg(long, global = true)]
    pub instances: Option<usize>,
    /// Sentences processed before benchmark timing starts
    #[arg(long, global = true)]
    pub warmup: Option<usize>,
    /// Spread benchmark batches over threads
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub parallel: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Options {
    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &Options) {
        overlay!(self, other; data, train, valid, test, standard, schema, ckpt, out, mode, match_mode, by_subset,
            batch_size, epochs, lr, seed, optimizer, embed_dim, mixer_hidden, pair_dim, max_len, grad_check,
            cases, instances, warmup, parallel);
    }
}

/// Fully resolved configuration, embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(flatten)]
    pub options: Options,
}

fn read_config(path: &Path) -> Result<Options, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    #[derive(Deserialize)]
    struct WithCommand {
        #[serde(default)]
        #[allow(dead_code)]
        command: Option<String>,
        #[serde(flatten)]
        options: serde_json::Value,
    }
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    // a report written with --out replays the configuration recorded in it
    if let Some(recorded) = value.pointer("/provenance/config") {
        value = recorded.clone();
    }
    let raw: WithCommand =
        serde_json::from_value(value).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_value(raw.options).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(command: &str, flags: &Options, config: Option<&Path>) -> Result<Self, CliError> {
        let mut options = defaults(command);
        if let Some(path) = config {
            options.overlay(&read_config(path)?);
        }
        options.overlay(flags);
        Ok(Self { command: command.to_string(), options })
    }

    pub fn standard(&self) -> Standard {
        self.options.standard.map(Into::into).unwrap_or_default()
    }

    pub fn mode(&self) -> Mode {
        self.options.mode.map(Into::into).unwrap_or_default()
    }

    pub fn match_mode(&self) -> MatchMode {
        self.options.match_mode.map(Into::into).unwrap_or_default()
    }

    pub fn seed(&self) -> u64 {
        self.options.seed.unwrap_or(0)
    }

    pub fn model_config(&self) -> ModelConfig {
        let d = ModelConfig::default();
        let o = &self.options;
        ModelConfig {
            embed_dim: o.embed_dim.unwrap_or(d.embed_dim),
            mixer_hidden: match o.mixer_hidden {
                Some(0) => None,
                Some(k) => Some(k),
                None => d.mixer_hidden,
            },
            pair_dim: o.pair_dim.unwrap_or(d.pair_dim),
            max_len: o.max_len.unwrap_or(d.max_len),
        }
    }

    /// Path option that this command cannot do without.
    pub fn required<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::usage(format!("`{}` requires --{flag}", self.command)))
    }
}

fn defaults(command: &str) -> Options {
    let train = handshake::model::TrainConfig::default();
    let mut o = Options {
        standard: Some(StandardArg::WholeSpan),
        mode: Some(ModeArg::Strict),
        match_mode: Some(MatchArg::Exact),
        by_subset: Some(false),
        seed: Some(0),
        ..Options::default()
    };
    match command {
        "train" => {
            o.mode = Some(ModeArg::Lenient);
            o.batch_size = Some(train.batch_size);
            o.epochs = Some(train.epochs);
            o.lr = Some(train.learning_rate);
            o.optimizer = Some(OptimizerArg::Adam);
            o.grad_check = Some(false);
            let m = ModelConfig::default();
            o.embed_dim = Some(m.embed_dim);
            o.mixer_hidden = Some(m.mixer_hidden.unwrap_or(0));
            o.pair_dim = Some(m.pair_dim);
            o.max_len = Some(m.max_len);
        }
        "eval" => o.mode = Some(ModeArg::Lenient),
        "bench" => {
            o.mode = Some(ModeArg::Lenient);
            o.batch_size = Some(24);
            o.warmup = Some(8);
            o.parallel = Some(false);
        }
        "selftest" => {
            o.cases = Some(10_000);
            o.instances = Some(5);
        }
        _ => {}
    }
    o
}
