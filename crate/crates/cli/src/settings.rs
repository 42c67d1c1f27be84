//! Flags, the key=value config file, and resolved defaults.
//!
//! Config files hold one `key = value` per line; `#` starts a comment.
//! Keys are the long flag names (`clf-epochs` or `clf_epochs`). A flag
//! given on the command line wins over the same key in the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use neaw::encoder::{WeightInit, DEFAULT_DIMS, DEFAULT_INIT_STD};
use neaw::numerics::derive_seed;
use neaw::rules::{limited_data_lr, RuleConfig, RuleKind, TrainOptions, DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_ETA};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    PointMnist,
    Modelnet,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Theorem1,
    Corollaries,
    Eq5,
    Ordering,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Gaussian,
    Data,
}

impl FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

/// Every setting, all optional so that the config file can fill gaps.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Flags {
    /// key=value config file; flags override its entries.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Encoder rule: neaw, neaw-h, neaw-ah, hebb, oja, grossberg.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// NeAW Hebbian-branch scale.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// NeAW anti-Hebbian-branch scale.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Encoder learning rate [default: 0.01, or the limited-data schedule].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Encoder epochs [default: 50].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Clouds per encoder batch [default: 4].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Classifier epochs [default: 100].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clf_epochs: Option<usize>,
    /// Classifier learning rate [default: 0.001].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clf_lr: Option<f64>,
    /// Classifier batch [default: 32].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clf_batch: Option<usize>,
    /// Points per cloud [default: 1024, 256 for point-mnist].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Share of labeled training samples kept per class, in (0, 1].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    /// Master seed; every phase derives its own.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker cap. Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Dataset directory (or source directory for `gen`).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Model file [default: <out>/model.neaw].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Dataset kind for `gen`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetKind>,
    /// Verification suite.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    /// Instances (or seeds, for `ordering`) to run.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Comma-separated a grid for `sweep-ab`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_values: Option<String>,
    /// Comma-separated b grid for `sweep-ab`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_values: Option<String>,
    /// Seeds per grid point in `sweep-ab` [default: 1].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// Comma-separated encoder widths after the input [default: 64,128,1024].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<String>,
    /// Encoder weight initialization [default: gaussian].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
    /// Std of the Gaussian initialization [default: 0.5].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_std: Option<f64>,
    /// Gaussian jitter of synthetic shapes [default: 0.01].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    /// Synthetic training clouds per class [default: 200].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_per_class: Option<usize>,
    /// Synthetic test clouds per class [default: 50].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    /// Point-MNIST training subset size (stratified) [default: all].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// Point-MNIST test subset size (stratified) [default: all].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    /// Dataset split to evaluate, analyze or export [default: test for eval, train otherwise].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,

    /// Test-only: swap the NeAW branches in the theorem1 suite.
    #[arg(long, global = true, hide = true)]
    #[serde(skip)]
    pub fault_sign_flip: bool,
    /// Test-only: perturb the encoder during classifier training.
    #[arg(long, global = true, hide = true)]
    #[serde(skip)]
    pub fault_mutate_encoder: bool,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))
}

/// Parses `key = value` lines into a map keyed by dashed names.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key '{key}'", i + 1)));
        }
    }
    Ok(map)
}

macro_rules! merge_keys {
    ($self:ident, $map:ident; $($field:ident => $key:literal),* $(,)?) => {
        $(
            if let Some(v) = $map.remove($key) {
                if $self.$field.is_none() {
                    $self.$field = Some(parse_value($key, &v)?);
                }
            }
        )*
    };
}

fn csv_list<T: FromStr>(name: &str, s: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| CliError::Usage(format!("--{name}: '{p}': {e}"))))
        .collect()
}

impl Flags {
    /// Fills unset flags from the config file, if one was given.
    pub fn merge_config_file(&mut self) -> Result<(), CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.merge_map(parse_config(&text)?)
    }

    pub fn merge_map(&mut self, mut map: BTreeMap<String, String>) -> Result<(), CliError> {
        merge_keys!(self, map;
            rule => "rule", a => "a", b => "b", eta => "eta", epochs => "epochs", batch => "batch",
            clf_epochs => "clf-epochs", clf_lr => "clf-lr", clf_batch => "clf-batch", points => "points",
            fraction => "fraction", seed => "seed", threads => "threads", data => "data", out => "out",
            model => "model", dataset => "dataset", suite => "suite", n => "n", a_values => "a-values",
            b_values => "b-values", repeats => "repeats", dims => "dims", init => "init", init_std => "init-std",
            jitter => "jitter", train_per_class => "train-per-class", test_per_class => "test-per-class",
            n_train => "n-train", n_test => "n-test", split => "split",
        );
        if let Some(k) = map.keys().next() {
            return Err(CliError::Usage(format!("unknown config key '{k}'")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        for (name, v) in [("a", self.a), ("b", self.b), ("eta", self.eta), ("clf-lr", self.clf_lr), ("jitter", self.jitter)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return usage(format!("--{name} must be finite and non-negative, got {v}"));
                }
            }
        }
        if let Some(s) = self.init_std {
            if !(s.is_finite() && s > 0.0) {
                return usage(format!("--init-std must be positive, got {s}"));
            }
        }
        for (name, v) in [
            ("batch", self.batch),
            ("clf-epochs", self.clf_epochs),
            ("clf-batch", self.clf_batch),
            ("points", self.points),
            ("threads", self.threads),
            ("n", self.n),
            ("repeats", self.repeats),
            ("n-train", self.n_train),
            ("n-test", self.n_test),
        ] {
            if v == Some(0) {
                return usage(format!("--{name} must be at least 1"));
            }
        }
        if let Some(f) = self.fraction {
            if !(f > 0.0 && f <= 1.0) {
                return usage(format!("--fraction must be in (0, 1], got {f}"));
            }
        }
        self.rule_kind()?;
        self.hidden_dims()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Seed of one named phase, derived from the master seed.
    pub fn phase_seed(&self, phase: &str) -> u64 {
        derive_seed(self.seed(), phase)
    }

    pub fn rule_kind(&self) -> Result<RuleKind, CliError> {
        self.rule
            .as_deref()
            .unwrap_or("neaw")
            .parse()
            .map_err(|e: neaw::Error| CliError::Usage(e.to_string()))
    }

    pub fn fraction(&self) -> f64 {
        self.fraction.unwrap_or(1.0)
    }

    /// Explicit `--eta`, else the limited-data schedule when `--fraction`
    /// is below 1, else the default.
    pub fn effective_eta(&self) -> f64 {
        match (self.eta, self.fraction()) {
            (Some(e), _) => e,
            (None, f) if f < 1.0 => limited_data_lr(f),
            _ => DEFAULT_ETA,
        }
    }

    pub fn rule_config(&self) -> Result<RuleConfig, CliError> {
        Ok(RuleConfig {
            a: self.a.unwrap_or(1.0),
            b: self.b.unwrap_or(1.0),
            ..RuleConfig::new(self.rule_kind()?, self.effective_eta())
        })
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            batch: self.batch.unwrap_or(DEFAULT_BATCH),
            ..TrainOptions::default()
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(DEFAULT_EPOCHS)
    }

    pub fn hidden_dims(&self) -> Result<Vec<usize>, CliError> {
        match &self.dims {
            None => Ok(DEFAULT_DIMS[1..].to_vec()),
            Some(s) => {
                let v: Vec<usize> = csv_list("dims", s)?;
                if v.is_empty() || v.contains(&0) {
                    return Err(CliError::Usage("--dims needs positive widths".into()));
                }
                Ok(v)
            }
        }
    }

    /// Full encoder dims for inputs of dimension `input`.
    pub fn encoder_dims(&self, input: usize) -> Result<Vec<usize>, CliError> {
        let mut d = vec![input];
        d.extend(self.hidden_dims()?);
        Ok(d)
    }

    pub fn weight_init(&self) -> WeightInit {
        match self.init.unwrap_or(InitKind::Gaussian) {
            InitKind::Gaussian => WeightInit::Gaussian {
                std: self.init_std.unwrap_or(DEFAULT_INIT_STD),
            },
            InitKind::Data => WeightInit::DataSample,
        }
    }

    pub fn clf_config(&self, seed: u64) -> neaw::classifier::TrainConfig {
        let d = neaw::classifier::TrainConfig::default();
        neaw::classifier::TrainConfig {
            epochs: self.clf_epochs.unwrap_or(d.epochs),
            lr: self.clf_lr.unwrap_or(d.lr),
            batch: self.clf_batch.unwrap_or(d.batch),
            seed,
            ..d
        }
    }

    pub fn grid(&self, which: &str) -> Result<Vec<f64>, CliError> {
        let raw = match which {
            "a" => self.a_values.as_deref(),
            _ => self.b_values.as_deref(),
        };
        let s = raw.ok_or_else(|| CliError::Usage(format!("--{which}-values is required")))?;
        let v: Vec<f64> = csv_list(&format!("{which}-values"), s)?;
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CliError::Usage(format!("--{which}-values must be non-negative")));
        }
        Ok(v)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    pub fn data_dir(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::Usage("--data is required".into()))
    }

    pub fn model_path(&self) -> Result<PathBuf, CliError> {
        match &self.model {
            Some(m) => Ok(m.clone()),
            None => Ok(self.out_dir()?.join("model.neaw")),
        }
    }
}
