//! The line-oriented `key = value` configuration format.
//!
//! One flat key set covers the dataset and the training run; the same keys
//! double as command-line flags, so a saved resolved config and a flag list
//! are interchangeable. Unknown keys are rejected, parse errors carry the
//! line number, and `serialize` emits every key so a resolved file
//! reproduces the run exactly.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use evico::heads::Activation;
use evico::netmodel::PredictionHead;
use evico::synthdata::DatasetSpec;
use evico::trainer::TrainConfig;
use evico::{Error, Result};

/// Everything a run needs: the dataset recipe and the training settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AppConfig {
    pub data: DatasetSpec,
    pub train: TrainConfig,
}

/// Why a `set` call failed. Callers map the two cases to different exit
/// codes: unknown keys are usage errors on the command line but config
/// errors inside a file.
#[derive(Debug)]
pub enum SetError {
    UnknownKey,
    Invalid(String),
}

fn parse_as<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, SetError> {
    value
        .parse()
        .map_err(|_| SetError::Invalid(format!("bad value for {key}: '{value}'")))
}

fn parse_flag(key: &str, value: &str) -> std::result::Result<bool, SetError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(SetError::Invalid(format!(
            "bad value for {key}: '{other}' (expected true or false)"
        ))),
    }
}

/// Canonical key order for serialization and help output.
pub const KEY_ORDER: [&str; 26] = [
    "count",
    "height",
    "width",
    "classes",
    "labeled_fraction",
    "noise_sigma",
    "blur_sigma",
    "seed",
    "max_iterations",
    "batch.size",
    "batch.labeled",
    "lr0",
    "poly_power",
    "iters_per_epoch",
    "schedule.kl_epochs",
    "schedule.con_epochs",
    "schedule.con_amplitude",
    "loss.ce",
    "loss.enc",
    "loss.uegv",
    "loss.uvge",
    "eval_every",
    "activation",
    "stop_gradient",
    "eval.head",
    "eval.pooled",
];

/// One-line summaries for `--help`, in [`KEY_ORDER`] order.
pub fn describe(key: &str) -> &'static str {
    match key {
        "count" => "total synthetic samples; one fifth becomes the test set",
        "height" => "image height in pixels",
        "width" => "image width in pixels",
        "classes" => "2 (shapes vs background) or 3 (ellipses / rectangles / background)",
        "labeled_fraction" => "fraction of training samples that keep their masks, in (0, 1]",
        "noise_sigma" => "additive Gaussian pixel-noise standard deviation",
        "blur_sigma" => "boundary-smearing Gaussian blur standard deviation (pixels)",
        "seed" => "master seed for data generation, weight init, and batch order",
        "max_iterations" => "optimiser steps",
        "batch.size" => "samples per batch",
        "batch.labeled" => "labeled samples per batch; the rest are unlabeled",
        "lr0" => "initial learning rate",
        "poly_power" => "poly decay exponent: lr0 * (1 - iter/max)^power",
        "iters_per_epoch" => "iterations per schedule epoch (loss ramps advance in epochs)",
        "schedule.kl_epochs" => "epochs until the Dirichlet KL regulariser reaches full weight",
        "schedule.con_epochs" => "epochs until the consistency weight reaches its amplitude",
        "schedule.con_amplitude" => "final consistency weight",
        "loss.ce" => "supervised cross-entropy on the softmax head (labeled samples)",
        "loss.enc" => {
            "evidential risk on the Dirichlet head: expected cross-entropy plus annealed \
             KL (labeled samples)"
        }
        "loss.uegv" => {
            "uncertainty-weighted consistency, Dirichlet head guiding the softmax head \
             (all samples)"
        }
        "loss.uvge" => {
            "uncertainty-weighted consistency, softmax head guiding the Dirichlet head \
             (all samples)"
        }
        "eval_every" => "test-set evaluation period in iterations (0 = final only)",
        "activation" => "evidence activation: softplus, relu, or exp",
        "stop_gradient" => "detach the guiding head in the consistency terms",
        "eval.head" => "prediction used for evaluation: fused, vanilla, or evidential",
        "eval.pooled" => "pool directed surface distances instead of per-direction aggregation",
        _ => "",
    }
}

impl AppConfig {
    /// Sets one key. The `seed` key seeds data generation and training
    /// together, so one value drives all randomness.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), SetError> {
        match key {
            "count" => self.data.count = parse_as(key, value)?,
            "height" => self.data.height = parse_as(key, value)?,
            "width" => self.data.width = parse_as(key, value)?,
            "classes" => self.data.classes = parse_as(key, value)?,
            "labeled_fraction" => self.data.labeled_fraction = parse_as(key, value)?,
            "noise_sigma" => self.data.noise_sigma = parse_as(key, value)?,
            "blur_sigma" => self.data.blur_sigma = parse_as(key, value)?,
            "seed" => {
                let seed = parse_as(key, value)?;
                self.data.seed = seed;
                self.train.seed = seed;
            }
            "max_iterations" => self.train.max_iterations = parse_as(key, value)?,
            "batch.size" => self.train.batch_size = parse_as(key, value)?,
            "batch.labeled" => self.train.labeled_per_batch = parse_as(key, value)?,
            "lr0" => self.train.lr0 = parse_as(key, value)?,
            "poly_power" => self.train.poly_power = parse_as(key, value)?,
            "iters_per_epoch" => self.train.iters_per_epoch = parse_as(key, value)?,
            "schedule.kl_epochs" => self.train.schedule.kl_epochs = parse_as(key, value)?,
            "schedule.con_epochs" => self.train.schedule.con_epochs = parse_as(key, value)?,
            "schedule.con_amplitude" => {
                self.train.schedule.con_amplitude = parse_as(key, value)?
            }
            "loss.ce" => self.train.toggles.ce = parse_flag(key, value)?,
            "loss.enc" => self.train.toggles.enc = parse_flag(key, value)?,
            "loss.uegv" => self.train.toggles.uegv = parse_flag(key, value)?,
            "loss.uvge" => self.train.toggles.uvge = parse_flag(key, value)?,
            "eval_every" => self.train.eval_every = parse_as(key, value)?,
            "activation" => {
                self.train.activation = Activation::parse(value)
                    .map_err(|e| SetError::Invalid(e.to_string()))?
            }
            "stop_gradient" => self.train.stop_gradient = parse_flag(key, value)?,
            "eval.head" => {
                self.train.eval_head = PredictionHead::parse(value)
                    .map_err(|e| SetError::Invalid(e.to_string()))?
            }
            "eval.pooled" => self.train.pooled_percentiles = parse_flag(key, value)?,
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    /// Current value of one key, rendered the way `serialize` writes it.
    pub fn get(&self, key: &str) -> Option<String> {
        fn s(v: impl Display) -> Option<String> {
            Some(v.to_string())
        }
        match key {
            "count" => s(self.data.count),
            "height" => s(self.data.height),
            "width" => s(self.data.width),
            "classes" => s(self.data.classes),
            "labeled_fraction" => s(self.data.labeled_fraction),
            "noise_sigma" => s(self.data.noise_sigma),
            "blur_sigma" => s(self.data.blur_sigma),
            "seed" => s(self.train.seed),
            "max_iterations" => s(self.train.max_iterations),
            "batch.size" => s(self.train.batch_size),
            "batch.labeled" => s(self.train.labeled_per_batch),
            "lr0" => s(self.train.lr0),
            "poly_power" => s(self.train.poly_power),
            "iters_per_epoch" => s(self.train.iters_per_epoch),
            "schedule.kl_epochs" => s(self.train.schedule.kl_epochs),
            "schedule.con_epochs" => s(self.train.schedule.con_epochs),
            "schedule.con_amplitude" => s(self.train.schedule.con_amplitude),
            "loss.ce" => s(self.train.toggles.ce),
            "loss.enc" => s(self.train.toggles.enc),
            "loss.uegv" => s(self.train.toggles.uegv),
            "loss.uvge" => s(self.train.toggles.uvge),
            "eval_every" => s(self.train.eval_every),
            "activation" => s(self.train.activation.as_str()),
            "stop_gradient" => s(self.train.stop_gradient),
            "eval.head" => s(self.train.eval_head.as_str()),
            "eval.pooled" => s(self.train.pooled_percentiles),
            _ => None,
        }
    }

    /// Renders every key, producing a file that reparses to `self`.
    pub fn serialize(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for key in KEY_ORDER {
            let value = self.get(key).expect("every listed key is gettable");
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()
    }
}

/// Applies a settings file on top of `config`. Blank lines and `#` comments
/// are ignored; anything else must be `key = value`.
pub fn apply_str(config: &mut AppConfig, text: &str, origin: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let n = i + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{origin} line {n}: expected 'key = value', got '{line}'"
            )));
        };
        match config.set(key.trim(), value.trim()) {
            Ok(()) => {}
            Err(SetError::UnknownKey) => {
                return Err(Error::Config(format!(
                    "{origin} line {n}: unknown key '{}'",
                    key.trim()
                )));
            }
            Err(SetError::Invalid(detail)) => {
                return Err(Error::Config(format!("{origin} line {n}: {detail}")));
            }
        }
    }
    Ok(())
}

/// Applies a settings file from disk.
pub fn apply_file(config: &mut AppConfig, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    apply_str(config, &text, &path.display().to_string())
}
