//! Run configuration as a flat `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use dotted
//! namespaces; unknown keys are rejected and missing keys keep their
//! defaults. Lists are comma separated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frontend::{make_gabor_bank, DogParams, Frontend, GaborParams, Provenance};
use crate::learning::{LearningParams, SequenceMode};
use crate::network::{InhibitionParams, NetworkConfig, Variant};
use crate::readout::ReadoutParams;

/// File name of the resolved configuration written next to every artifact.
pub const SNAPSHOT_FILE: &str = "config.txt";

/// Every tunable of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// A generated-set name, `MNIST`, `CIFAR-10`, or `DIR` for a directory
    /// written by `gen-data`.
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    pub data_count: usize,
    pub image_size: usize,
    /// Stratified subset sizes; 0 keeps the whole split.
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub variant: Variant,
    /// Base seed; run `i` uses `seed + i`.
    pub seed: u64,
    pub n_seeds: usize,
    pub learning: LearningParams,
    /// `None` picks per dataset: same-class exemplars for MNIST and
    /// CIFAR-10, transform jitter for everything else.
    pub sequence_mode: Option<SequenceMode>,
    pub grid: usize,
    pub patches: Vec<usize>,
    pub rbf_sigma: f64,
    pub inhibition: InhibitionParams,
    pub md_epsilon: f64,
    pub gabor: GaborParams,
    pub dog: DogParams,
    pub readout: ReadoutParams,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = NetworkConfig::new(Variant::Simplified, 0);
        RunConfig {
            dataset: "TWOCLASSES-SQUARE".into(),
            data_dir: None,
            data_count: 10_000,
            image_size: 32,
            train_per_class: 0,
            test_per_class: 0,
            variant: Variant::Simplified,
            seed: 0,
            n_seeds: 10,
            learning: LearningParams::default(),
            sequence_mode: None,
            grid: net.grid,
            patches: net.patches,
            rbf_sigma: net.rbf_sigma,
            inhibition: net.inhibition,
            md_epsilon: net.md_epsilon,
            gabor: GaborParams::default(),
            dog: DogParams::default(),
            readout: ReadoutParams::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Keys in serialization order.
pub const KEYS: [&str; 36] = [
    "dataset",
    "data.dir",
    "data.count",
    "data.image_size",
    "data.train_per_class",
    "data.test_per_class",
    "variant",
    "seed",
    "n_seeds",
    "alpha",
    "eta",
    "epochs",
    "sequence_length",
    "sequence_mode",
    "jitter.rotation",
    "jitter.translation",
    "network.grid",
    "network.patches",
    "rbf.sigma",
    "inhibition.radius",
    "inhibition.strength",
    "md.epsilon",
    "gabor.frequencies",
    "gabor.orientations",
    "gabor.phases",
    "gabor.sigma",
    "gabor.gamma",
    "gabor.kernel_size",
    "dog.sigma1",
    "dog.sigma2",
    "dog.k",
    "dog.kernel_size",
    "readout.lambda",
    "readout.epochs",
    "readout.standardize",
    "output.dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn mode_name(mode: Option<SequenceMode>) -> &'static str {
    match mode {
        None => "auto",
        Some(SequenceMode::Jitter) => "jitter",
        Some(SequenceMode::SameClass) => "same-class",
    }
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::from_text(&fs::read_to_string(path)?)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = value.to_string(),
            "data.dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.count" => self.data_count = parse(key, value)?,
            "data.image_size" => self.image_size = parse(key, value)?,
            "data.train_per_class" => self.train_per_class = parse(key, value)?,
            "data.test_per_class" => self.test_per_class = parse(key, value)?,
            "variant" => self.variant = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "seed" => self.seed = parse(key, value)?,
            "n_seeds" => self.n_seeds = parse(key, value)?,
            "alpha" => self.learning.alpha = parse(key, value)?,
            "eta" => self.learning.eta = parse(key, value)?,
            "epochs" => self.learning.epochs = parse(key, value)?,
            "sequence_length" => self.learning.sequence_length = parse(key, value)?,
            "sequence_mode" => {
                self.sequence_mode = match value {
                    "auto" => None,
                    "jitter" => Some(SequenceMode::Jitter),
                    "same-class" => Some(SequenceMode::SameClass),
                    _ => return Err(Error::Config(format!("`{key}`: expected auto, jitter or same-class, got `{value}`"))),
                }
            }
            "jitter.rotation" => self.learning.jitter.rotation_deg = parse(key, value)?,
            "jitter.translation" => self.learning.jitter.translation_frac = parse(key, value)?,
            "network.grid" => self.grid = parse(key, value)?,
            "network.patches" => self.patches = parse_list(key, value)?,
            "rbf.sigma" => self.rbf_sigma = parse(key, value)?,
            "inhibition.radius" => self.inhibition.radius = parse(key, value)?,
            "inhibition.strength" => self.inhibition.strength = parse(key, value)?,
            "md.epsilon" => self.md_epsilon = parse(key, value)?,
            "gabor.frequencies" => self.gabor.frequencies = parse_list(key, value)?,
            "gabor.orientations" => self.gabor.orientations = parse_list(key, value)?,
            "gabor.phases" => self.gabor.phases = parse_list(key, value)?,
            "gabor.sigma" => self.gabor.sigma = if value == "auto" { None } else { Some(parse(key, value)?) },
            "gabor.gamma" => self.gabor.gamma = parse(key, value)?,
            "gabor.kernel_size" => self.gabor.kernel_size = parse(key, value)?,
            "dog.sigma1" => self.dog.sigma1 = parse(key, value)?,
            "dog.sigma2" => self.dog.sigma2 = parse(key, value)?,
            "dog.k" => self.dog.k = parse(key, value)?,
            "dog.kernel_size" => self.dog.kernel_size = parse(key, value)?,
            "readout.lambda" => self.readout.lambda = parse(key, value)?,
            "readout.epochs" => self.readout.epochs = parse(key, value)?,
            "readout.standardize" => self.readout.standardize = parse(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dataset" => self.dataset.clone(),
            "data.dir" => self.data_dir.as_ref().map_or(String::new(), |p| p.display().to_string()),
            "data.count" => self.data_count.to_string(),
            "data.image_size" => self.image_size.to_string(),
            "data.train_per_class" => self.train_per_class.to_string(),
            "data.test_per_class" => self.test_per_class.to_string(),
            "variant" => self.variant.name().to_string(),
            "seed" => self.seed.to_string(),
            "n_seeds" => self.n_seeds.to_string(),
            "alpha" => self.learning.alpha.to_string(),
            "eta" => self.learning.eta.to_string(),
            "epochs" => self.learning.epochs.to_string(),
            "sequence_length" => self.learning.sequence_length.to_string(),
            "sequence_mode" => mode_name(self.sequence_mode).to_string(),
            "jitter.rotation" => self.learning.jitter.rotation_deg.to_string(),
            "jitter.translation" => self.learning.jitter.translation_frac.to_string(),
            "network.grid" => self.grid.to_string(),
            "network.patches" => join(&self.patches),
            "rbf.sigma" => self.rbf_sigma.to_string(),
            "inhibition.radius" => self.inhibition.radius.to_string(),
            "inhibition.strength" => self.inhibition.strength.to_string(),
            "md.epsilon" => self.md_epsilon.to_string(),
            "gabor.frequencies" => join(&self.gabor.frequencies),
            "gabor.orientations" => join(&self.gabor.orientations),
            "gabor.phases" => join(&self.gabor.phases),
            "gabor.sigma" => self.gabor.sigma.map_or("auto".to_string(), |s| s.to_string()),
            "gabor.gamma" => self.gabor.gamma.to_string(),
            "gabor.kernel_size" => self.gabor.kernel_size.to_string(),
            "dog.sigma1" => self.dog.sigma1.to_string(),
            "dog.sigma2" => self.dog.sigma2.to_string(),
            "dog.k" => self.dog.k.to_string(),
            "dog.kernel_size" => self.dog.kernel_size.to_string(),
            "readout.lambda" => self.readout.lambda.to_string(),
            "readout.epochs" => self.readout.epochs.to_string(),
            "readout.standardize" => self.readout.standardize.to_string(),
            "output.dir" => self.output_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Every key in a fixed order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SNAPSHOT_FILE), self.to_text())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be >= 1".into()));
        }
        if self.patches.is_empty() {
            return Err(Error::Config("network.patches must list at least one layer".into()));
        }
        if self.image_size == 0 || self.image_size > self.grid {
            return Err(Error::Config(format!(
                "data.image_size {} must be between 1 and network.grid {}",
                self.image_size, self.grid
            )));
        }
        self.learning.validate()?;
        self.gabor.validate()?;
        self.inhibition.validate()?;
        self.readout.validate()?;
        if self.variant.provenance() == Provenance::DogRgbGabor {
            self.dog.validate()?;
        }
        if !(self.rbf_sigma > 0.0) {
            return Err(Error::param("rbf.sigma", "must be positive"));
        }
        Ok(())
    }

    pub fn frontend(&self) -> Result<Frontend> {
        let bank = make_gabor_bank(&self.gabor)?;
        Ok(match self.variant.provenance() {
            Provenance::GrayGabor => Frontend::Gray { bank, out_size: self.grid },
            Provenance::DogRgbGabor => {
                self.dog.validate()?;
                Frontend::DogRgb { dog: self.dog, bank, out_size: self.grid }
            }
        })
    }

    pub fn network_config(&self, in_channels: usize) -> NetworkConfig {
        NetworkConfig {
            variant: self.variant,
            grid: self.grid,
            patches: self.patches.clone(),
            in_channels,
            rbf_sigma: self.rbf_sigma,
            inhibition: self.inhibition,
            md_epsilon: self.md_epsilon,
        }
    }

    pub fn resolved_sequence_mode(&self) -> SequenceMode {
        match (self.sequence_mode, self.dataset.as_str()) {
            (Some(mode), _) => mode,
            (None, "MNIST" | "CIFAR-10") => SequenceMode::SameClass,
            (None, _) => SequenceMode::Jitter,
        }
    }

    /// Learning settings for run `seed`.
    pub fn learning_for(&self, seed: u64) -> LearningParams {
        LearningParams { seed, ..self.learning.clone() }
    }

    pub fn readout_for(&self, seed: u64) -> ReadoutParams {
        ReadoutParams { seed, ..self.readout }
    }
}
