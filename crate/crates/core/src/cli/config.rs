//! Option resolution: command-line flags, then a TOML file, then defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::Activation;
use crate::ingestion::{DatasetConfig, PlantedRule, SyntheticConfig};
use crate::io::read_to_string;
use crate::training::{AblationMode, ModelConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// Object slots per image, 2 to 20 in steps of 2.
    N,
    /// GCN depth, 1 to 8.
    Layers,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPart {
    Train,
    Val,
    Test,
    #[default]
    All,
}

/// Flags shared by every data-reading subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Detection records, one JSON object per line
    #[arg(long, value_name = "FILE")]
    pub detections: Option<PathBuf>,
    /// Word-embedding table, `token f1 ... fd` per line
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Scene features, one JSON object per line; overrides inline scenes
    #[arg(long, value_name = "FILE")]
    pub scenes: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for initialization, shuffling and the data split
    #[arg(long)]
    pub seed: Option<u64>,
    /// Object slots per image
    #[arg(long)]
    pub n: Option<usize>,
    /// Visual/scene feature width
    #[arg(long)]
    pub d1: Option<usize>,
    /// Word-embedding width
    #[arg(long)]
    pub d2: Option<usize>,
    /// Number of emotion categories
    #[arg(long)]
    pub classes: Option<usize>,
    /// Affinity embedding width
    #[arg(long = "d-a")]
    pub d_a: Option<usize>,
    /// GCN depth
    #[arg(long)]
    pub layers: Option<usize>,
    /// Detector-confidence threshold for active nodes
    #[arg(long)]
    pub tau: Option<f64>,
    /// Initial learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decoupled weight decay
    #[arg(long)]
    pub wd: Option<f64>,
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Epochs between learning-rate decays (0 disables decay)
    #[arg(long)]
    pub decay_every: Option<usize>,
    /// Multiplier applied at each decay
    #[arg(long)]
    pub decay_factor: Option<f64>,
    /// Ablation mode (see `ablate` output for the names)
    #[arg(long)]
    pub mode: Option<String>,
    /// Train/validation/test fractions, e.g. `0.8,0.05,0.15`
    #[arg(long, value_name = "A,B,C")]
    pub split: Option<String>,
    /// Residual-branch activation
    #[arg(long, value_parser = ["identity", "tanh"])]
    pub activation: Option<String>,
    /// Normalize attention weights over active nodes
    #[arg(long)]
    pub normalize_attention: bool,
    /// Map unknown concepts to inactive zero slots instead of failing
    #[arg(long)]
    pub allow_unknown: bool,
    /// Checkpoint to read
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Worker threads (defaults to EMOGRAPH_THREADS, then all cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Every key a `--config` file may set.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub detections: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub scenes: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    pub classes: Option<usize>,
    pub d_a: Option<usize>,
    pub layers: Option<usize>,
    pub tau: Option<f64>,
    pub lr: Option<f64>,
    pub wd: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub decay_every: Option<usize>,
    pub decay_factor: Option<f64>,
    pub mode: Option<String>,
    pub split: Option<[f64; 3]>,
    pub activation: Option<Activation>,
    pub normalize_attention: Option<bool>,
    pub allow_unknown: Option<bool>,
    pub threads: Option<usize>,
    pub top_k: Option<usize>,
    pub sweep: Option<Sweep>,
    pub samples: Option<usize>,
    pub rule: Option<PlantedRule>,
    pub noise: Option<f64>,
    pub scene_agreement: Option<f64>,
    pub group_by_predicted: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub detections: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub scenes: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub allow_unknown: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            detections: None,
            embeddings: None,
            scenes: None,
            checkpoint: None,
            out: PathBuf::from("emograph-out"),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            allow_unknown: false,
        }
    }
}

fn parse_split(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad --split {s:?}: {e}")))?;
    <[f64; 3]>::try_from(parts)
        .map_err(|_| Error::Config(format!("--split needs three fractions, got {s:?}")))
}

fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "identity" => Ok(Activation::Identity),
        "tanh" => Ok(Activation::Tanh),
        other => Err(Error::Config(format!("unknown activation {other:?}"))),
    }
}

impl RunConfig {
    pub fn resolve(flags: &CommonArgs, file: &FileConfig) -> Result<Self> {
        let d = RunConfig::default();
        macro_rules! pick {
            ($field:ident, $default:expr) => {
                flags
                    .$field
                    .clone()
                    .or(file.$field.clone())
                    .unwrap_or($default)
            };
        }
        let split = match &flags.split {
            Some(s) => parse_split(s)?,
            None => file.split.unwrap_or(d.dataset.split),
        };
        let activation = match &flags.activation {
            Some(s) => parse_activation(s)?,
            None => file.activation.unwrap_or(d.model.activation),
        };
        let mode = match flags.mode.as_ref().or(file.mode.as_ref()) {
            Some(name) => AblationMode::from_name(name)?,
            None => d.train.mode,
        };
        let dataset = DatasetConfig {
            n: pick!(n, d.dataset.n),
            d1: pick!(d1, d.dataset.d1),
            d2: pick!(d2, d.dataset.d2),
            classes: pick!(classes, d.dataset.classes),
            split,
        };
        dataset.validate()?;
        let model = ModelConfig {
            d1: dataset.d1,
            d2: dataset.d2,
            d_a: pick!(d_a, d.model.d_a),
            layers: pick!(layers, d.model.layers),
            classes: dataset.classes,
            tau: pick!(tau, d.model.tau),
            activation,
            normalize_attention: flags.normalize_attention
                || file.normalize_attention.unwrap_or(false),
        };
        model.validate()?;
        let train = TrainConfig {
            lr: pick!(lr, d.train.lr),
            weight_decay: pick!(wd, d.train.weight_decay),
            decay_factor: pick!(decay_factor, d.train.decay_factor),
            decay_every: pick!(decay_every, d.train.decay_every),
            epochs: pick!(epochs, d.train.epochs),
            batch_size: pick!(batch, d.train.batch_size),
            seed: pick!(seed, d.train.seed),
            mode,
            threads: flags.threads.or(file.threads),
        };
        train.validate()?;
        Ok(RunConfig {
            detections: flags.detections.clone().or(file.detections.clone()),
            embeddings: flags.embeddings.clone().or(file.embeddings.clone()),
            scenes: flags.scenes.clone().or(file.scenes.clone()),
            checkpoint: flags.checkpoint.clone().or(file.checkpoint.clone()),
            out: pick!(out, d.out),
            dataset,
            model,
            train,
            allow_unknown: flags.allow_unknown || file.allow_unknown.unwrap_or(false),
        })
    }
}

/// Synthetic-generator settings; unset dims fall back to the generator's
/// small defaults rather than the full-size model defaults.
pub fn synth_config(
    flags: &CommonArgs,
    file: &FileConfig,
    samples: Option<usize>,
    noise: Option<f64>,
    scene_agreement: Option<f64>,
) -> SyntheticConfig {
    let d = SyntheticConfig::default();
    SyntheticConfig {
        n: flags.n.or(file.n).unwrap_or(d.n),
        d1: flags.d1.or(file.d1).unwrap_or(d.d1),
        d2: flags.d2.or(file.d2).unwrap_or(d.d2),
        classes: flags.classes.or(file.classes).unwrap_or(d.classes),
        samples: samples.or(file.samples).unwrap_or(d.samples),
        noise: noise.or(file.noise).unwrap_or(d.noise),
        distractor_concepts: d.distractor_concepts,
        scene_agreement: scene_agreement
            .or(file.scene_agreement)
            .unwrap_or(d.scene_agreement),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let rc = RunConfig::resolve(&CommonArgs::default(), &FileConfig::default()).unwrap();
        assert_eq!(rc.dataset.n, 10);
        assert_eq!(rc.model.layers, 4);
        assert_eq!(rc.model.tau, 0.3);
        assert_eq!(rc.train.lr, 5e-5);
        assert_eq!(rc.train.weight_decay, 5e-5);
        assert_eq!(rc.train.epochs, 50);
        assert_eq!(rc.train.mode, AblationMode::FULL);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig =
            toml::from_str("lr = 0.01\nepochs = 7\nsplit = [0.5, 0.25, 0.25]\nmode = \"scene\"")
                .unwrap();
        let flags = CommonArgs {
            lr: Some(0.5),
            ..CommonArgs::default()
        };
        let rc = RunConfig::resolve(&flags, &file).unwrap();
        assert_eq!(rc.train.lr, 0.5);
        assert_eq!(rc.train.epochs, 7);
        assert_eq!(rc.train.batch_size, 32);
        assert_eq!(rc.dataset.split, [0.5, 0.25, 0.25]);
        assert_eq!(rc.train.mode, AblationMode::SCENE_ONLY);
    }

    #[test]
    fn unknown_file_key_is_rejected() {
        assert!(toml::from_str::<FileConfig>("learning_rate = 1").is_err());
    }

    #[test]
    fn split_flag_parsing() {
        assert_eq!(parse_split("0.6, 0.2,0.2").unwrap(), [0.6, 0.2, 0.2]);
        assert!(parse_split("0.6,0.4").is_err());
        let flags = CommonArgs {
            split: Some("0.9,0.2,0.1".into()),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&flags, &FileConfig::default()).is_err());
    }
}
