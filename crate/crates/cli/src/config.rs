//! One JSON file drives every subcommand. Missing fields take defaults, so
//! `{}` is a valid configuration; unknown section or field names are
//! rejected. Any field can be overridden from the command line with
//! `--section.field=value`.

use std::path::PathBuf;

use maskfdia_core::data::SynthConfig;
use maskfdia_core::faults::FaultSpec;
use maskfdia_core::fdia::ThresholdMethod;
use maskfdia_core::masking::FillPolicy;
use maskfdia_core::model::Formulation;
use maskfdia_core::training::TrainConfig;
use maskfdia_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Cli;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub fdia: FdiaSection,
    /// Faults applied by `inject`, `detect`, and the bench modes.
    pub scenario: Vec<FaultSpec>,
    pub synth: SynthConfig,
    pub bench: BenchSection,
    pub output: OutputSection,
    /// Written by `synth` so a manifest is itself a runnable config whose
    /// regeneration can be verified against the recorded digest.
    pub manifest: Option<ManifestSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            fdia: FdiaSection::default(),
            scenario: Vec::new(),
            synth: default_synth(),
            bench: BenchSection::default(),
            output: OutputSection::default(),
            manifest: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Input CSV; `--data` takes precedence.
    pub path: Option<PathBuf>,
    /// Head fraction used for training/calibration; the tail is held out.
    pub train_fraction: f64,
    /// Keep every k-th sample (1 = keep all).
    pub downsample: usize,
    /// Channels removed right after loading (labels, attack flags, …).
    pub drop_channels: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            train_fraction: 0.7,
            downsample: 1,
            drop_channels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub formulation: Formulation,
    pub hidden_sizes: Vec<usize>,
    /// Channel names eligible for masking; `null` protects every channel.
    pub maskable_channels: Option<Vec<String>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            formulation: Formulation::Masked,
            hidden_sizes: vec![64],
            maskable_channels: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Rows of history per window; windows span `lookback+1` samples.
    pub lookback: usize,
    /// Overridden by `MASKFDIA_SEED`, then `--seed`, then `--train.seed=`.
    pub seed: u64,
    pub shuffle: bool,
    pub stride: usize,
    pub fill_policy: FillPolicy,
    /// Fit/validation split within the training part of the data.
    pub train_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            learning_rate: 1e-3,
            lookback: 19,
            seed: 0,
            shuffle: true,
            stride: 1,
            fill_policy: FillPolicy::UniformRandom,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdiaSection {
    pub threshold: ThresholdMethod,
    /// Fill for masked slots at detection time (the training default is
    /// random; the mean is deterministic and equally accurate here).
    pub fill_policy: FillPolicy,
    /// 2 = re-mask all flagged channels jointly once.
    pub max_iterations: usize,
    /// Verdict every k-th sample.
    pub stride: usize,
}

impl Default for FdiaSection {
    fn default() -> Self {
        Self {
            threshold: ThresholdMethod::default(),
            fill_policy: FillPolicy::ChannelMean,
            max_iterations: 2,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Timed detection steps for `--mode latency`.
    pub repetitions: usize,
    /// Downstream pipeline shape for `--mode accommodation`.
    pub pipeline_outputs: usize,
    pub pipeline_noise_std: f64,
    pub pipeline_seed: u64,
    /// Input-weight magnitudes are drawn from this band.
    pub pipeline_weight_band: [f64; 2],
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            repetitions: 600,
            pipeline_outputs: 4,
            pipeline_noise_std: 0.6,
            pipeline_seed: 7,
            pipeline_weight_band: [0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestSection {
    /// Digest of the CSV this config generated; `synth` re-checks it.
    pub csv_sha256: Option<String>,
}

/// Eight moderately coupled channels with a wandering operating point —
/// large enough to be interesting, small enough to train in seconds.
fn default_synth() -> SynthConfig {
    SynthConfig {
        n_channels: 8,
        length: 20_000,
        seed: 0,
        coupling_strength: 0.9,
        noise_std: 0.02,
        shared_phase_jitter: 0.3,
        n_latents: None,
        target_std: 1.0,
        sample_rate_hz: 25.0,
    }
}

impl RunConfig {
    /// The core training configuration assembled from the `model` and
    /// `train` sections. Maskable channel names still need resolving
    /// against a concrete dataset (`resolve_maskable`).
    pub fn train_config(&self, maskable_channels: Option<Vec<usize>>) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            lookback: self.train.lookback,
            seed: self.train.seed,
            formulation: self.model.formulation,
            fill_policy: self.train.fill_policy,
            maskable_channels,
            shuffle: self.train.shuffle,
            hidden_sizes: self.model.hidden_sizes.clone(),
            train_fraction: self.train.train_fraction,
            stride: self.train.stride,
        }
    }
}

/// File → `MASKFDIA_SEED` → `--seed` → `--section.field=value` overrides,
/// later sources winning. Returns the effective configuration.
pub fn load_effective(cli: &Cli) -> Result<RunConfig> {
    let mut config: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };

    let env_seed = match std::env::var("MASKFDIA_SEED") {
        Ok(text) => Some(text.parse::<u64>().map_err(|_| {
            Error::Usage(format!(
                "MASKFDIA_SEED must be an unsigned integer, got {text:?}"
            ))
        })?),
        Err(_) => None,
    };
    if let Some(seed) = cli.seed.or(env_seed) {
        config.train.seed = seed;
        config.synth.seed = seed;
    }

    if cli.overrides.is_empty() {
        return Ok(config);
    }
    let mut tree = serde_json::to_value(&config)?;
    for (path, raw) in &cli.overrides {
        set_field(&mut tree, path, raw)?;
        // Re-deserialize after every override so a bad value is attributed
        // to the flag that introduced it.
        config = serde_json::from_value(tree.clone())
            .map_err(|e| Error::Usage(format!("override --{path}={raw}: {e}")))?;
    }
    Ok(config)
}

/// Sets `path` (dot-separated; numeric segments index arrays) to `raw`,
/// parsed as JSON where possible and kept as a string otherwise.
fn set_field(tree: &mut Value, path: &str, raw: &str) -> Result<()> {
    let no_such = || Error::Usage(format!("no such config field: {path}"));
    let mut cursor = tree;
    for segment in path.split('.') {
        cursor = match cursor {
            Value::Object(map) => map.get_mut(segment).ok_or_else(no_such)?,
            Value::Array(items) => {
                let idx: usize = segment.parse().map_err(|_| no_such())?;
                items.get_mut(idx).ok_or_else(no_such)?
            }
            _ => return Err(no_such()),
        };
    }
    *cursor = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}
