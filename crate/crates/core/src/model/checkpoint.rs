//! Single-file model checkpoints.
//!
//! Layout, line by line:
//!
//! ```text
//! MASKFDIA v1
//! {…one JSON object: architecture, channel names, scaler, stats, thresholds, config echo, seed, parameter shapes…}
//! BINARY            (or TEXT)
//! <parameters>
//! ```
//!
//! `BINARY` payloads are the parameter tensors' values as little-endian
//! 64-bit reals, concatenated in declaration order — bit-exact across
//! platforms. `TEXT` payloads hold one line per tensor of space-separated
//! shortest-round-trip decimals (handy for small fixtures and diffs); both
//! encodings reload to bit-identical models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Formulation, SequenceModel};
use crate::data::{ChannelStats, Scaler};
use crate::error::{Error, Result};
use crate::fdia::ThresholdMethod;
use crate::masking::{FillPolicy, MaskableChannelSet};
use crate::numerics::ParamTensor;
use crate::training::TrainConfig;

const MAGIC: &str = "MASKFDIA v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointEncoding {
    Binary,
    Text,
}

/// Calibrated per-channel detection thresholds plus how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInfo {
    /// One threshold per maskable position.
    pub per_channel: Vec<f64>,
    pub method: ThresholdMethod,
    /// Number of calibration windows behind the estimates.
    pub calibration_windows: usize,
    /// Mean of the fault-free validation residuals, per maskable position.
    pub residual_mean: Vec<f64>,
    /// Population std of the same residuals.
    pub residual_std: Vec<f64>,
}

/// Everything a detector needs to run: the model plus the preprocessing
/// state (scaler, per-channel statistics) and optional thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub model: SequenceModel,
    pub scaler: Scaler,
    pub maskable: MaskableChannelSet,
    pub channel_names: Vec<String>,
    /// Stats of the raw training data (for std-unit fault magnitudes).
    pub raw_stats: Vec<ChannelStats>,
    /// Stats of the scaled training data (fill values draw on these).
    pub scaled_stats: Vec<ChannelStats>,
    pub thresholds: Option<ThresholdInfo>,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
    pub fill_policy: FillPolicy,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    formulation: Formulation,
    n_channels: usize,
    n_maskable: usize,
    lookback: usize,
    hidden_sizes: Vec<usize>,
    channel_names: Vec<String>,
    maskable_channels: Vec<usize>,
    scaler: Scaler,
    raw_stats: Vec<ChannelStats>,
    scaled_stats: Vec<ChannelStats>,
    thresholds: Option<ThresholdInfo>,
    train_config: Option<TrainConfig>,
    seed: u64,
    fill_policy: FillPolicy,
    param_shapes: Vec<Vec<usize>>,
}

impl Header {
    fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}, this build reads version 1",
                self.format_version
            )));
        }
        if self.channel_names.len() != self.n_channels {
            return Err(Error::Checkpoint(format!(
                "{} channel names for n_channels = {}",
                self.channel_names.len(),
                self.n_channels
            )));
        }
        if self.maskable_channels.len() != self.n_maskable {
            return Err(Error::Checkpoint(format!(
                "{} maskable channels for n_maskable = {}",
                self.maskable_channels.len(),
                self.n_maskable
            )));
        }
        if self.scaler.n_channels() != self.n_channels
            || self.raw_stats.len() != self.n_channels
            || self.scaled_stats.len() != self.n_channels
        {
            return Err(Error::Checkpoint(
                "scaler/stats width disagrees with n_channels".into(),
            ));
        }
        if let Some(th) = &self.thresholds {
            if th.per_channel.len() != self.n_maskable
                || th.residual_mean.len() != self.n_maskable
                || th.residual_std.len() != self.n_maskable
            {
                return Err(Error::Checkpoint(format!(
                    "{} thresholds for {} maskable channels",
                    th.per_channel.len(),
                    self.n_maskable
                )));
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(
    data: &CheckpointData,
    path: &Path,
    encoding: CheckpointEncoding,
) -> Result<()> {
    let header = Header {
        format_version: 1,
        formulation: data.model.formulation(),
        n_channels: data.model.n_channels(),
        n_maskable: data.model.n_maskable(),
        lookback: data.model.lookback(),
        hidden_sizes: data.model.hidden_sizes().to_vec(),
        channel_names: data.channel_names.clone(),
        maskable_channels: data.maskable.dataset_indices().to_vec(),
        scaler: data.scaler.clone(),
        raw_stats: data.raw_stats.clone(),
        scaled_stats: data.scaled_stats.clone(),
        thresholds: data.thresholds.clone(),
        train_config: data.train_config.clone(),
        seed: data.seed,
        fill_policy: data.fill_policy,
        param_shapes: data
            .model
            .params()
            .iter()
            .map(|p| p.shape().to_vec())
            .collect(),
    };

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC.as_bytes());
    bytes.push(b'\n');
    bytes.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    bytes.push(b'\n');
    match encoding {
        CheckpointEncoding::Binary => {
            bytes.extend_from_slice(b"BINARY\n");
            for p in data.model.params() {
                for v in p.values() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        CheckpointEncoding::Text => {
            bytes.extend_from_slice(b"TEXT\n");
            for p in data.model.params() {
                let line: Vec<String> = p.values().iter().map(|v| format!("{v}")).collect();
                bytes.extend_from_slice(line.join(" ").as_bytes());
                bytes.push(b'\n');
            }
        }
    }
    std::fs::write(path, bytes)
        .map_err(|e| Error::Checkpoint(format!("cannot write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;

    let mut cursor = 0usize;
    let mut next_line = |what: &str| -> Result<&[u8]> {
        let rest = &bytes[cursor..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint(format!("truncated before {what}")))?;
        let line = &rest[..end];
        cursor += end + 1;
        Ok(line)
    };

    let magic = next_line("the format line")?;
    if magic != MAGIC.as_bytes() {
        return Err(Error::Checkpoint(format!(
            "{} is not a model checkpoint (bad format line)",
            path.display()
        )));
    }
    let header: Header = serde_json::from_slice(next_line("the header")?)
        .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
    header.validate()?;
    let marker = next_line("the encoding marker")?.to_vec();
    let payload = &bytes[cursor..];

    let total: usize = header
        .param_shapes
        .iter()
        .map(|s| s.iter().product::<usize>())
        .sum();
    let mut values: Vec<f64> = Vec::with_capacity(total);
    match marker.as_slice() {
        b"BINARY" => {
            if payload.len() != total * 8 {
                return Err(Error::Checkpoint(format!(
                    "parameter payload holds {} bytes, header promises {}",
                    payload.len(),
                    total * 8
                )));
            }
            for chunk in payload.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
            }
        }
        b"TEXT" => {
            let text = std::str::from_utf8(payload)
                .map_err(|_| Error::Checkpoint("text payload is not UTF-8".into()))?;
            for token in text.split_ascii_whitespace() {
                let v: f64 = token.parse().map_err(|_| {
                    Error::Checkpoint(format!("bad parameter value '{token}'"))
                })?;
                values.push(v);
            }
            if values.len() != total {
                return Err(Error::Checkpoint(format!(
                    "text payload holds {} values, header promises {total}",
                    values.len()
                )));
            }
        }
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown parameter encoding '{}'",
                String::from_utf8_lossy(other)
            )));
        }
    }

    let mut params = Vec::with_capacity(header.param_shapes.len());
    let mut offset = 0usize;
    for shape in &header.param_shapes {
        let len: usize = shape.iter().product();
        let tensor_values = values[offset..offset + len].to_vec();
        offset += len;
        params.push(ParamTensor::new(shape.clone(), tensor_values)?);
    }

    let model = SequenceModel::from_parts(
        header.formulation,
        header.n_channels,
        header.n_maskable,
        header.lookback,
        header.hidden_sizes,
        params,
    )?;
    let maskable = MaskableChannelSet::new(header.maskable_channels, header.n_channels)?;
    Ok(CheckpointData {
        model,
        scaler: header.scaler,
        maskable,
        channel_names: header.channel_names,
        raw_stats: header.raw_stats,
        scaled_stats: header.scaled_stats,
        thresholds: header.thresholds,
        train_config: header.train_config,
        seed: header.seed,
        fill_policy: header.fill_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_data(seed: u64) -> CheckpointData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = SequenceModel::build_masked(4, 4, 3, &[8], &mut rng).unwrap();
        let stats = (0..4)
            .map(|i| ChannelStats {
                min: -1.0 - i as f64,
                max: 1.0 + i as f64,
                mean: 0.1 * i as f64,
                std: 0.5,
            })
            .collect::<Vec<_>>();
        let scaled = (0..4)
            .map(|_| ChannelStats {
                min: 0.0,
                max: 1.0,
                mean: 0.5,
                std: 0.2,
            })
            .collect::<Vec<_>>();
        let values = Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0));
        let ds = crate::data::TimeSeriesDataset::new(
            (0..4).map(|i| format!("ch{i:02}")).collect(),
            values,
            1.0,
        )
        .unwrap();
        CheckpointData {
            model,
            scaler: Scaler::fit(&ds, 0..10).unwrap(),
            maskable: MaskableChannelSet::all(4).unwrap(),
            channel_names: ds.channel_names().to_vec(),
            raw_stats: stats,
            scaled_stats: scaled,
            thresholds: Some(ThresholdInfo {
                per_channel: vec![0.01, 0.02, 0.03, 0.04],
                method: ThresholdMethod::MeanPlusKStd { k: 4.0 },
                calibration_windows: 100,
                residual_mean: vec![0.005, 0.01, 0.015, 0.02],
                residual_std: vec![0.00125, 0.0025, 0.00375, 0.005],
            }),
            train_config: None,
            seed,
            fill_policy: FillPolicy::ChannelMean,
        }
    }

    fn forward_probe(data: &CheckpointData, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = Vec::new();
        for _ in 0..100 {
            let window = Array2::from_shape_fn((4, 4), |_| rng.random_range(0.0..1.0));
            let mask = crate::masking::MaskSpec::single(
                rng.random_range(0..4),
                FillPolicy::ChannelMean,
            );
            let out = data
                .model
                .predict_masked(&window.view(), &mask, &data.maskable)
                .unwrap();
            bits.extend(out.iter().map(|v| v.to_bits()));
        }
        bits
    }

    #[test]
    fn round_trip_is_bit_exact_in_both_encodings() {
        let data = sample_data(21);
        let dir = tempfile::tempdir().unwrap();
        for (name, enc) in [
            ("bin.ckpt", CheckpointEncoding::Binary),
            ("text.ckpt", CheckpointEncoding::Text),
        ] {
            let path = dir.path().join(name);
            save_checkpoint(&data, &path, enc).unwrap();
            let loaded = load_checkpoint(&path).unwrap();
            assert_eq!(loaded.model, data.model, "{name}");
            assert_eq!(loaded.thresholds, data.thresholds);
            assert_eq!(loaded.scaler, data.scaler);
            assert_eq!(forward_probe(&loaded, 5), forward_probe(&data, 5), "{name}");
        }
    }

    #[test]
    fn save_is_byte_deterministic() {
        let data = sample_data(3);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a"), dir.path().join("b"));
        save_checkpoint(&data, &p1, CheckpointEncoding::Binary).unwrap();
        save_checkpoint(&data, &p2, CheckpointEncoding::Binary).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn truncated_file_is_rejected_cleanly() {
        let data = sample_data(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        save_checkpoint(&data, &path, CheckpointEncoding::Binary).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn foreign_files_and_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alien");
        std::fs::write(&path, b"not a checkpoint\n{}\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Checkpoint(_))
        ));

        let data = sample_data(5);
        let good = dir.path().join("good");
        save_checkpoint(&data, &good, CheckpointEncoding::Text).unwrap();
        let text = std::fs::read_to_string(&good).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":9", 1);
        std::fs::write(&path, bumped).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("format version"), "{err}");
    }

    #[test]
    fn text_payload_with_garbage_is_rejected() {
        let data = sample_data(6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("garbage");
        save_checkpoint(&data, &path, CheckpointEncoding::Text).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replacen("0.", "zz.", 1);
        std::fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
