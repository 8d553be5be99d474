//! Deterministic training loops for all three formulations.
//!
//! The masked loop follows the shape: per mini-batch, draw one mask
//! cardinality for the whole batch, then mask an independent channel subset
//! per sequence, forward the filled windows, and take the loss on the masked
//! channels only. Baselines share the identical window stream (same split,
//! same shuffle draws) so cross-formulation comparisons never hinge on data
//! order: the auto-regressive model reads each window's first `lookback`
//! rows and predicts the last, the autoencoder reconstructs the last row.
//!
//! One master seed fans out into fixed-purpose RNG streams (init, shuffle,
//! batch masks, validation masks), so extra draws in one concern can never
//! shift another. Everything runs sequentially — training determinism is
//! worth more than parallel epochs at these model sizes.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, Scaler, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::masking::{
    apply_mask, mask_cardinality_bound, sample_mask, FillPolicy, MaskSpec, MaskableChannelSet,
};
use crate::model::{CheckpointData, Formulation, SequenceModel};
use crate::numerics::{adam_step, AdamState, Tape, ValueId};

const INIT_STREAM: u64 = 0xA11CE;
const SHUFFLE_STREAM: u64 = 0x5B0_FF1E;
const MASK_STREAM: u64 = 0x3A5C;
const VAL_MASK_STREAM: u64 = 0x7A_11DA;

/// Validation loss is averaged over at most this many evenly spaced windows
/// per epoch; more adds cost without changing the curve.
const MAX_VAL_WINDOWS: usize = 4096;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Rows of history per window; windows span `lookback+1` samples.
    #[serde(alias = "T", alias = "t")]
    pub lookback: usize,
    pub seed: u64,
    pub formulation: Formulation,
    pub fill_policy: FillPolicy,
    /// Dataset channel indices eligible for masking; `None` = all channels.
    pub maskable_channels: Option<Vec<usize>>,
    pub shuffle: bool,
    pub hidden_sizes: Vec<usize>,
    /// Head fraction of the data used for fitting; the rest is validation.
    pub train_fraction: f64,
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.001,
            lookback: 19,
            seed: 0,
            formulation: Formulation::Masked,
            fill_policy: FillPolicy::UniformRandom,
            maskable_channels: None,
            shuffle: true,
            hidden_sizes: vec![64],
            train_fraction: 0.8,
            stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.lookback < 1 {
            return Err(Error::Config("lookback must be ≥ 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0,1), got {}",
                self.train_fraction
            )));
        }
        if self.stride < 1 {
            return Err(Error::Config("stride must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub formulation: Formulation,
    pub epochs: usize,
    /// Mean batch loss per epoch (batch-size weighted).
    pub train_loss: Vec<f64>,
    /// Mean per-window loss on the fixed validation schedule, per epoch.
    pub validation_loss: Vec<f64>,
    pub n_train_windows: usize,
    pub n_validation_windows: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub checkpoint_path: Option<String>,
}

pub struct TrainOutcome {
    pub checkpoint: CheckpointData,
    pub report: TrainReport,
}

/// Trains per `config.formulation` on the raw `dataset` (scaling happens
/// internally, fitted on the head split only).
pub fn train(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    match config.formulation {
        Formulation::Masked => train_masked(dataset, config),
        Formulation::AutoRegressive | Formulation::AutoAssociative => {
            train_baseline(dataset, config)
        }
    }
}

/// Masked-reconstruction training; `config.formulation` must be `masked`.
pub fn train_masked(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if config.formulation != Formulation::Masked {
        return Err(Error::Usage(format!(
            "train_masked called with formulation {}",
            config.formulation
        )));
    }
    run_training(dataset, config)
}

/// Baseline training; `config.formulation` must be `auto_regressive` or
/// `auto_associative`.
pub fn train_baseline(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if config.formulation == Formulation::Masked {
        return Err(Error::Usage(
            "train_baseline called with the masked formulation".into(),
        ));
    }
    run_training(dataset, config)
}

/// The shuffled window-start order for one epoch. Deliberately independent
/// of the formulation: every model sees the identical stream for a given
/// seed, which keeps cross-formulation comparisons fair.
pub(crate) fn epoch_order(starts: &[usize], shuffle: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order = starts.to_vec();
    if shuffle {
        order.shuffle(rng);
    }
    order
}

/// Flat tensors for one mini-batch: already-masked inputs, targets over the
/// model's output layout, per-cell loss weights, and the loss denominator.
/// The loss `Σ weights⊙(pred−target)² / denom` equals the mean over the
/// batch of each sequence's own masked-channel MSE.
struct BatchTensors {
    input: Array2<f64>,
    target: Array2<f64>,
    weights: Array2<f64>,
    denom: f64,
}

fn build_masked_batch(
    scaled: &Array2<f64>,
    starts: &[usize],
    masks: &[MaskSpec],
    model: &SequenceModel,
    maskable: &MaskableChannelSet,
    scaled_stats: &[ChannelStats],
) -> Result<BatchTensors> {
    let rows = model.lookback() + 1;
    let nm = maskable.len();
    let b = starts.len();
    let mut input = Array2::zeros((b, model.input_dim()));
    let mut target = Array2::zeros((b, model.output_dim()));
    let mut weights = Array2::zeros((b, model.output_dim()));
    for (sidx, (&start, mask)) in starts.iter().zip(masks).enumerate() {
        let window = scaled.slice(s![start..start + rows, ..]);
        let filled = apply_mask(&window, mask, maskable, scaled_stats)?;
        let flat = model.flatten_masked_input(&filled.view(), mask, maskable)?;
        input.row_mut(sidx).assign(&flat.row(0));
        for t in 0..rows {
            for m in 0..nm {
                target[[sidx, t * nm + m]] = window[[t, maskable.dataset_index(m)]];
            }
        }
        // Per-sequence weight 1/(rows·c) makes each sequence contribute its
        // own masked-channel MSE, regardless of its mask cardinality.
        let w = 1.0 / (rows * mask.masked_channels.len()) as f64;
        for &pos in &mask.masked_channels {
            for t in 0..rows {
                weights[[sidx, t * nm + pos]] = w;
            }
        }
    }
    Ok(BatchTensors {
        input,
        target,
        weights,
        denom: b as f64,
    })
}

/// Auto-regressive: the window's first `stream_lookback` rows in, last row
/// out. Auto-associative: last row in, last row out. `stream_lookback` is
/// the window stream's history length — the AE model itself stores no
/// lookback but still reads from the shared stream's window positions.
fn build_baseline_batch(
    scaled: &Array2<f64>,
    starts: &[usize],
    model: &SequenceModel,
    stream_lookback: usize,
) -> BatchTensors {
    let n = model.n_channels();
    let b = starts.len();
    let mut input = Array2::zeros((b, model.input_dim()));
    let mut target = Array2::zeros((b, n));
    for (sidx, &start) in starts.iter().enumerate() {
        let last = start + stream_lookback;
        match model.formulation() {
            Formulation::AutoRegressive => {
                for t in 0..stream_lookback {
                    for c in 0..n {
                        input[[sidx, t * n + c]] = scaled[[start + t, c]];
                    }
                }
            }
            _ => {
                for c in 0..n {
                    input[[sidx, c]] = scaled[[last, c]];
                }
            }
        }
        for c in 0..n {
            target[[sidx, c]] = scaled[[last, c]];
        }
    }
    BatchTensors {
        input,
        target,
        weights: Array2::ones((b, n)),
        denom: (b * n) as f64,
    }
}

/// Records a forward pass of `model` on `batch` and returns the tape, the
/// loss node, and the parameter leaves (in `model.params()` order). The op
/// sequence matches `SequenceModel::forward_flat` exactly, so trained
/// weights behave identically at inference.
fn tape_forward(
    model: &SequenceModel,
    batch: BatchTensors,
) -> Result<(Tape, ValueId, Vec<ValueId>)> {
    let mut tape = Tape::new();
    let mut cur = tape.leaf(batch.input);
    let mut param_ids = Vec::with_capacity(model.params().len());
    let n_layers = model.params().len() / 2;
    for layer in 0..n_layers {
        let w = tape.leaf(model.params()[2 * layer].as_matrix().to_owned());
        let b = tape.leaf(model.params()[2 * layer + 1].as_matrix().to_owned());
        param_ids.push(w);
        param_ids.push(b);
        cur = tape.matmul(cur, w)?;
        cur = tape.add_row(cur, b)?;
        if layer + 1 < n_layers {
            cur = tape.tanh(cur);
        }
    }
    let target = tape.leaf(batch.target);
    let loss = tape.weighted_sse(cur, target, batch.weights, batch.denom)?;
    Ok((tape, loss, param_ids))
}

/// `Σ weights⊙(pred−target)²` without a tape (validation scoring).
fn weighted_sq_sum(pred: &Array2<f64>, target: &Array2<f64>, weights: &Array2<f64>) -> f64 {
    let mut sum = 0.0;
    for r in 0..pred.nrows() {
        for c in 0..pred.ncols() {
            let d = pred[[r, c]] - target[[r, c]];
            sum += weights[[r, c]] * d * d;
        }
    }
    sum
}

struct Prepared {
    model: SequenceModel,
    maskable: MaskableChannelSet,
    scaler: Scaler,
    raw_stats: Vec<ChannelStats>,
    scaled_stats: Vec<ChannelStats>,
    scaled_train: Array2<f64>,
    scaled_val: Array2<f64>,
    train_starts: Vec<usize>,
    val_starts: Vec<usize>,
    val_masks: Vec<MaskSpec>,
}

fn prepare(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<Prepared> {
    config.validate()?;
    let n = dataset.n_channels();
    let maskable = match &config.maskable_channels {
        Some(indices) => MaskableChannelSet::new(indices.clone(), n)?,
        None => MaskableChannelSet::all(n)?,
    };

    let window_rows = config.lookback + 1;
    let (train_ds, val_ds) = dataset.chronological_split(config.train_fraction, window_rows)?;
    let scaler = Scaler::fit(&train_ds, 0..train_ds.n_samples())?;
    let raw_stats = train_ds.compute_stats(0..train_ds.n_samples())?;
    let scaled_train_ds = scaler.transform_dataset(&train_ds)?;
    let scaled_stats = scaled_train_ds.compute_stats(0..scaled_train_ds.n_samples())?;
    let scaled_val_ds = scaler.transform_dataset(&val_ds)?;

    let mut init_rng = stream_rng(config.seed, INIT_STREAM);
    let model = match config.formulation {
        Formulation::Masked => SequenceModel::build_masked(
            n,
            maskable.len(),
            config.lookback,
            &config.hidden_sizes,
            &mut init_rng,
        )?,
        Formulation::AutoRegressive => SequenceModel::build_auto_regressive(
            n,
            config.lookback,
            &config.hidden_sizes,
            &mut init_rng,
        )?,
        Formulation::AutoAssociative => {
            SequenceModel::build_auto_associative(n, &config.hidden_sizes, &mut init_rng)?
        }
    };

    let starts = |count: usize| -> Vec<usize> { (0..count).map(|k| k * config.stride).collect() };
    let train_count =
        crate::data::window_count(train_ds.n_samples(), config.lookback, config.stride)?;
    let val_count = crate::data::window_count(val_ds.n_samples(), config.lookback, config.stride)?;
    let train_starts = starts(train_count);
    let mut val_starts = starts(val_count);
    if val_starts.len() > MAX_VAL_WINDOWS {
        val_starts = (0..MAX_VAL_WINDOWS)
            .map(|i| val_starts[i * val_starts.len() / MAX_VAL_WINDOWS])
            .collect();
    }

    // Fixed validation mask schedule: resampling masks each epoch would make
    // the validation curve incomparable across epochs.
    let mut val_rng = stream_rng(config.seed, VAL_MASK_STREAM);
    let val_masks: Vec<MaskSpec> = if config.formulation == Formulation::Masked {
        val_starts
            .iter()
            .map(|_| {
                let mut m = sample_mask(maskable.len(), &mut val_rng)?;
                m.fill_policy = config.fill_policy;
                Ok(m)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    Ok(Prepared {
        model,
        maskable,
        scaler,
        raw_stats,
        scaled_stats,
        scaled_train: scaled_train_ds.samples().clone(),
        scaled_val: scaled_val_ds.samples().clone(),
        train_starts,
        val_starts,
        val_masks,
    })
}

fn validation_loss(prep: &Prepared, config: &TrainConfig) -> Result<f64> {
    if prep.val_starts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (chunk_idx, chunk) in prep.val_starts.chunks(512).enumerate() {
        let batch = if config.formulation == Formulation::Masked {
            let mask_off = chunk_idx * 512;
            build_masked_batch(
                &prep.scaled_val,
                chunk,
                &prep.val_masks[mask_off..mask_off + chunk.len()],
                &prep.model,
                &prep.maskable,
                &prep.scaled_stats,
            )?
        } else {
            build_baseline_batch(&prep.scaled_val, chunk, &prep.model, config.lookback)
        };
        let pred = prep.model.forward_flat(&batch.input.view())?;
        // Baseline weights are 1; normalize their window sums by n here.
        let per_cell = weighted_sq_sum(&pred, &batch.target, &batch.weights);
        total += match config.formulation {
            Formulation::Masked => per_cell,
            _ => per_cell / prep.model.n_channels() as f64,
        };
    }
    let loss = total / prep.val_starts.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite validation loss {loss} (seed {})",
            config.seed
        )));
    }
    Ok(loss)
}

fn run_training(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut prep = prepare(dataset, config)?;
    let mut shuffle_rng = stream_rng(config.seed, SHUFFLE_STREAM);
    let mut mask_rng = stream_rng(config.seed, MASK_STREAM);
    let param_lens: Vec<usize> = prep.model.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(config.learning_rate, &param_lens);

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let nm = prep.maskable.len();
    let bound = mask_cardinality_bound(nm);

    for epoch in 0..config.epochs {
        let order = epoch_order(&prep.train_starts, config.shuffle, &mut shuffle_rng);
        let mut epoch_sum = 0.0;
        let mut epoch_rows = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let masks: Vec<MaskSpec> = if config.formulation == Formulation::Masked {
                // One cardinality per batch, channels drawn per sequence.
                let c_m = mask_rng.random_range(1..=bound);
                chunk
                    .iter()
                    .map(|_| {
                        let mut chosen =
                            rand::seq::index::sample(&mut mask_rng, nm, c_m).into_vec();
                        chosen.sort_unstable();
                        MaskSpec {
                            masked_channels: chosen,
                            fill_policy: config.fill_policy,
                            rng_seed: mask_rng.random(),
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let batch = if config.formulation == Formulation::Masked {
                build_masked_batch(
                    &prep.scaled_train,
                    chunk,
                    &masks,
                    &prep.model,
                    &prep.maskable,
                    &prep.scaled_stats,
                )?
            } else {
                build_baseline_batch(&prep.scaled_train, chunk, &prep.model, config.lookback)
            };

            let (tape, loss_id, param_ids) = tape_forward(&prep.model, batch)?;
            let loss = tape.value(loss_id)[[0, 0]];
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {batch_idx}, masks {:?}",
                    masks.iter().map(|m| &m.masked_channels).collect::<Vec<_>>()
                )));
            }
            let grads_all = tape.backward(loss_id)?;
            let grads: Vec<Array2<f64>> = param_ids.iter().map(|&id| grads_all.wrt(id)).collect();
            adam_step(&mut adam, prep.model.params_mut(), &grads)?;

            epoch_sum += loss * chunk.len() as f64;
            epoch_rows += chunk.len();
        }
        train_loss.push(if epoch_rows > 0 {
            epoch_sum / epoch_rows as f64
        } else {
            0.0
        });
        val_loss.push(validation_loss(&prep, config)?);
    }

    let report = TrainReport {
        formulation: config.formulation,
        epochs: config.epochs,
        train_loss,
        validation_loss: val_loss,
        n_train_windows: prep.train_starts.len(),
        n_validation_windows: prep.val_starts.len(),
        seed: config.seed,
        checkpoint_path: None,
    };
    let checkpoint = CheckpointData {
        model: prep.model,
        scaler: prep.scaler,
        maskable: prep.maskable,
        channel_names: dataset.channel_names().to_vec(),
        raw_stats: prep.raw_stats,
        scaled_stats: prep.scaled_stats,
        thresholds: None,
        train_config: Some(config.clone()),
        seed: config.seed,
        fill_policy: config.fill_policy,
    };
    Ok(TrainOutcome { checkpoint, report })
}
