//! Online detection, isolation, and accommodation.
//!
//! Per window, the engine runs one masked prediction per protected channel
//! (hiding only that channel), scores the reconstruction residual as the
//! mean absolute error over the window, and flags channels whose residual
//! exceeds their calibrated threshold. Flagged channels get their
//! measurements replaced by the model's reconstruction; when two or more
//! channels flag at once, all of them are re-masked jointly so the
//! substitute values come only from channels still considered healthy. If
//! more channels flag than the training-time masking bound allows, the
//! result carries an alarm: the substitutions are still reported but the
//! model never saw that many simultaneous holes during training, so they
//! should not be trusted.
//!
//! The per-channel first-pass predictions are independent and run through
//! [`crate::exec::map_indexed`], so a parallel engine and a sequential one
//! return bit-identical results.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, Scaler, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::masking::{apply_mask, mask_cardinality_bound, FillPolicy, MaskSpec, MaskableChannelSet};
use crate::model::{CheckpointData, Formulation, SequenceModel, ThresholdInfo};

/// How per-channel detection thresholds are derived from fault-free
/// validation residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ThresholdMethod {
    /// `th = mean + k·std` of the validation residuals (default, k = 4).
    MeanPlusKStd { k: f64 },
    /// `th` = the q-quantile of the validation residuals (e.g. q = 0.999).
    Quantile { q: f64 },
}

impl Default for ThresholdMethod {
    fn default() -> Self {
        ThresholdMethod::MeanPlusKStd { k: 4.0 }
    }
}

impl ThresholdMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdMethod::MeanPlusKStd { k } => {
                if !(k.is_finite() && k >= 0.0) {
                    return Err(Error::Config(format!("threshold k must be ≥ 0, got {k}")));
                }
            }
            ThresholdMethod::Quantile { q } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(Error::Config(format!(
                        "threshold quantile must lie in (0,1], got {q}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Applies the rule to one channel's residual sample.
pub(crate) fn threshold_from_residuals(residuals: &[f64], method: ThresholdMethod) -> f64 {
    let n = residuals.len() as f64;
    match method {
        ThresholdMethod::MeanPlusKStd { k } => {
            let mean = residuals.iter().sum::<f64>() / n;
            let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            mean + k * var.sqrt()
        }
        ThresholdMethod::Quantile { q } => {
            let mut sorted = residuals.to_vec();
            sorted.sort_by(f64::total_cmp);
            let idx = ((n * q).ceil() as usize).clamp(1, sorted.len()) - 1;
            sorted[idx]
        }
    }
}

/// Outcome of one detection step over a single window.
#[derive(Debug, Clone, PartialEq)]
pub struct FdiaResult {
    /// Mean absolute reconstruction error per maskable position (scaled
    /// units), from the per-channel pass — `residuals[p] > threshold[p]`
    /// iff `p` is flagged.
    pub residuals: Vec<f64>,
    /// Flagged maskable positions, sorted.
    pub flags: Vec<usize>,
    /// The input window (raw units) with flagged channels replaced by the
    /// model's reconstruction; unflagged cells are bit-identical to the input.
    pub accommodated: Array2<f64>,
    /// More channels flagged than the engine can reliably accommodate.
    pub alarm: bool,
    /// 1 = per-channel pass only; 2 = joint re-mask of all flagged channels.
    pub iterations_used: usize,
}

/// Step-attributed detection over a long series.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamVerdict {
    /// Sample index each verdict is attributed to (its window's last row).
    pub window_end_steps: Vec<usize>,
    /// `window × maskable position` residual matrix (scaled units).
    pub residuals: Array2<f64>,
    pub flags: Vec<Vec<usize>>,
    pub alarms: Vec<bool>,
    /// First flagged sample index per maskable position.
    pub onsets: Vec<Option<usize>>,
    /// The full series (raw units) with each verdict step's flagged channels
    /// replaced; steps before the first verdict pass through unchanged.
    pub accommodated: Array2<f64>,
    pub maskable_names: Vec<String>,
    pub maskable_dataset_indices: Vec<usize>,
}

/// Compact JSON-friendly view of a [`StreamVerdict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    /// Channel name → first flagged sample index (if ever flagged).
    pub onsets: std::collections::BTreeMap<String, Option<usize>>,
    pub alarm_steps: Vec<usize>,
    pub n_windows: usize,
    pub n_flagged_windows: usize,
}

impl StreamVerdict {
    pub fn summary(&self) -> StreamSummary {
        StreamSummary {
            onsets: self
                .maskable_names
                .iter()
                .cloned()
                .zip(self.onsets.iter().copied())
                .collect(),
            alarm_steps: self
                .window_end_steps
                .iter()
                .zip(&self.alarms)
                .filter(|(_, &a)| a)
                .map(|(&t, _)| t)
                .collect(),
            n_windows: self.window_end_steps.len(),
            n_flagged_windows: self.flags.iter().filter(|f| !f.is_empty()).count(),
        }
    }

    /// Long-format CSV: one row per (verdict step, protected channel).
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write as _;
        let file = std::fs::File::create(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "time,channel,residual,flag,accommodated")?;
        for (w, &t) in self.window_end_steps.iter().enumerate() {
            for (pos, name) in self.maskable_names.iter().enumerate() {
                let col = self.maskable_dataset_indices[pos];
                writeln!(
                    out,
                    "{t},{name},{},{},{}",
                    self.residuals[[w, pos]],
                    u8::from(self.flags[w].contains(&pos)),
                    self.accommodated[[t, col]]
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// The detection engine: a trained masked model plus scaling state and
/// thresholds. Read-only once built; safe to share across threads.
pub struct FdiaEngine {
    model: SequenceModel,
    maskable: MaskableChannelSet,
    scaler: Scaler,
    scaled_stats: Vec<ChannelStats>,
    fill_policy: FillPolicy,
    thresholds: Option<Vec<f64>>,
    max_iterations: usize,
    mode: ExecMode,
    forward_passes: AtomicU64,
}

impl FdiaEngine {
    /// Builds an engine from a trained checkpoint. Detection requires
    /// calibrated thresholds; an engine without them can still score windows
    /// (that is what calibration itself uses). The inference fill policy
    /// defaults to `channel_mean` for run-to-run determinism, independent of
    /// the training fill.
    pub fn new(checkpoint: &CheckpointData, mode: ExecMode) -> Result<Self> {
        if checkpoint.model.formulation() != Formulation::Masked {
            return Err(Error::Usage(format!(
                "detection needs a masked model, checkpoint holds {}",
                checkpoint.model.formulation()
            )));
        }
        Ok(Self {
            model: checkpoint.model.clone(),
            maskable: checkpoint.maskable.clone(),
            scaler: checkpoint.scaler.clone(),
            scaled_stats: checkpoint.scaled_stats.clone(),
            fill_policy: FillPolicy::ChannelMean,
            thresholds: checkpoint.thresholds.as_ref().map(|t| t.per_channel.clone()),
            max_iterations: 2,
            mode,
            forward_passes: AtomicU64::new(0),
        })
    }

    pub fn with_fill_policy(mut self, fill_policy: FillPolicy) -> Self {
        self.fill_policy = fill_policy;
        self
    }

    /// 1 = never re-mask jointly; 2 (default) = one joint second pass.
    pub fn with_max_iterations(mut self, max_iterations: usize) -> Result<Self> {
        if max_iterations < 1 {
            return Err(Error::Config("max_iterations must be ≥ 1".into()));
        }
        self.max_iterations = max_iterations;
        Ok(self)
    }

    pub fn with_thresholds(mut self, per_channel: Vec<f64>) -> Result<Self> {
        if per_channel.len() != self.maskable.len() {
            return Err(Error::Dimension(format!(
                "{} thresholds for {} protected channels",
                per_channel.len(),
                self.maskable.len()
            )));
        }
        self.thresholds = Some(per_channel);
        Ok(self)
    }

    pub fn n_maskable(&self) -> usize {
        self.maskable.len()
    }

    pub fn maskable(&self) -> &MaskableChannelSet {
        &self.maskable
    }

    pub fn lookback(&self) -> usize {
        self.model.lookback()
    }

    /// Alarm cutoff: more simultaneous flags than the training-time masking
    /// bound means the substitutions are extrapolation.
    pub fn alarm_cutoff(&self) -> usize {
        mask_cardinality_bound(self.maskable.len())
    }

    /// Total model forward passes since construction (or the last reset) —
    /// detection cost is linear in the number of protected channels, and
    /// this counter is how tests pin that down.
    pub fn forward_pass_count(&self) -> u64 {
        self.forward_passes.load(Ordering::Relaxed)
    }

    pub fn reset_forward_pass_count(&self) {
        self.forward_passes.store(0, Ordering::Relaxed);
    }

    fn check_window(&self, window: &ArrayView2<'_, f64>) -> Result<()> {
        let rows = self.model.lookback() + 1;
        if window.dim() != (rows, self.model.n_channels()) {
            return Err(Error::Dimension(format!(
                "window is {:?}, the model expects ({rows}, {}) — was this checkpoint \
                 trained on a different channel set?",
                window.dim(),
                self.model.n_channels()
            )));
        }
        Ok(())
    }

    /// Masks the given channels on the scaled window and returns the model's
    /// reconstruction of all maskable channels.
    fn predict_with_mask(
        &self,
        scaled: &ArrayView2<'_, f64>,
        positions: &[usize],
    ) -> Result<Array2<f64>> {
        let mask = MaskSpec {
            masked_channels: positions.to_vec(),
            fill_policy: self.fill_policy,
            rng_seed: 0,
        };
        let filled = apply_mask(scaled, &mask, &self.maskable, &self.scaled_stats)?;
        self.forward_passes.fetch_add(1, Ordering::Relaxed);
        self.model.predict_masked(&filled.view(), &mask, &self.maskable)
    }

    /// Mean absolute reconstruction error for one protected channel over a
    /// raw window: the channel is hidden, reconstructed from the others, and
    /// compared against what the sensor actually reported (in scaled units).
    pub fn score_window(&self, window: &ArrayView2<'_, f64>, position: usize) -> Result<f64> {
        self.check_window(window)?;
        if position >= self.maskable.len() {
            return Err(Error::Usage(format!(
                "channel position {position} is not in the protected set of {}",
                self.maskable.len()
            )));
        }
        let scaled = self.scaler.transform(window)?;
        let pred = self.predict_with_mask(&scaled.view(), &[position])?;
        let col = self.maskable.dataset_index(position);
        Ok(mean_abs_error(
            pred.column(position).iter().copied(),
            scaled.column(col).iter().copied(),
        ))
    }

    /// One detection step over a raw window.
    pub fn fdia_step(&self, window: &ArrayView2<'_, f64>) -> Result<FdiaResult> {
        self.check_window(window)?;
        let thresholds = self.thresholds.as_ref().ok_or_else(|| {
            Error::Usage("detection needs calibrated thresholds; run calibration first".into())
        })?;
        let scaled = self.scaler.transform(window)?;
        let nm = self.maskable.len();

        // Pass 1: hide each protected channel on its own. Independent per
        // channel; merged by index, so execution mode cannot change results.
        let per_channel: Vec<Result<(f64, Vec<f64>)>> =
            map_indexed(self.mode, nm, |pos| -> Result<(f64, Vec<f64>)> {
                let pred = self.predict_with_mask(&scaled.view(), &[pos])?;
                let col = self.maskable.dataset_index(pos);
                let residual = mean_abs_error(
                    pred.column(pos).iter().copied(),
                    scaled.column(col).iter().copied(),
                );
                Ok((residual, pred.column(pos).to_vec()))
            });

        let mut residuals = Vec::with_capacity(nm);
        let mut predictions = Vec::with_capacity(nm);
        for item in per_channel {
            let (r, p) = item?;
            residuals.push(r);
            predictions.push(p);
        }
        let flags: Vec<usize> = (0..nm).filter(|&p| residuals[p] > thresholds[p]).collect();

        // Pass 2: with several suspects, their pass-1 reconstructions leaned
        // on each other's (corrupt) values — hide all of them together and
        // recompute the predictions from the channels still considered
        // healthy. Only the accommodated values change; the flag decision
        // stands (localization happened in pass 1).
        let mut iterations_used = 1;
        if flags.len() >= 2 && self.max_iterations >= 2 {
            iterations_used = 2;
            let joint = self.predict_with_mask(&scaled.view(), &flags)?;
            for &pos in &flags {
                predictions[pos] = joint.column(pos).to_vec();
            }
        }

        let mut accommodated = window.to_owned();
        for &pos in &flags {
            let col = self.maskable.dataset_index(pos);
            for t in 0..accommodated.nrows() {
                accommodated[[t, col]] = self.scaler.inverse_value(col, predictions[pos][t]);
            }
        }

        let alarm = flags.len() > self.alarm_cutoff();
        Ok(FdiaResult {
            residuals,
            flags,
            accommodated,
            alarm,
            iterations_used,
        })
    }

    /// Detection over a whole series: windows slide at `stride`, each
    /// verdict is attributed to its window's last sample (causal — a verdict
    /// never depends on data after its step).
    pub fn stream(&self, series: &TimeSeriesDataset, stride: usize) -> Result<StreamVerdict> {
        if series.n_channels() != self.model.n_channels() {
            return Err(Error::Dimension(format!(
                "series has {} channels, the checkpoint was trained on {}",
                series.n_channels(),
                self.model.n_channels()
            )));
        }
        let lookback = self.model.lookback();
        let count = crate::data::window_count(series.n_samples(), lookback, stride)?;
        let nm = self.maskable.len();

        let mut window_end_steps = Vec::with_capacity(count);
        let mut residuals = Array2::zeros((count, nm));
        let mut flags: Vec<Vec<usize>> = Vec::with_capacity(count);
        let mut alarms = Vec::with_capacity(count);
        let mut onsets: Vec<Option<usize>> = vec![None; nm];
        let mut accommodated = series.samples().clone();

        for w in 0..count {
            let start = w * stride;
            let end_step = start + lookback;
            let window = series.samples().slice(s![start..start + lookback + 1, ..]);
            let step = self.fdia_step(&window)?;
            for pos in 0..nm {
                residuals[[w, pos]] = step.residuals[pos];
            }
            for &pos in &step.flags {
                onsets[pos].get_or_insert(end_step);
                let col = self.maskable.dataset_index(pos);
                accommodated[[end_step, col]] = step.accommodated[[lookback, col]];
            }
            window_end_steps.push(end_step);
            alarms.push(step.alarm);
            flags.push(step.flags);
        }

        let names = self
            .maskable
            .dataset_indices()
            .iter()
            .map(|&c| series.channel_names()[c].clone())
            .collect();
        Ok(StreamVerdict {
            window_end_steps,
            residuals,
            flags,
            alarms,
            onsets,
            accommodated,
            maskable_names: names,
            maskable_dataset_indices: self.maskable.dataset_indices().to_vec(),
        })
    }
}

/// `Σ|a−b| / len` — the per-window residual.
fn mean_abs_error(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in a.zip(b) {
        sum += (x - y).abs();
        n += 1;
    }
    sum / n as f64
}

/// Derives per-channel thresholds from fault-free validation data: every
/// window of `validation` is scored per protected channel, and `method`
/// turns each channel's residual sample into a threshold.
pub fn calibrate_thresholds(
    checkpoint: &CheckpointData,
    validation: &TimeSeriesDataset,
    method: ThresholdMethod,
    stride: usize,
    mode: ExecMode,
) -> Result<ThresholdInfo> {
    method.validate()?;
    let engine = FdiaEngine::new(checkpoint, ExecMode::Sequential)?;
    let lookback = engine.lookback();
    let count = crate::data::window_count(validation.n_samples(), lookback, stride)?;
    if count < 100 {
        return Err(Error::Calibration(format!(
            "{count} validation windows is too few to calibrate on (need ≥ 100)"
        )));
    }
    let nm = engine.n_maskable();

    // Parallelism across windows (each scored sequentially inside).
    let per_window: Vec<Result<Vec<f64>>> = map_indexed(mode, count, |w| {
        let start = w * stride;
        let window = validation
            .samples()
            .slice(s![start..start + lookback + 1, ..]);
        (0..nm).map(|pos| engine.score_window(&window, pos)).collect()
    });

    let mut per_channel: Vec<Vec<f64>> = vec![Vec::with_capacity(count); nm];
    for row in per_window {
        for (pos, r) in row?.into_iter().enumerate() {
            per_channel[pos].push(r);
        }
    }

    let mut thresholds = Vec::with_capacity(nm);
    let mut means = Vec::with_capacity(nm);
    let mut stds = Vec::with_capacity(nm);
    for (pos, sample) in per_channel.iter().enumerate() {
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        let th = threshold_from_residuals(sample, method);
        if !(th.is_finite() && th > 0.0) {
            return Err(Error::Calibration(format!(
                "channel position {pos} produced threshold {th}; residuals look degenerate"
            )));
        }
        thresholds.push(th);
        means.push(mean);
        stds.push(var.sqrt());
    }
    Ok(ThresholdInfo {
        per_channel: thresholds,
        method,
        calibration_windows: count,
        residual_mean: means,
        residual_std: stds,
    })
}
