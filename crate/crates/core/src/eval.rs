//! Detection metrics (ROC AUC, AUPRC), benchmark harnesses, and
//! machine-readable reports.
//!
//! Three benchmarks mirror how a sensor-validation layer is judged:
//! detection quality per formulation on an injected fault (threshold-free,
//! via ROC AUC / AUPRC over per-window residuals), downstream benefit of
//! accommodation (mean squared error of a fixed virtual pipeline under
//! clean, faulted, and accommodated inputs), and per-step latency against a
//! real-time budget.

use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::faults::{apply_scenario, FaultSpec};
use crate::fdia::FdiaEngine;
use crate::model::{CheckpointData, Formulation};

/// One detection score with its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    /// `true` = the window overlaps a fault.
    pub label: bool,
}

fn class_counts(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if let Some(bad) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Metric(format!("non-finite score {}", bad.score)));
    }
    let pos = samples.iter().filter(|s| s.label).count();
    Ok((pos, samples.len() - pos))
}

/// Probability that a random positive outscores a random negative, ties
/// counted half (the rank / Mann-Whitney formulation).
pub fn roc_auc(samples: &[ScoredSample]) -> Result<f64> {
    let (pos, neg) = class_counts(samples)?;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "ROC AUC undefined: {pos} positive and {neg} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| f64::total_cmp(&samples[a].score, &samples[b].score));

    // Average ranks across tie groups, then the Mann-Whitney U statistic.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && samples[order[j]].score == samples[order[i]].score {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of 1-based ranks i+1 ..= j
        for &idx in &order[i..j] {
            if samples[idx].label {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Area under the precision-recall step curve: thresholds at every distinct
/// score, descending, non-interpolated summation `Σ (R_k − R_{k−1})·P_k`.
pub fn auprc(samples: &[ScoredSample]) -> Result<f64> {
    let (pos, _) = class_counts(samples)?;
    if pos == 0 {
        return Err(Error::Metric("AUPRC undefined without positive samples".into()));
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp) in threshold_sweep(samples) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Cumulative (true positives, false positives) at each distinct score
/// threshold, descending.
fn threshold_sweep(samples: &[ScoredSample]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| f64::total_cmp(&samples[b].score, &samples[a].score));
    let mut out = Vec::new();
    let mut tp = 0;
    let mut fp = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && samples[order[j]].score == samples[order[i]].score {
            if samples[order[j]].label {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        out.push((tp, fp));
        i = j;
    }
    out
}

/// `(false positive rate, true positive rate)` pairs from (0,0) to (1,1).
pub fn roc_points(samples: &[ScoredSample]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(samples)?;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("ROC curve needs both classes".into()));
    }
    let mut points = vec![(0.0, 0.0)];
    for (tp, fp) in threshold_sweep(samples) {
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// `(recall, precision)` pairs at each distinct threshold, recall
/// non-decreasing.
pub fn pr_points(samples: &[ScoredSample]) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = class_counts(samples)?;
    if pos == 0 {
        return Err(Error::Metric("PR curve needs positive samples".into()));
    }
    Ok(threshold_sweep(samples)
        .into_iter()
        .map(|(tp, fp)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64))
        .collect())
}

/// A fixed, seeded linear map from sensor channels to virtual downstream
/// outputs — the stand-in for a physics pipeline that consumes the sensors.
/// Ground-truth outputs add seeded noise so the clean-input error is nonzero;
/// the map and the noise stay fixed across all arms of an experiment.
/// Fully determined by its construction arguments, so configs only need to
/// record those.
#[derive(Debug, Clone, PartialEq)]
pub struct DownstreamPipeline {
    weights: Array2<f64>,
    offset: Array1<f64>,
    noise_std: f64,
    seed: u64,
}

impl DownstreamPipeline {
    /// Signed weights with magnitude in [0.5, 1.5), so every sensor matters
    /// to every output at a comparable scale.
    pub fn new_seeded(n_inputs: usize, n_outputs: usize, noise_std: f64, seed: u64) -> Result<Self> {
        Self::new_seeded_in_band(n_inputs, n_outputs, (0.5, 1.5), noise_std, seed)
    }

    /// Like [`DownstreamPipeline::new_seeded`], but weight magnitudes are
    /// drawn from `band`. A narrow band keeps every output comparably
    /// sensitive to the faulted sensor, which is what the accommodation
    /// contrast (faulted ≥ 2×, accommodated ≤ 1.5× the clean error) needs to
    /// hold for *every* output at once.
    pub fn new_seeded_in_band(
        n_inputs: usize,
        n_outputs: usize,
        band: (f64, f64),
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_outputs == 0 || n_outputs > n_inputs {
            return Err(Error::Usage(format!(
                "pipeline needs 1..={n_inputs} outputs for full row rank, got {n_outputs}"
            )));
        }
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::Usage(format!("pipeline noise_std {noise_std} invalid")));
        }
        let (lo, hi) = band;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::Usage(format!(
                "weight band must satisfy 0 < lo < hi, got [{lo}, {hi})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00D0_EA75);
        let weights = Array2::from_shape_fn((n_outputs, n_inputs), |_| {
            let mag = rng.random_range(lo..hi);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        });
        let offset = Array1::from_shape_fn(n_outputs, |_| rng.random_range(-1.0..1.0));
        let pipeline = Self {
            weights,
            offset,
            noise_std,
            seed,
        };
        if pipeline.row_rank() < n_outputs {
            return Err(Error::Numeric(
                "seeded pipeline weights are rank-deficient; pick another seed".into(),
            ));
        }
        Ok(pipeline)
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Rank of the weight matrix via Gaussian elimination with partial
    /// pivoting — cheap at these sizes and enough to reject degenerate maps.
    fn row_rank(&self) -> usize {
        let mut a = self.weights.clone();
        let (m, n) = a.dim();
        let mut rank = 0;
        let mut row = 0;
        for col in 0..n {
            if row == m {
                break;
            }
            let pivot = (row..m).max_by(|&i, &j| {
                f64::total_cmp(&a[[i, col]].abs(), &a[[j, col]].abs())
            });
            let Some(p) = pivot else { break };
            if a[[p, col]].abs() < 1e-9 {
                continue;
            }
            if p != row {
                for c in 0..n {
                    a.swap([p, c], [row, c]);
                }
            }
            for i in row + 1..m {
                let f = a[[i, col]] / a[[row, col]];
                for c in col..n {
                    a[[i, c]] -= f * a[[row, c]];
                }
            }
            row += 1;
            rank += 1;
        }
        rank
    }

    /// `x·Wᵀ + offset`, row-wise over the samples.
    pub fn apply(&self, samples: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if samples.ncols() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "pipeline takes {} input channels, data has {}",
                self.n_inputs(),
                samples.ncols()
            )));
        }
        let mut out = samples.dot(&self.weights.t());
        for mut row in out.rows_mut() {
            row += &self.offset;
        }
        Ok(out)
    }

    /// The "what the plant really did" reference: the map applied to clean
    /// data plus seeded measurement noise. Same seed, same truth — so the
    /// three experiment arms compare against one fixed target.
    pub fn ground_truth(&self, clean: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut truth = self.apply(clean)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7121FF);
        for t in 0..truth.nrows() {
            for j in 0..truth.ncols() {
                let z: f64 = StandardNormal.sample(&mut rng);
                truth[[t, j]] += self.noise_std * z;
            }
        }
        Ok(truth)
    }
}

/// Per-window detection scores for one channel, any formulation, over raw
/// data. The window geometry is shared across formulations so their scores
/// are comparable sample-for-sample:
/// - masked: the channel is hidden and reconstructed; score = mean absolute
///   reconstruction error over the window;
/// - auto-regressive: the window's first `lookback` rows predict its last
///   row; score = that row's absolute prediction error on the channel;
/// - auto-associative: every row is passed through the bottleneck; score =
///   mean absolute reconstruction error on the channel over the window.
pub fn channel_scores(
    checkpoint: &CheckpointData,
    series: &TimeSeriesDataset,
    channel: &str,
    lookback: usize,
    stride: usize,
    mode: ExecMode,
) -> Result<Vec<f64>> {
    let col = series
        .channel_index(channel)
        .ok_or_else(|| Error::Usage(format!("unknown channel '{channel}'")))?;
    if series.n_channels() != checkpoint.model.n_channels() {
        return Err(Error::Dimension(format!(
            "series has {} channels, the checkpoint was trained on {}",
            series.n_channels(),
            checkpoint.model.n_channels()
        )));
    }
    let formulation = checkpoint.model.formulation();
    if formulation != Formulation::AutoAssociative && checkpoint.model.lookback() != lookback {
        return Err(Error::Usage(format!(
            "scoring over {lookback}-step windows but the model was trained with lookback {}",
            checkpoint.model.lookback()
        )));
    }
    let count = crate::data::window_count(series.n_samples(), lookback, stride)?;
    let scaled = checkpoint.scaler.transform(&series.samples().view())?;

    let scores: Vec<Result<f64>> = match formulation {
        Formulation::Masked => {
            let engine = FdiaEngine::new(checkpoint, ExecMode::Sequential)?;
            let position = checkpoint.maskable.position_of(col).ok_or_else(|| {
                Error::Usage(format!("channel '{channel}' is not in the protected set"))
            })?;
            map_indexed(mode, count, |w| {
                let start = w * stride;
                let window = series.samples().slice(s![start..start + lookback + 1, ..]);
                engine.score_window(&window, position)
            })
        }
        Formulation::AutoRegressive => map_indexed(mode, count, |w| {
            let start = w * stride;
            let history = scaled.slice(s![start..start + lookback, ..]);
            let pred = checkpoint.model.predict_next(&history)?;
            Ok((pred[[0, col]] - scaled[[start + lookback, col]]).abs())
        }),
        Formulation::AutoAssociative => map_indexed(mode, count, |w| {
            let start = w * stride;
            let rows = scaled.slice(s![start..start + lookback + 1, ..]);
            let recon = checkpoint.model.autoencode(&rows)?;
            let mae = (0..rows.nrows())
                .map(|t| (recon[[t, col]] - rows[[t, col]]).abs())
                .sum::<f64>()
                / rows.nrows() as f64;
            Ok(mae)
        }),
    };
    scores.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub name: String,
    pub formulation: Formulation,
    pub roc_auc: f64,
    pub auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBenchmark {
    pub channel: String,
    pub n_windows: usize,
    pub n_positive: usize,
    pub rows: Vec<DetectionRow>,
}

/// Scores every model on the same injected single-channel fault: windows
/// overlapping the fault interval are positives, the faulted channel's
/// per-window residual is the score. Models must share the training split
/// and window geometry for the comparison to mean anything.
pub fn detection_benchmark(
    models: &[(String, &CheckpointData)],
    clean: &TimeSeriesDataset,
    scenario: &[FaultSpec],
    stride: usize,
    mode: ExecMode,
) -> Result<DetectionBenchmark> {
    let first = models
        .first()
        .ok_or_else(|| Error::Usage("detection benchmark needs at least one model".into()))?;
    let (faulted, labels) = apply_scenario(clean, scenario, &first.1.raw_stats)?;
    let faulted_channels = labels.faulted_channels();
    let [target_col] = faulted_channels[..] else {
        return Err(Error::Usage(format!(
            "detection benchmark wants a single faulted channel, scenario touches {}",
            faulted_channels.len()
        )));
    };
    let channel = clean.channel_names()[target_col].clone();

    let lookback = models
        .iter()
        .map(|(_, c)| c.model.lookback())
        .max()
        .unwrap();
    let count = crate::data::window_count(clean.n_samples(), lookback, stride)?;
    let window_labels: Vec<bool> = (0..count)
        .map(|w| labels.channel_in_window(target_col, w * stride, lookback + 1))
        .collect();
    let n_positive = window_labels.iter().filter(|&&l| l).count();

    let mut rows = Vec::with_capacity(models.len());
    for (name, checkpoint) in models {
        let scores = channel_scores(checkpoint, &faulted, &channel, lookback, stride, mode)?;
        let samples: Vec<ScoredSample> = scores
            .iter()
            .zip(&window_labels)
            .map(|(&score, &label)| ScoredSample { score, label })
            .collect();
        rows.push(DetectionRow {
            name: name.clone(),
            formulation: checkpoint.model.formulation(),
            roc_auc: roc_auc(&samples)?,
            auprc: auprc(&samples)?,
        });
    }
    Ok(DetectionBenchmark {
        channel,
        n_windows: count,
        n_positive,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMse {
    pub output: usize,
    pub mse_no_fault: f64,
    pub mse_fault_no_fdia: f64,
    pub mse_fault_with_fdia: f64,
    /// Percent MSE increase of the faulted arm over the clean arm.
    pub pct_increase_no_fdia: f64,
    pub pct_increase_with_fdia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccommodationBenchmark {
    pub per_output: Vec<ArmMse>,
}

/// Three-arm downstream experiment with one fixed pipeline and one fixed
/// ground truth: clean data straight through, faulted data straight
/// through, and faulted data with the detector's accommodation applied
/// first. If accommodation works, arm 3 lands near arm 1 while arm 2 blows
/// up.
pub fn accommodation_benchmark(
    checkpoint: &CheckpointData,
    pipeline: &DownstreamPipeline,
    clean: &TimeSeriesDataset,
    scenario: &[FaultSpec],
    stride: usize,
    mode: ExecMode,
) -> Result<AccommodationBenchmark> {
    let truth = pipeline.ground_truth(&clean.samples().view())?;
    let clean_out = pipeline.apply(&clean.samples().view())?;

    let (faulted, _) = apply_scenario(clean, scenario, &checkpoint.raw_stats)?;
    let faulted_out = pipeline.apply(&faulted.samples().view())?;

    let engine = FdiaEngine::new(checkpoint, mode)?;
    let verdict = engine.stream(&faulted, stride)?;
    let accommodated_out = pipeline.apply(&verdict.accommodated.view())?;

    let mse_per_output = |out: &Array2<f64>| -> Vec<f64> {
        (0..out.ncols())
            .map(|j| {
                let mut sum = 0.0;
                for t in 0..out.nrows() {
                    let d = out[[t, j]] - truth[[t, j]];
                    sum += d * d;
                }
                sum / out.nrows() as f64
            })
            .collect()
    };
    let arm1 = mse_per_output(&clean_out);
    let arm2 = mse_per_output(&faulted_out);
    let arm3 = mse_per_output(&accommodated_out);

    let per_output = (0..pipeline.n_outputs())
        .map(|j| ArmMse {
            output: j,
            mse_no_fault: arm1[j],
            mse_fault_no_fdia: arm2[j],
            mse_fault_with_fdia: arm3[j],
            pct_increase_no_fdia: (arm2[j] - arm1[j]) / arm1[j] * 100.0,
            pct_increase_with_fdia: (arm3[j] - arm1[j]) / arm1[j] * 100.0,
        })
        .collect();
    Ok(AccommodationBenchmark { per_output })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean_ms: f64,
    pub p95_ms: f64,
    /// First-pass model evaluations per step — one per protected channel.
    pub passes_per_step: u64,
    pub repetitions: usize,
    pub budget_ms: f64,
    pub within_budget: bool,
}

/// Times full detection steps (all per-channel passes plus thresholding) on
/// a representative window and reports the mean and p95 against the 40 ms
/// real-time budget of a 25 Hz loop.
pub fn latency_benchmark(checkpoint: &CheckpointData, repetitions: usize) -> Result<LatencyReport> {
    if repetitions == 0 {
        return Err(Error::Usage("latency benchmark needs ≥ 1 repetition".into()));
    }
    // Thresholds are irrelevant to the timed path as long as nothing flags;
    // an uncalibrated checkpoint gets pass-never placeholders.
    let mut engine = FdiaEngine::new(checkpoint, ExecMode::Sequential)?;
    if checkpoint.thresholds.is_none() {
        engine = engine.with_thresholds(vec![f64::MAX; checkpoint.maskable.len()])?;
    }
    let rows = checkpoint.model.lookback() + 1;
    let n = checkpoint.model.n_channels();
    let window = Array2::from_shape_fn((rows, n), |(t, c)| {
        checkpoint.raw_stats[c].mean + (t as f64 - rows as f64 / 2.0) * 1e-3
    });

    engine.fdia_step(&window.view())?; // warm-up, outside the timings
    engine.reset_forward_pass_count();
    let mut timings_ms = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let begin = std::time::Instant::now();
        let result = engine.fdia_step(&window.view())?;
        timings_ms.push(begin.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(&result);
    }
    let passes_per_step = engine.forward_pass_count() / repetitions as u64;
    let mean_ms = timings_ms.iter().sum::<f64>() / repetitions as f64;
    let mut sorted = timings_ms;
    sorted.sort_by(f64::total_cmp);
    let p95_ms = sorted[((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1];
    let budget_ms = 40.0;
    Ok(LatencyReport {
        mean_ms,
        p95_ms,
        passes_per_step,
        repetitions,
        budget_ms,
        within_budget: mean_ms < budget_ms,
    })
}

/// Summary envelope written next to the curve CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    /// Which benchmark produced this ("detection", "accommodation", ...).
    pub kind: String,
    pub seed: u64,
    /// Verbatim copy of the run configuration.
    pub config_echo: serde_json::Value,
    /// SHA-256 of the checkpoint file the run used, if any.
    pub checkpoint_sha256: Option<String>,
    pub metrics: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Writes `summary.json` plus, when scored samples are given, plot-ready
/// `roc_points.csv`, `pr_points.csv`, and `residuals.csv`. Returns the paths
/// written.
pub fn write_report(
    out_dir: &Path,
    summary: &EvalSummary,
    samples: Option<&[ScoredSample]>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let summary_path = out_dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(&summary_path, text)?;
    written.push(summary_path);

    if let Some(samples) = samples {
        let mut roc = String::from("fpr,tpr\n");
        for (fpr, tpr) in roc_points(samples)? {
            roc.push_str(&format!("{fpr},{tpr}\n"));
        }
        let roc_path = out_dir.join("roc_points.csv");
        std::fs::write(&roc_path, roc)?;
        written.push(roc_path);

        let mut pr = String::from("recall,precision\n");
        for (recall, precision) in pr_points(samples)? {
            pr.push_str(&format!("{recall},{precision}\n"));
        }
        let pr_path = out_dir.join("pr_points.csv");
        std::fs::write(&pr_path, pr)?;
        written.push(pr_path);

        let mut res = String::from("index,score,label\n");
        for (i, s) in samples.iter().enumerate() {
            res.push_str(&format!("{i},{},{}\n", s.score, u8::from(s.label)));
        }
        let res_path = out_dir.join("residuals.csv");
        std::fs::write(&res_path, res)?;
        written.push(res_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_plant, Scaler, SynthConfig};
    use crate::faults::{FaultKind, MagnitudeUnit};
    use crate::masking::{FillPolicy, MaskableChannelSet};
    use crate::model::{SequenceModel, ThresholdInfo};
    use rand::seq::SliceRandom;

    fn s(pairs: &[(f64, bool)]) -> Vec<ScoredSample> {
        pairs
            .iter()
            .map(|&(score, label)| ScoredSample { score, label })
            .collect()
    }

    /// O(P·N) pairwise oracle with half-credit ties.
    fn roc_auc_pairwise(samples: &[ScoredSample]) -> f64 {
        let pos: Vec<f64> = samples.iter().filter(|x| x.label).map(|x| x.score).collect();
        let neg: Vec<f64> = samples.iter().filter(|x| !x.label).map(|x| x.score).collect();
        let mut total = 0.0;
        for &p in &pos {
            for &n in &neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    /// Brute-force AUPRC: recount TP/FP from scratch at every distinct
    /// threshold instead of sweeping cumulatively.
    fn auprc_bruteforce(samples: &[ScoredSample]) -> f64 {
        let mut thresholds: Vec<f64> = samples.iter().map(|x| x.score).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        thresholds.reverse();
        let pos = samples.iter().filter(|x| x.label).count() as f64;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &th in &thresholds {
            let tp = samples.iter().filter(|x| x.label && x.score >= th).count() as f64;
            let fp = samples.iter().filter(|x| !x.label && x.score >= th).count() as f64;
            let recall = tp / pos;
            let precision = tp / (tp + fp);
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn roc_auc_handles_the_textbook_cases() {
        let perfect = s(&[(0.1, false), (0.35, false), (0.4, true), (0.8, true)]);
        assert_eq!(roc_auc(&perfect).unwrap(), 1.0);

        let ties = s(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false)]);
        assert_eq!(roc_auc(&ties).unwrap(), 0.5);

        // One negative outscores everything: 2 of 4 pairs win.
        let mixed = s(&[(0.9, false), (0.4, true), (0.35, false), (0.8, true)]);
        let auc = roc_auc(&mixed).unwrap();
        assert!((auc - roc_auc_pairwise(&mixed)).abs() < 1e-12);
        assert!((auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn roc_auc_matches_the_pairwise_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for n in 2..=12 {
            for _ in 0..100 {
                let samples: Vec<ScoredSample> = (0..n)
                    .map(|_| ScoredSample {
                        // Coarse grid forces plenty of exact ties.
                        score: (rng.random_range(0..5) as f64) / 4.0,
                        label: rng.random::<bool>(),
                    })
                    .collect();
                let pos = samples.iter().filter(|x| x.label).count();
                if pos == 0 || pos == n {
                    continue;
                }
                let fast = roc_auc(&samples).unwrap();
                let slow = roc_auc_pairwise(&samples);
                assert!((fast - slow).abs() < 1e-12, "{samples:?}");
            }
        }
    }

    #[test]
    fn auprc_matches_the_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(987);
        for n in 1..=12 {
            for _ in 0..100 {
                let samples: Vec<ScoredSample> = (0..n)
                    .map(|_| ScoredSample {
                        score: (rng.random_range(0..4) as f64) / 3.0,
                        label: rng.random::<bool>(),
                    })
                    .collect();
                if samples.iter().filter(|x| x.label).count() == 0 {
                    continue;
                }
                let fast = auprc(&samples).unwrap();
                let slow = auprc_bruteforce(&samples);
                assert!((fast - slow).abs() < 1e-12, "{samples:?}");
            }
        }
    }

    #[test]
    fn auprc_extremes_behave() {
        let perfect = s(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(auprc(&perfect).unwrap(), 1.0);

        // Random scores → AUPRC near the class prior.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prior = 0.3;
        let samples: Vec<ScoredSample> = (0..20000)
            .map(|_| ScoredSample {
                score: rng.random::<f64>(),
                label: rng.random::<f64>() < prior,
            })
            .collect();
        let a = auprc(&samples).unwrap();
        assert!((a - prior).abs() < 0.05, "random AUPRC {a}");
    }

    #[test]
    fn degenerate_inputs_are_metric_errors() {
        let all_pos = s(&[(0.1, true), (0.2, true)]);
        assert!(matches!(roc_auc(&all_pos), Err(Error::Metric(_))));
        let all_neg = s(&[(0.1, false), (0.2, false)]);
        assert!(matches!(roc_auc(&all_neg), Err(Error::Metric(_))));
        assert!(matches!(auprc(&all_neg), Err(Error::Metric(_))));
        let nan = s(&[(f64::NAN, true), (0.2, false)]);
        assert!(roc_auc(&nan).is_err());
    }

    #[test]
    fn metrics_are_invariant_to_monotone_transforms_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut samples: Vec<ScoredSample> = (0..200)
            .map(|i| ScoredSample {
                score: rng.random::<f64>() * 3.0,
                label: i % 3 == 0,
            })
            .collect();
        let auc = roc_auc(&samples).unwrap();
        let pr = auprc(&samples).unwrap();

        let transformed: Vec<ScoredSample> = samples
            .iter()
            .map(|x| ScoredSample {
                score: x.score.exp(), // strictly monotone
                label: x.label,
            })
            .collect();
        assert_eq!(roc_auc(&transformed).unwrap(), auc);

        samples.shuffle(&mut rng);
        assert_eq!(roc_auc(&samples).unwrap(), auc);
        assert_eq!(auprc(&samples).unwrap(), pr);
    }

    #[test]
    fn curves_have_the_promised_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<ScoredSample> = (0..50)
            .map(|i| ScoredSample {
                score: rng.random::<f64>(),
                label: i < 20,
            })
            .collect();
        let roc = roc_points(&samples).unwrap();
        assert_eq!(roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.last(), Some(&(1.0, 1.0)));
        let pr = pr_points(&samples).unwrap();
        for pair in pr.windows(2) {
            assert!(pair[1].0 >= pair[0].0, "recall must not decrease");
        }
    }

    fn plant(n: usize, length: usize, seed: u64) -> TimeSeriesDataset {
        synthesize_plant(&SynthConfig {
            n_channels: n,
            length,
            seed,
            coupling_strength: 1.0,
            noise_std: 0.02,
            shared_phase_jitter: 0.0,
            n_latents: None,
            target_std: 1.0,
            sample_rate_hz: 25.0,
        })
        .unwrap()
    }

    /// A structurally valid (untrained) masked checkpoint over a dataset.
    fn untrained_checkpoint(data: &TimeSeriesDataset, lookback: usize) -> CheckpointData {
        let n = data.n_channels();
        let maskable = MaskableChannelSet::all(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model =
            SequenceModel::build_masked(n, maskable.len(), lookback, &[16], &mut rng).unwrap();
        let scaler = Scaler::fit(data, 0..data.n_samples()).unwrap();
        let raw_stats = data.compute_stats(0..data.n_samples()).unwrap();
        let scaled = scaler.transform_dataset(data).unwrap();
        let scaled_stats = scaled.compute_stats(0..data.n_samples()).unwrap();
        CheckpointData {
            model,
            scaler,
            maskable,
            channel_names: data.channel_names().to_vec(),
            raw_stats,
            scaled_stats,
            thresholds: None,
            train_config: None,
            seed: 7,
            fill_policy: FillPolicy::ChannelMean,
        }
    }

    #[test]
    fn pipeline_is_seeded_full_rank_and_linear() {
        let p1 = DownstreamPipeline::new_seeded(8, 3, 0.2, 5).unwrap();
        let p2 = DownstreamPipeline::new_seeded(8, 3, 0.2, 5).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.row_rank(), 3);
        assert!(DownstreamPipeline::new_seeded(4, 5, 0.2, 5).is_err());

        // Linearity: f(a + b) − f(b) = f(a) − f(0).
        let a = Array2::from_shape_fn((4, 8), |(t, c)| (t * 8 + c) as f64 * 0.1);
        let b = Array2::from_shape_fn((4, 8), |(t, c)| ((t + c) % 3) as f64);
        let zero = Array2::zeros((4, 8));
        let fa = p1.apply(&a.view()).unwrap();
        let fb = p1.apply(&b.view()).unwrap();
        let fab = p1.apply(&(&a + &b).view()).unwrap();
        let f0 = p1.apply(&zero.view()).unwrap();
        let lhs = &fab - &fb;
        let rhs = &fa - &f0;
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert!((x - y).abs() < 1e-9);
        }

        // Ground truth is deterministic and differs from the noiseless map.
        let t1 = p1.ground_truth(&a.view()).unwrap();
        let t2 = p1.ground_truth(&a.view()).unwrap();
        assert_eq!(t1, t2);
        assert!(t1 != fa);
    }

    #[test]
    fn zero_magnitude_fault_leaves_all_three_arms_equal() {
        let data = plant(6, 1200, 3);
        let mut checkpoint = untrained_checkpoint(&data, 3);
        // Pass-never thresholds: nothing flags, so accommodation is a no-op
        // and the only difference between arms could come from the fault.
        checkpoint.thresholds = Some(ThresholdInfo {
            per_channel: vec![f64::MAX; 6],
            method: crate::fdia::ThresholdMethod::MeanPlusKStd { k: 4.0 },
            calibration_windows: 100,
            residual_mean: vec![0.0; 6],
            residual_std: vec![0.0; 6],
        });
        let pipeline = DownstreamPipeline::new_seeded(6, 2, 0.3, 11).unwrap();
        let scenario = vec![FaultSpec {
            kind: FaultKind::Bias,
            targets: vec!["ch02".into()],
            magnitude: 0.0,
            unit: MagnitudeUnit::Std,
            start_index: 300,
            end_index: 600,
            seed: 0,
        }];
        let bench = accommodation_benchmark(
            &checkpoint,
            &pipeline,
            &data,
            &scenario,
            1,
            ExecMode::default(),
        )
        .unwrap();
        assert_eq!(bench.per_output.len(), 2);
        for arm in &bench.per_output {
            assert!((arm.mse_fault_no_fdia - arm.mse_no_fault).abs() < 1e-9);
            assert!((arm.mse_fault_with_fdia - arm.mse_no_fault).abs() < 1e-9);
            assert!(arm.mse_no_fault > 0.0, "ground-truth noise keeps arm 1 nonzero");
        }
    }

    #[test]
    fn clean_arm_ignores_the_scenario_entirely() {
        let data = plant(6, 1200, 3);
        let mut checkpoint = untrained_checkpoint(&data, 3);
        checkpoint.thresholds = Some(ThresholdInfo {
            per_channel: vec![f64::MAX; 6],
            method: crate::fdia::ThresholdMethod::MeanPlusKStd { k: 4.0 },
            calibration_windows: 100,
            residual_mean: vec![0.0; 6],
            residual_std: vec![0.0; 6],
        });
        let pipeline = DownstreamPipeline::new_seeded(6, 2, 0.3, 11).unwrap();
        let scenario = |mag: f64| {
            vec![FaultSpec {
                kind: FaultKind::Bias,
                targets: vec!["ch02".into()],
                magnitude: mag,
                unit: MagnitudeUnit::Std,
                start_index: 300,
                end_index: 600,
                seed: 0,
            }]
        };
        let small = accommodation_benchmark(
            &checkpoint,
            &pipeline,
            &data,
            &scenario(0.5),
            1,
            ExecMode::default(),
        )
        .unwrap();
        let large = accommodation_benchmark(
            &checkpoint,
            &pipeline,
            &data,
            &scenario(3.0),
            1,
            ExecMode::default(),
        )
        .unwrap();
        for (a, b) in small.per_output.iter().zip(&large.per_output) {
            assert_eq!(a.mse_no_fault.to_bits(), b.mse_no_fault.to_bits());
            assert!(b.mse_fault_no_fdia > a.mse_fault_no_fdia);
        }
    }

    #[test]
    fn detection_benchmark_checks_its_preconditions() {
        let data = plant(6, 1200, 3);
        let checkpoint = untrained_checkpoint(&data, 3);
        let models = vec![("masked".to_string(), &checkpoint)];
        let bad = vec![FaultSpec {
            kind: FaultKind::Bias,
            targets: vec!["missing".into()],
            magnitude: 1.0,
            unit: MagnitudeUnit::Std,
            start_index: 100,
            end_index: 300,
            seed: 0,
        }];
        assert!(detection_benchmark(&models, &data, &bad, 1, ExecMode::default())
            .unwrap_err()
            .is_usage());

        let two_channels = vec![FaultSpec {
            kind: FaultKind::MultiBias,
            targets: vec!["ch01".into(), "ch02".into()],
            magnitude: 1.0,
            unit: MagnitudeUnit::Std,
            start_index: 100,
            end_index: 300,
            seed: 0,
        }];
        assert!(
            detection_benchmark(&models, &data, &two_channels, 1, ExecMode::default())
                .unwrap_err()
                .is_usage()
        );

        let good = vec![FaultSpec {
            kind: FaultKind::Bias,
            targets: vec!["ch02".into()],
            magnitude: 2.0,
            unit: MagnitudeUnit::Std,
            start_index: 400,
            end_index: 800,
            seed: 0,
        }];
        let bench = detection_benchmark(&models, &data, &good, 2, ExecMode::default()).unwrap();
        assert_eq!(bench.channel, "ch02");
        assert_eq!(bench.rows.len(), 1);
        assert!(bench.n_positive > 0 && bench.n_positive < bench.n_windows);
        let row = &bench.rows[0];
        assert!((0.0..=1.0).contains(&row.roc_auc));
        assert!((0.0..=1.0).contains(&row.auprc));
    }

    #[test]
    fn channel_scores_align_across_modes_and_reject_mismatches() {
        let data = plant(6, 1000, 8);
        let checkpoint = untrained_checkpoint(&data, 3);
        let seq = channel_scores(&checkpoint, &data, "ch01", 3, 1, ExecMode::Sequential).unwrap();
        let par = channel_scores(&checkpoint, &data, "ch01", 3, 1, ExecMode::default()).unwrap();
        assert_eq!(seq.len(), crate::data::window_count(1000, 3, 1).unwrap());
        assert!(seq
            .iter()
            .zip(&par)
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        assert!(channel_scores(&checkpoint, &data, "nope", 3, 1, ExecMode::Sequential)
            .unwrap_err()
            .is_usage());
        assert!(channel_scores(&checkpoint, &data, "ch01", 5, 1, ExecMode::Sequential)
            .unwrap_err()
            .is_usage());
    }

    #[test]
    fn latency_report_counts_one_pass_per_protected_channel() {
        let data = plant(6, 1000, 4);
        let checkpoint = untrained_checkpoint(&data, 3);
        let report = latency_benchmark(&checkpoint, 50).unwrap();
        assert_eq!(report.passes_per_step, 6);
        assert_eq!(report.repetitions, 50);
        assert!(report.mean_ms > 0.0);
        assert!(report.p95_ms >= report.mean_ms * 0.1);
        assert!(latency_benchmark(&checkpoint, 0).is_err());
    }

    #[test]
    fn reports_round_trip_and_curves_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples: Vec<ScoredSample> = (0..60)
            .map(|i| ScoredSample {
                score: rng.random::<f64>(),
                label: i % 4 == 0,
            })
            .collect();
        let summary = EvalSummary {
            schema_version: 1,
            kind: "detection".into(),
            seed: 42,
            config_echo: serde_json::json!({"stride": 1, "k": 4.0}),
            checkpoint_sha256: Some(sha256_hex(b"checkpoint bytes")),
            metrics: serde_json::json!({
                "roc_auc": roc_auc(&samples).unwrap(),
                "auprc": auprc(&samples).unwrap(),
            }),
        };
        let dir = tempfile::tempdir().unwrap();
        let written = write_report(dir.path(), &summary, Some(&samples)).unwrap();
        assert_eq!(written.len(), 4);

        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let back: EvalSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, summary);

        let roc = std::fs::read_to_string(dir.path().join("roc_points.csv")).unwrap();
        let lines: Vec<&str> = roc.lines().collect();
        assert_eq!(lines[0], "fpr,tpr");
        assert_eq!(lines[1], "0,0");
        assert_eq!(*lines.last().unwrap(), "1,1");

        let pr = std::fs::read_to_string(dir.path().join("pr_points.csv")).unwrap();
        let recalls: Vec<f64> = pr
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(recalls.windows(2).all(|w| w[1] >= w[0]));

        let res = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
        assert_eq!(res.lines().count(), 61);
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
