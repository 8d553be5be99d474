//! Deterministic fault injectors for benchmarking: bias, drift, additive
//! noise, and simultaneous multi-sensor bias.
//!
//! Magnitudes are expressed in units of each target channel's training-time
//! standard deviation by default, so "a 1σ bias" means the same thing across
//! channels with wildly different physical ranges; an absolute mode exists
//! for faults quoted in engineering units (e.g. a 0.2 bar offset on a
//! pressure sensor). Every injector returns the faulted series together with
//! a ground-truth label mask that marks exactly the cells inside the fault
//! interval, and leaves every other cell bit-identical to the input.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, TimeSeriesDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Constant offset over the interval.
    Bias,
    /// Offset ramping linearly from 0 to the full magnitude.
    Drift,
    /// Additive white Gaussian noise, seeded.
    Noise,
    /// Constant offset on two or more channels at once.
    MultiBias,
}

/// How [`FaultSpec::magnitude`] is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeUnit {
    /// Multiples of the target channel's training standard deviation.
    #[default]
    Std,
    /// Raw engineering units, added as-is.
    Absolute,
}

/// One injected fault. Scenario files carry a list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Target channel names.
    pub targets: Vec<String>,
    pub magnitude: f64,
    #[serde(default)]
    pub unit: MagnitudeUnit,
    /// Faulted sample range, half-open `[start_index, end_index)`.
    pub start_index: usize,
    pub end_index: usize,
    /// Noise stream seed (ignored by the other kinds).
    #[serde(default)]
    pub seed: u64,
}

impl FaultSpec {
    fn validate(&self, series: &TimeSeriesDataset) -> Result<Vec<usize>> {
        if self.targets.is_empty() {
            return Err(Error::Usage("fault spec has no target channels".into()));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Usage(format!(
                "fault magnitude {} is not finite",
                self.magnitude
            )));
        }
        if self.start_index >= self.end_index || self.end_index > series.n_samples() {
            return Err(Error::Usage(format!(
                "fault interval [{}, {}) does not fit a series of {} samples",
                self.start_index,
                self.end_index,
                series.n_samples()
            )));
        }
        let mut cols = Vec::with_capacity(self.targets.len());
        for name in &self.targets {
            let col = series.channel_index(name).ok_or_else(|| {
                Error::Usage(format!("fault targets unknown channel '{name}'"))
            })?;
            if cols.contains(&col) {
                return Err(Error::Usage(format!(
                    "channel '{name}' listed twice in one fault spec"
                )));
            }
            cols.push(col);
        }
        Ok(cols)
    }

    /// The additive step for one target, before any time profile.
    fn offset_for(&self, col: usize, stats: &[ChannelStats]) -> f64 {
        match self.unit {
            MagnitudeUnit::Std => self.magnitude * stats[col].std,
            MagnitudeUnit::Absolute => self.magnitude,
        }
    }
}

/// One labeled `(channel, [start, end))` region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub channel: usize,
    pub start: usize,
    pub end: usize,
}

/// Ground truth for injected faults: which cells were touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultLabels {
    pub n_samples: usize,
    pub n_channels: usize,
    pub intervals: Vec<LabeledInterval>,
}

impl FaultLabels {
    fn clean(series: &TimeSeriesDataset) -> Self {
        Self {
            n_samples: series.n_samples(),
            n_channels: series.n_channels(),
            intervals: Vec::new(),
        }
    }

    pub fn is_faulted(&self, t: usize, channel: usize) -> bool {
        self.intervals
            .iter()
            .any(|iv| iv.channel == channel && (iv.start..iv.end).contains(&t))
    }

    /// Any faulted cell for `channel` inside `[start, start + len)`?
    pub fn channel_in_window(&self, channel: usize, start: usize, len: usize) -> bool {
        self.intervals
            .iter()
            .any(|iv| iv.channel == channel && iv.start < start + len && start < iv.end)
    }

    /// Any faulted cell at all inside `[start, start + len)`?
    pub fn any_in_window(&self, start: usize, len: usize) -> bool {
        self.intervals
            .iter()
            .any(|iv| iv.start < start + len && start < iv.end)
    }

    pub fn faulted_channels(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.intervals.iter().map(|iv| iv.channel).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn expect_kind(spec: &FaultSpec, kind: FaultKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Usage(format!(
            "injector for {kind:?} called with a {:?} spec",
            spec.kind
        )));
    }
    Ok(())
}

/// `stats` supply the per-channel std for std-unit magnitudes; pass the
/// training-portion stats (a trained checkpoint carries them) so fault sizes
/// are not estimated from the very data being corrupted.
pub fn inject_bias(
    series: &TimeSeriesDataset,
    spec: &FaultSpec,
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    expect_kind(spec, FaultKind::Bias)?;
    apply_constant_offsets(series, spec, stats)
}

/// Same shape as [`inject_bias`] but demands ≥ 2 targets: the point of the
/// scenario is several sensors failing together.
pub fn inject_multi_bias(
    series: &TimeSeriesDataset,
    spec: &FaultSpec,
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    expect_kind(spec, FaultKind::MultiBias)?;
    if spec.targets.len() < 2 {
        return Err(Error::Usage(format!(
            "multi_bias needs at least 2 targets, got {}",
            spec.targets.len()
        )));
    }
    apply_constant_offsets(series, spec, stats)
}

fn apply_constant_offsets(
    series: &TimeSeriesDataset,
    spec: &FaultSpec,
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    let cols = spec.validate(series)?;
    check_stats(series, stats)?;
    let mut samples = series.samples().clone();
    let mut labels = FaultLabels::clean(series);
    for &col in &cols {
        let offset = spec.offset_for(col, stats);
        add_to_segment(&mut samples, col, spec.start_index, spec.end_index, |_| offset);
        labels.intervals.push(LabeledInterval {
            channel: col,
            start: spec.start_index,
            end: spec.end_index,
        });
    }
    Ok((rebuild(series, samples), labels))
}

/// Offset ramps linearly from exactly 0 at `start_index` to exactly the full
/// magnitude at `end_index − 1`.
pub fn inject_drift(
    series: &TimeSeriesDataset,
    spec: &FaultSpec,
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    expect_kind(spec, FaultKind::Drift)?;
    let cols = spec.validate(series)?;
    check_stats(series, stats)?;
    if spec.end_index - spec.start_index < 2 {
        return Err(Error::Usage(
            "a drift needs an interval of at least 2 samples to ramp over".into(),
        ));
    }
    let denom = (spec.end_index - 1 - spec.start_index) as f64;
    let mut samples = series.samples().clone();
    let mut labels = FaultLabels::clean(series);
    for &col in &cols {
        let full = spec.offset_for(col, stats);
        add_to_segment(&mut samples, col, spec.start_index, spec.end_index, |t| {
            (t - spec.start_index) as f64 / denom * full
        });
        labels.intervals.push(LabeledInterval {
            channel: col,
            start: spec.start_index,
            end: spec.end_index,
        });
    }
    Ok((rebuild(series, samples), labels))
}

/// Adds seeded i.i.d. Gaussian noise with std `magnitude·std_i` over the
/// interval. The same spec always produces the same faulted series.
pub fn inject_noise(
    series: &TimeSeriesDataset,
    spec: &FaultSpec,
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    expect_kind(spec, FaultKind::Noise)?;
    let cols = spec.validate(series)?;
    check_stats(series, stats)?;
    let mut samples = series.samples().clone();
    let mut labels = FaultLabels::clean(series);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for &col in &cols {
        let noise_std = spec.offset_for(col, stats);
        if noise_std != 0.0 {
            for t in spec.start_index..spec.end_index {
                let z: f64 = StandardNormal.sample(&mut rng);
                samples[[t, col]] += noise_std * z;
            }
        }
        labels.intervals.push(LabeledInterval {
            channel: col,
            start: spec.start_index,
            end: spec.end_index,
        });
    }
    Ok((rebuild(series, samples), labels))
}

/// Dispatch on `spec.kind`.
pub fn inject_fault(
    series: &TimeSeriesDataset,
    spec: &FaultSpec,
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    match spec.kind {
        FaultKind::Bias => inject_bias(series, spec, stats),
        FaultKind::Drift => inject_drift(series, spec, stats),
        FaultKind::Noise => inject_noise(series, spec, stats),
        FaultKind::MultiBias => inject_multi_bias(series, spec, stats),
    }
}

/// Applies several faults to one series. Each channel may be targeted by at
/// most one spec — two concurrent faults on one sensor make the ground truth
/// ambiguous, so that is rejected outright.
pub fn apply_scenario(
    series: &TimeSeriesDataset,
    specs: &[FaultSpec],
    stats: &[ChannelStats],
) -> Result<(TimeSeriesDataset, FaultLabels)> {
    if specs.is_empty() {
        return Err(Error::Usage("scenario lists no faults".into()));
    }
    let mut seen: Vec<&str> = Vec::new();
    for spec in specs {
        for name in &spec.targets {
            if seen.contains(&name.as_str()) {
                return Err(Error::Usage(format!(
                    "channel '{name}' is targeted by more than one fault in this scenario"
                )));
            }
            seen.push(name);
        }
    }
    let mut current = series.clone();
    let mut labels = FaultLabels::clean(series);
    for spec in specs {
        let (next, more) = inject_fault(&current, spec, stats)?;
        current = next;
        labels.intervals.extend(more.intervals);
    }
    Ok((current, labels))
}

fn check_stats(series: &TimeSeriesDataset, stats: &[ChannelStats]) -> Result<()> {
    if stats.len() != series.n_channels() {
        return Err(Error::Dimension(format!(
            "{} channel stats for a series of {} channels",
            stats.len(),
            series.n_channels()
        )));
    }
    Ok(())
}

fn add_to_segment(
    samples: &mut Array2<f64>,
    col: usize,
    start: usize,
    end: usize,
    offset_at: impl Fn(usize) -> f64,
) {
    for t in start..end {
        let delta = offset_at(t);
        // Adding literal 0.0 could flip the sign bit of a −0.0 sample; a
        // zero-magnitude fault must leave the series bit-identical.
        if delta != 0.0 {
            samples[[t, col]] += delta;
        }
    }
}

fn rebuild(series: &TimeSeriesDataset, samples: Array2<f64>) -> TimeSeriesDataset {
    TimeSeriesDataset::new(
        series.channel_names().to_vec(),
        samples,
        series.sample_rate_hz(),
    )
    .expect("faulted series keeps the valid shape of its source")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_plant, Scaler, SynthConfig};

    fn plant(length: usize) -> TimeSeriesDataset {
        synthesize_plant(&SynthConfig {
            n_channels: 6,
            length,
            seed: 7,
            coupling_strength: 0.8,
            noise_std: 0.1,
            shared_phase_jitter: 0.0,
            n_latents: None,
            target_std: 1.5,
            sample_rate_hz: 25.0,
        })
        .unwrap()
    }

    fn plant_stats(series: &TimeSeriesDataset) -> Vec<ChannelStats> {
        series.compute_stats(0..series.n_samples()).unwrap()
    }

    fn bias_spec(targets: &[&str], magnitude: f64, start: usize, end: usize) -> FaultSpec {
        FaultSpec {
            kind: FaultKind::Bias,
            targets: targets.iter().map(|s| s.to_string()).collect(),
            magnitude,
            unit: MagnitudeUnit::Std,
            start_index: start,
            end_index: end,
            seed: 0,
        }
    }

    fn segment_mean(series: &TimeSeriesDataset, col: usize, start: usize, end: usize) -> f64 {
        let seg = series.samples().column(col);
        seg.iter().skip(start).take(end - start).sum::<f64>() / (end - start) as f64
    }

    #[test]
    fn zero_magnitude_bias_is_unchanged_but_labeled() {
        let series = plant(1000);
        let stats = plant_stats(&series);
        let spec = bias_spec(&["ch02"], 0.0, 100, 200);
        let (faulted, labels) = inject_bias(&series, &spec, &stats).unwrap();
        assert!(faulted
            .samples()
            .iter()
            .zip(series.samples().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(labels.is_faulted(100, 2) && labels.is_faulted(199, 2));
        assert!(!labels.is_faulted(99, 2) && !labels.is_faulted(200, 2));
        assert!(!labels.is_faulted(150, 1));
    }

    #[test]
    fn bias_shifts_the_segment_mean_by_magnitude_std() {
        let series = plant(2000);
        let stats = plant_stats(&series);
        let spec = bias_spec(&["ch03"], 1.0, 400, 900);
        let (faulted, _) = inject_bias(&series, &spec, &stats).unwrap();
        let shift = segment_mean(&faulted, 3, 400, 900) - segment_mean(&series, 3, 400, 900);
        assert!(
            (shift - stats[3].std).abs() < 1e-9,
            "shift {shift} vs std {}",
            stats[3].std
        );
    }

    #[test]
    fn absolute_bias_adds_raw_units() {
        // A pressure sensor reading in bar: +0.2 bar regardless of its std,
        // pushing readings near the top of the calibrated range past it.
        let names = vec!["P1_PIT01".to_string(), "other".to_string()];
        let n = 400;
        let samples = Array2::from_shape_fn((n, 2), |(t, c)| {
            let u = t as f64 / (n - 1) as f64;
            if c == 0 {
                0.5678 + u * (2.4332 - 0.5678)
            } else {
                u
            }
        });
        let series = TimeSeriesDataset::new(names, samples, 1.0).unwrap();
        let stats = plant_stats(&series);
        let spec = FaultSpec {
            unit: MagnitudeUnit::Absolute,
            ..bias_spec(&["P1_PIT01"], 0.2, 300, 400)
        };
        let (faulted, _) = inject_bias(&series, &spec, &stats).unwrap();
        for t in 300..400 {
            let expect = series.samples()[[t, 0]] + 0.2;
            assert_eq!(faulted.samples()[[t, 0]].to_bits(), expect.to_bits());
        }
        assert!(faulted.samples()[[399, 0]] > 2.4332);
    }

    #[test]
    fn cells_outside_the_fault_are_bit_exact() {
        let series = plant(1000);
        let stats = plant_stats(&series);
        let spec = bias_spec(&["ch01"], 2.5, 250, 750);
        let (faulted, labels) = inject_bias(&series, &spec, &stats).unwrap();
        for t in 0..1000 {
            for c in 0..6 {
                let same = faulted.samples()[[t, c]].to_bits() == series.samples()[[t, c]].to_bits();
                assert_eq!(same, !labels.is_faulted(t, c), "cell ({t}, {c})");
            }
        }
    }

    #[test]
    fn drift_hits_exact_endpoints_and_half_at_midpoint() {
        let series = plant(1000);
        let stats = plant_stats(&series);
        let spec = FaultSpec {
            kind: FaultKind::Drift,
            ..bias_spec(&["ch04"], 2.0, 100, 201) // odd length: midpoint lands on a sample
        };
        let (faulted, _) = inject_drift(&series, &spec, &stats).unwrap();
        let full = 2.0 * stats[4].std;
        assert_eq!(
            faulted.samples()[[100, 4]].to_bits(),
            series.samples()[[100, 4]].to_bits(),
            "ramp starts at exactly zero offset"
        );
        let at_end = series.samples()[[200, 4]] + full;
        assert_eq!(faulted.samples()[[200, 4]].to_bits(), at_end.to_bits());
        let mid = faulted.samples()[[150, 4]] - series.samples()[[150, 4]];
        assert!((mid - full / 2.0).abs() < 1e-9, "midpoint offset {mid}");
        assert_eq!(
            faulted.samples()[[201, 4]].to_bits(),
            series.samples()[[201, 4]].to_bits(),
            "interval is half-open"
        );
    }

    #[test]
    fn drift_needs_room_to_ramp() {
        let series = plant(1000);
        let stats = plant_stats(&series);
        let spec = FaultSpec {
            kind: FaultKind::Drift,
            ..bias_spec(&["ch00"], 1.0, 10, 11)
        };
        let err = inject_drift(&series, &spec, &stats).unwrap_err();
        assert!(err.is_usage(), "{err}");
    }

    #[test]
    fn noise_is_seeded_and_matches_its_target_std() {
        let series = plant(12000);
        let stats = plant_stats(&series);
        let spec = FaultSpec {
            kind: FaultKind::Noise,
            seed: 99,
            ..bias_spec(&["ch02"], 2.0, 500, 11500)
        };
        let (a, _) = inject_noise(&series, &spec, &stats).unwrap();
        let (b, _) = inject_noise(&series, &spec, &stats).unwrap();
        assert!(a
            .samples()
            .iter()
            .zip(b.samples().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));

        let added: Vec<f64> = (500..11500)
            .map(|t| a.samples()[[t, 2]] - series.samples()[[t, 2]])
            .collect();
        let n = added.len() as f64;
        let mean = added.iter().sum::<f64>() / n;
        let std = (added.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        let target = 2.0 * stats[2].std;
        assert!(
            (std - target).abs() / target < 0.05,
            "injected std {std} vs target {target}"
        );

        let different = FaultSpec { seed: 100, ..spec };
        let (c, _) = inject_noise(&series, &different, &stats).unwrap();
        assert!(c.samples()[[500, 2]] != a.samples()[[500, 2]]);
    }

    #[test]
    fn zero_magnitude_noise_is_unchanged() {
        let series = plant(1000);
        let stats = plant_stats(&series);
        let spec = FaultSpec {
            kind: FaultKind::Noise,
            ..bias_spec(&["ch05"], 0.0, 50, 250)
        };
        let (faulted, labels) = inject_noise(&series, &spec, &stats).unwrap();
        assert!(faulted
            .samples()
            .iter()
            .zip(series.samples().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(labels.is_faulted(100, 5));
    }

    #[test]
    fn multi_bias_shifts_each_target_by_its_own_std() {
        let series = plant(3000);
        let stats = plant_stats(&series);
        let spec = FaultSpec {
            kind: FaultKind::MultiBias,
            ..bias_spec(&["ch01", "ch03"], 1.0, 1000, 2000)
        };
        let (faulted, labels) = inject_multi_bias(&series, &spec, &stats).unwrap();
        for &col in &[1usize, 3] {
            let shift =
                segment_mean(&faulted, col, 1000, 2000) - segment_mean(&series, col, 1000, 2000);
            assert!(
                (shift - stats[col].std).abs() < 1e-9,
                "channel {col}: shift {shift}"
            );
        }
        assert_eq!(labels.faulted_channels(), vec![1, 3]);
        assert!(labels.is_faulted(1500, 1) && labels.is_faulted(1500, 3));
        assert!(!labels.is_faulted(1500, 2));

        let single = FaultSpec {
            kind: FaultKind::MultiBias,
            ..bias_spec(&["ch01"], 1.0, 1000, 2000)
        };
        assert!(inject_multi_bias(&series, &single, &stats)
            .unwrap_err()
            .is_usage());
    }

    #[test]
    fn scenario_rejects_two_faults_on_one_channel() {
        let series = plant(2000);
        let stats = plant_stats(&series);
        let multi = FaultSpec {
            kind: FaultKind::MultiBias,
            ..bias_spec(&["ch01", "ch03"], 1.0, 100, 600)
        };
        let overlap = bias_spec(&["ch01"], 1.0, 1200, 1600);
        let err = apply_scenario(&series, &[multi.clone(), overlap], &stats).unwrap_err();
        assert!(err.is_usage(), "{err}");
        assert!(err.to_string().contains("ch01"), "{err}");

        // Distinct channels are fine, and the labels merge.
        let second = bias_spec(&["ch00"], 1.0, 1200, 1600);
        let (_, labels) = apply_scenario(&series, &[multi, second], &stats).unwrap();
        assert_eq!(labels.faulted_channels(), vec![0, 1, 3]);
        assert!(labels.any_in_window(550, 100));
        assert!(!labels.any_in_window(600, 100));
        assert!(labels.channel_in_window(0, 1100, 101));
        assert!(!labels.channel_in_window(3, 1100, 101));
    }

    #[test]
    fn bad_specs_are_usage_errors() {
        let series = plant(1000);
        let stats = plant_stats(&series);
        for spec in [
            bias_spec(&["nope"], 1.0, 10, 20),
            bias_spec(&["ch00"], 1.0, 20, 20),
            bias_spec(&["ch00"], 1.0, 50, 1001),
            bias_spec(&["ch00"], f64::NAN, 10, 20),
            bias_spec(&[], 1.0, 10, 20),
            bias_spec(&["ch00", "ch00"], 1.0, 10, 20),
        ] {
            let err = inject_bias(&series, &spec, &stats).unwrap_err();
            assert!(err.is_usage(), "{spec:?} → {err}");
        }
        // Wrong kind routed to the wrong injector.
        let err = inject_drift(&series, &bias_spec(&["ch00"], 1.0, 10, 20), &stats).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn bias_and_drift_commute_with_affine_scaling() {
        let series = plant(2400);
        let train_len = 1800;
        let raw_stats = series.compute_stats(0..train_len).unwrap();
        let scaler = Scaler::fit(&series, 0..train_len).unwrap();
        let scaled = scaler.transform_dataset(&series).unwrap();
        let scaled_stats = scaled.compute_stats(0..train_len).unwrap();

        for kind in [FaultKind::Bias, FaultKind::Drift] {
            let spec = FaultSpec {
                kind,
                ..bias_spec(&["ch02"], 1.5, 600, 1200)
            };
            let (raw_faulted, _) = inject_fault(&series, &spec, &raw_stats).unwrap();
            let path_a = scaler
                .transform(&raw_faulted.samples().view())
                .unwrap();
            let (path_b, _) = inject_fault(&scaled, &spec, &scaled_stats).unwrap();
            let max_gap = path_a
                .iter()
                .zip(path_b.samples().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_gap < 1e-9, "{kind:?}: max gap {max_gap}");
        }
    }

    #[test]
    fn specs_round_trip_through_json() {
        let spec = FaultSpec {
            kind: FaultKind::Noise,
            targets: vec!["ch01".into()],
            magnitude: 2.0,
            unit: MagnitudeUnit::Std,
            start_index: 100,
            end_index: 900,
            seed: 42,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"noise\""), "{text}");
        let back: FaultSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);

        // unit and seed default when omitted.
        let minimal: FaultSpec = serde_json::from_str(
            r#"{"kind":"bias","targets":["a"],"magnitude":1.0,"start_index":0,"end_index":10}"#,
        )
        .unwrap();
        assert_eq!(minimal.unit, MagnitudeUnit::Std);
        assert_eq!(minimal.seed, 0);
    }
}
