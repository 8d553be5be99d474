//! Time-series ingestion and preparation: CSV loading, per-channel min-max
//! scaling, chronological splitting, sliding windows, decimation, and a
//! seeded synthetic plant with controllable cross-channel coupling.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use synth::{synthesize_plant, SynthConfig};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel summary statistics over some index range of a dataset.
/// `std` is the population standard deviation (divide by N, not N−1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

/// A multichannel time series in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    channel_names: Vec<String>,
    /// `N×n`: row = sample, column = channel.
    samples: Array2<f64>,
    sample_rate_hz: f64,
}

impl TimeSeriesDataset {
    pub fn new(
        channel_names: Vec<String>,
        samples: Array2<f64>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if channel_names.len() != samples.ncols() {
            return Err(Error::Dimension(format!(
                "{} channel names for {} data columns",
                channel_names.len(),
                samples.ncols()
            )));
        }
        if samples.nrows() < 1 || samples.ncols() < 2 {
            return Err(Error::Ingestion(format!(
                "dataset needs at least 1 sample and 2 channels, got {}×{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(Error::Ingestion(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(((r, c), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Ingestion(format!(
                "non-finite value at sample {r}, channel '{}'",
                channel_names[c]
            )));
        }
        Ok(Self {
            channel_names,
            samples,
            sample_rate_hz,
        })
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }

    /// Summary statistics per channel over `range` (used for scaler fitting
    /// and for residual thresholds; restricting the range avoids leaking
    /// evaluation data into them).
    pub fn compute_stats(&self, range: std::ops::Range<usize>) -> Result<Vec<ChannelStats>> {
        if range.is_empty() || range.end > self.n_samples() {
            return Err(Error::Usage(format!(
                "stats range {range:?} invalid for {} samples",
                self.n_samples()
            )));
        }
        let view = self.samples.slice(ndarray::s![range, ..]);
        Ok(stats_of_columns(&view))
    }

    /// Copies out a new dataset containing only the named channels, in the
    /// order given.
    pub fn select_channels(&self, names: &[String]) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            cols.push(self.channel_index(name).ok_or_else(|| {
                Error::Usage(format!("dataset has no channel named '{name}'"))
            })?);
        }
        let samples = self.samples.select(Axis(1), &cols);
        Self::new(names.to_vec(), samples, self.sample_rate_hz)
    }

    /// Drops the named channels (e.g. label columns that must not reach the
    /// model). Unknown names are a usage error.
    pub fn drop_channels(&self, names: &[String]) -> Result<Self> {
        for name in names {
            if self.channel_index(name).is_none() {
                return Err(Error::Usage(format!(
                    "cannot drop '{name}': no such channel"
                )));
            }
        }
        let keep: Vec<String> = self
            .channel_names
            .iter()
            .filter(|c| !names.contains(c))
            .cloned()
            .collect();
        self.select_channels(&keep)
    }

    /// Splits into `(head, tail)` at `⌊train_fraction·N⌋` with no shuffling,
    /// so the head strictly precedes the tail in time. `min_part_len` is the
    /// shortest usable piece (typically the window length).
    pub fn chronological_split(
        &self,
        train_fraction: f64,
        min_part_len: usize,
    ) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Usage(format!(
                "train fraction must lie in (0,1), got {train_fraction}"
            )));
        }
        let n = self.n_samples();
        let cut = (train_fraction * n as f64).floor() as usize;
        if cut < min_part_len || n - cut < min_part_len {
            return Err(Error::Usage(format!(
                "split at {cut}/{n} leaves a part shorter than {min_part_len} samples"
            )));
        }
        let head = self.samples.slice(ndarray::s![..cut, ..]).to_owned();
        let tail = self.samples.slice(ndarray::s![cut.., ..]).to_owned();
        Ok((
            Self::new(self.channel_names.clone(), head, self.sample_rate_hz)?,
            Self::new(self.channel_names.clone(), tail, self.sample_rate_hz)?,
        ))
    }

    /// Keeps every `factor`-th sample (decimation) and divides the sample
    /// rate accordingly. `factor = 1` is the identity.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor < 1 {
            return Err(Error::Usage("downsample factor must be ≥ 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let idx: Vec<usize> = (0..self.n_samples()).step_by(factor).collect();
        let samples = self.samples.select(Axis(0), &idx);
        Self::new(
            self.channel_names.clone(),
            samples,
            self.sample_rate_hz / factor as f64,
        )
    }

    /// The `(lookback+1)×n` view starting at sample `start`.
    pub fn window_at(&self, start: usize, lookback: usize) -> Result<ArrayView2<'_, f64>> {
        let end = start + lookback + 1;
        if lookback < 1 || end > self.n_samples() {
            return Err(Error::Usage(format!(
                "window [{start}, {end}) with lookback {lookback} invalid for {} samples",
                self.n_samples()
            )));
        }
        Ok(self.samples.slice(ndarray::s![start..end, ..]))
    }

    /// All windows of `lookback+1` consecutive samples, starting at
    /// 0, stride, 2·stride, …
    pub fn windows(&self, lookback: usize, stride: usize) -> Result<WindowIter<'_>> {
        let count = window_count(self.n_samples(), lookback, stride)?;
        Ok(WindowIter {
            dataset: self,
            lookback,
            stride,
            next: 0,
            count,
        })
    }
}

/// Number of windows of length `lookback+1` at the given stride:
/// `⌊(N−lookback−1)/stride⌋ + 1`.
pub fn window_count(n_samples: usize, lookback: usize, stride: usize) -> Result<usize> {
    if lookback < 1 {
        return Err(Error::Usage("lookback must be ≥ 1".into()));
    }
    if stride < 1 {
        return Err(Error::Usage("stride must be ≥ 1".into()));
    }
    if n_samples < lookback + 1 {
        return Err(Error::Usage(format!(
            "{n_samples} samples cannot fit a window of {} rows",
            lookback + 1
        )));
    }
    Ok((n_samples - lookback - 1) / stride + 1)
}

/// One sliding window: `(lookback+1)` consecutive rows of the dataset.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub values: ArrayView2<'a, f64>,
    pub start_index: usize,
}

pub struct WindowIter<'a> {
    dataset: &'a TimeSeriesDataset,
    lookback: usize,
    stride: usize,
    next: usize,
    count: usize,
}

impl<'a> Iterator for WindowIter<'a> {
    type Item = Window<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let start = self.next * self.stride;
        self.next += 1;
        Some(Window {
            values: self
                .dataset
                .window_at(start, self.lookback)
                .expect("count guarantees bounds"),
            start_index: start,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for WindowIter<'_> {}

/// Per-channel affine map onto the `[0,1]` range observed in the fit data.
/// Values outside the fit range map outside `[0,1]` — deliberately not
/// clipped, so injected anomalies stay visible after scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Scaler {
    /// Fits per-channel min/max on `fit_range` only.
    pub fn fit(dataset: &TimeSeriesDataset, fit_range: std::ops::Range<usize>) -> Result<Self> {
        let stats = dataset.compute_stats(fit_range)?;
        Ok(Self {
            mins: stats.iter().map(|s| s.min).collect(),
            maxs: stats.iter().map(|s| s.max).collect(),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.mins.len()
    }

    pub fn channel_range(&self, ch: usize) -> (f64, f64) {
        (self.mins[ch], self.maxs[ch])
    }

    fn check_width(&self, ncols: usize) -> Result<()> {
        if ncols != self.mins.len() {
            return Err(Error::Dimension(format!(
                "scaler fitted on {} channels, data has {ncols}",
                self.mins.len()
            )));
        }
        Ok(())
    }

    /// `(x − min) / (max − min)`; a degenerate channel (min == max) maps to
    /// the constant 0.5.
    pub fn transform(&self, data: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(data.ncols())?;
        let mut out = data.to_owned();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.mins[c], self.maxs[c]);
            let span = hi - lo;
            if span == 0.0 {
                col.fill(0.5);
            } else {
                col.mapv_inplace(|x| (x - lo) / span);
            }
        }
        Ok(out)
    }

    /// Inverse of [`Scaler::transform`]; a degenerate channel returns its
    /// constant fit value.
    pub fn inverse(&self, data: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(data.ncols())?;
        let mut out = data.to_owned();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.mins[c], self.maxs[c]);
            let span = hi - lo;
            if span == 0.0 {
                col.fill(lo);
            } else {
                col.mapv_inplace(|y| lo + y * span);
            }
        }
        Ok(out)
    }

    /// [`Scaler::inverse`] for a single value of one channel.
    pub fn inverse_value(&self, ch: usize, y: f64) -> f64 {
        let (lo, hi) = (self.mins[ch], self.maxs[ch]);
        let span = hi - lo;
        if span == 0.0 {
            lo
        } else {
            lo + y * span
        }
    }

    /// Scales an entire dataset, preserving names and rate.
    pub fn transform_dataset(&self, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        let scaled = self.transform(&dataset.samples().view())?;
        TimeSeriesDataset::new(
            dataset.channel_names().to_vec(),
            scaled,
            dataset.sample_rate_hz(),
        )
    }
}

fn stats_of_columns(view: &ArrayView2<'_, f64>) -> Vec<ChannelStats> {
    let n = view.nrows() as f64;
    view.columns()
        .into_iter()
        .map(|col| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for &v in col.iter() {
                min = min.min(v);
                max = max.max(v);
                sum += v;
            }
            let mean = sum / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            ChannelStats {
                min,
                max,
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}
