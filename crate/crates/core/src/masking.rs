//! Mask sampling and fill policies.
//!
//! A mask names the channels whose measurements are hidden from the model
//! for every timestep of a window. Hidden values are replaced per the fill
//! policy: `uniform_random` draws fresh values inside the channel's scaled
//! training range at every timestep (the training default — a fixed filler
//! would be trivially recognisable), while `channel_mean` writes the
//! channel's training mean (the inference default, chosen so detection runs
//! are reproducible without threading an RNG through the detector).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Per-timestep i.i.d. uniform draws in the channel's scaled fit range.
    #[default]
    UniformRandom,
    /// The channel's scaled training mean at every timestep.
    ChannelMean,
}

/// Channels eligible for masking (the protected sensors), as indices into
/// the dataset's channel order. Remaining channels are auxiliary: always
/// visible, never reconstructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskableChannelSet {
    dataset_indices: Vec<usize>,
    n_channels_total: usize,
}

impl MaskableChannelSet {
    pub fn new(mut dataset_indices: Vec<usize>, n_channels_total: usize) -> Result<Self> {
        if dataset_indices.is_empty() {
            return Err(Error::Usage("at least one channel must be maskable".into()));
        }
        dataset_indices.sort_unstable();
        dataset_indices.dedup();
        if let Some(&bad) = dataset_indices.iter().find(|&&i| i >= n_channels_total) {
            return Err(Error::Usage(format!(
                "maskable channel {bad} out of range for {n_channels_total} channels"
            )));
        }
        Ok(Self {
            dataset_indices,
            n_channels_total,
        })
    }

    /// Every channel of an `n`-channel dataset.
    pub fn all(n_channels_total: usize) -> Result<Self> {
        Self::new((0..n_channels_total).collect(), n_channels_total)
    }

    pub fn len(&self) -> usize {
        self.dataset_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires ≥ 1 channel
    }

    pub fn n_channels_total(&self) -> usize {
        self.n_channels_total
    }

    /// Dataset column of maskable position `pos`.
    pub fn dataset_index(&self, pos: usize) -> usize {
        self.dataset_indices[pos]
    }

    pub fn dataset_indices(&self) -> &[usize] {
        &self.dataset_indices
    }

    pub fn position_of(&self, dataset_index: usize) -> Option<usize> {
        self.dataset_indices.binary_search(&dataset_index).ok()
    }
}

/// One masking decision: which maskable positions are hidden, how the holes
/// are filled, and the seed for any random fill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Positions within the maskable set, sorted and unique.
    pub masked_channels: Vec<usize>,
    pub fill_policy: FillPolicy,
    pub rng_seed: u64,
}

impl MaskSpec {
    /// A validated mask. Cardinality must respect [`mask_cardinality_bound`];
    /// the joint re-mask inside the detector constructs larger masks through
    /// the struct literal, which is deliberate.
    pub fn new(
        mut masked_channels: Vec<usize>,
        fill_policy: FillPolicy,
        rng_seed: u64,
        n_maskable: usize,
    ) -> Result<Self> {
        masked_channels.sort_unstable();
        masked_channels.dedup();
        if masked_channels.is_empty() {
            return Err(Error::Usage("a mask must hide at least one channel".into()));
        }
        if masked_channels.len() > mask_cardinality_bound(n_maskable) {
            return Err(Error::Usage(format!(
                "mask of {} channels exceeds the bound {} for {n_maskable} maskable channels",
                masked_channels.len(),
                mask_cardinality_bound(n_maskable)
            )));
        }
        if let Some(&bad) = masked_channels.iter().find(|&&c| c >= n_maskable) {
            return Err(Error::Usage(format!(
                "masked position {bad} out of range for {n_maskable} maskable channels"
            )));
        }
        Ok(Self {
            masked_channels,
            fill_policy,
            rng_seed,
        })
    }

    /// A deterministic single-channel mask, as used per protected channel
    /// during detection.
    pub fn single(position: usize, fill_policy: FillPolicy) -> Self {
        Self {
            masked_channels: vec![position],
            fill_policy,
            rng_seed: 0,
        }
    }
}

/// Most channels a sampled mask may hide: `max(1, ⌊0.2·n⌋)`. The clamp to 1
/// keeps small sensor sets trainable (for n < 5 the 20% bound would allow
/// nothing).
pub fn mask_cardinality_bound(n_maskable: usize) -> usize {
    (n_maskable / 5).max(1)
}

/// Draws a training mask: a cardinality uniform in `{1, …, bound}`, then
/// that many distinct positions uniformly from the maskable set, plus a
/// fresh fill seed.
pub fn sample_mask(n_maskable: usize, rng: &mut impl Rng) -> Result<MaskSpec> {
    if n_maskable < 1 {
        return Err(Error::Usage("cannot sample a mask over zero channels".into()));
    }
    let bound = mask_cardinality_bound(n_maskable);
    let cardinality = rng.random_range(1..=bound);
    let mut chosen = rand::seq::index::sample(rng, n_maskable, cardinality).into_vec();
    chosen.sort_unstable();
    let rng_seed = rng.random::<u64>();
    Ok(MaskSpec {
        masked_channels: chosen,
        fill_policy: FillPolicy::UniformRandom,
        rng_seed,
    })
}

/// Returns a copy of `window` with the masked channels' values replaced at
/// every timestep; unmasked channels pass through bit-exactly. `stats` holds
/// per-dataset-channel scaled statistics (fit-range min/max and mean).
pub fn apply_mask(
    window: &ndarray::ArrayView2<'_, f64>,
    mask: &MaskSpec,
    maskable: &MaskableChannelSet,
    stats: &[ChannelStats],
) -> Result<Array2<f64>> {
    if window.ncols() != maskable.n_channels_total() {
        return Err(Error::Dimension(format!(
            "window has {} channels, maskable set expects {}",
            window.ncols(),
            maskable.n_channels_total()
        )));
    }
    if stats.len() != window.ncols() {
        return Err(Error::Dimension(format!(
            "{} channel stats for {} channels",
            stats.len(),
            window.ncols()
        )));
    }
    if let Some(&bad) = mask
        .masked_channels
        .iter()
        .find(|&&p| p >= maskable.len())
    {
        return Err(Error::Usage(format!(
            "masked position {bad} out of range for {} maskable channels",
            maskable.len()
        )));
    }

    let mut out = window.to_owned();
    let mut fill_rng = ChaCha8Rng::seed_from_u64(mask.rng_seed);
    for &pos in &mask.masked_channels {
        let col = maskable.dataset_index(pos);
        let s = &stats[col];
        for t in 0..out.nrows() {
            out[[t, col]] = match mask.fill_policy {
                // min + u·(max−min) never panics on a degenerate range.
                FillPolicy::UniformRandom => {
                    s.min + fill_rng.random::<f64>() * (s.max - s.min)
                }
                FillPolicy::ChannelMean => s.mean,
            };
        }
    }
    Ok(out)
}
