//! Seeded synthetic plant generator.
//!
//! Channels are built from two pools of latent signals — one private signal
//! per channel and a shared pool mixed through a random unit-norm coupling
//! matrix — blended as
//!
//! `x_i(t) = σ_target·( √(1−c²)·private_i(t) + c·Σ_j A_ij·shared_j(t) ) + σ_noise·z_it`
//!
//! with `c = coupling_strength`. Each latent is a sum of four sinusoids with
//! random phases, scaled to unit variance; shared latents draw their
//! frequencies from a slow band (plant-wide dynamics), private latents from a
//! fast band (channel-specific disturbances). At `c = 1` every channel is a
//! linear mix of the (fewer-than-n) shared latents, so each channel is
//! recoverable from the others up to the noise floor — the property a
//! cross-channel reconstructor needs. At `c = 0` channels are mutually
//! independent, which gives such a reconstructor nothing to use.
//!
//! `shared_phase_jitter` turns the shared latents from strictly periodic
//! signals into randomly wandering ones (a phase random walk). The wander is
//! visible concurrently in every coupled channel — cross-channel redundancy
//! is untouched — but it cannot be extrapolated from history, which is what
//! separates reconstruction-style detectors from prediction-style ones on
//! real plants whose operating point drifts.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::error::{Error, Result};

const SINUSOIDS_PER_LATENT: usize = 4;
/// Unit variance: each of the 4 sinusoids contributes amp²/2.
const SINUSOID_AMP: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Plant-wide dynamics are slow (periods of 50–1000 samples)…
const SHARED_MIN_FREQ: f64 = 0.001; // cycles per sample
const SHARED_MAX_FREQ: f64 = 0.02;
/// …while per-channel disturbances are fast (periods of 4–25 samples), so a
/// cross-channel reconstructor faces them as an irreducible error floor
/// rather than something it can soak up from a neighboring channel.
const PRIVATE_MIN_FREQ: f64 = 0.04;
const PRIVATE_MAX_FREQ: f64 = 0.25;

fn default_target_std() -> f64 {
    1.0
}

fn default_sample_rate() -> f64 {
    25.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub length: usize,
    pub seed: u64,
    /// 0 = independent channels, 1 = fully coupled (every channel is a mix
    /// of the shared latents only).
    pub coupling_strength: f64,
    /// Standard deviation of the additive i.i.d. Gaussian noise.
    pub noise_std: f64,
    /// Std dev, in radians per step, of a random walk added to each shared
    /// sinusoid's phase. 0 (default) keeps the shared latents periodic;
    /// positive values make the plant's operating point wander so the next
    /// sample is genuinely unpredictable from history while concurrent
    /// cross-channel structure is preserved.
    #[serde(default)]
    pub shared_phase_jitter: f64,
    /// Size of the shared latent pool; defaults to `max(2, n_channels/2)`.
    /// Must stay below `n_channels` or no channel is recoverable from the
    /// rest even in principle.
    #[serde(default)]
    pub n_latents: Option<usize>,
    /// Per-channel signal standard deviation before noise.
    #[serde(default = "default_target_std")]
    pub target_std: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
}

impl SynthConfig {
    fn shared_latents(&self) -> usize {
        self.n_latents.unwrap_or((self.n_channels / 2).max(2))
    }

    fn validate(&self) -> Result<()> {
        if self.n_channels < 4 {
            return Err(Error::Usage(format!(
                "synthesis needs ≥ 4 channels, got {}",
                self.n_channels
            )));
        }
        if self.length < 1000 {
            return Err(Error::Usage(format!(
                "synthesis needs length ≥ 1000, got {}",
                self.length
            )));
        }
        if !(0.0..=1.0).contains(&self.coupling_strength) {
            return Err(Error::Usage(format!(
                "coupling strength must lie in [0,1], got {}",
                self.coupling_strength
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::Usage(format!(
                "noise std must be ≥ 0, got {}",
                self.noise_std
            )));
        }
        if !self.shared_phase_jitter.is_finite() || self.shared_phase_jitter < 0.0 {
            return Err(Error::Usage(format!(
                "shared phase jitter must be ≥ 0, got {}",
                self.shared_phase_jitter
            )));
        }
        if !self.target_std.is_finite() || self.target_std <= 0.0 {
            return Err(Error::Usage(format!(
                "target std must be > 0, got {}",
                self.target_std
            )));
        }
        let latents = self.shared_latents();
        if latents < 1 || latents >= self.n_channels {
            return Err(Error::Usage(format!(
                "shared latent count {latents} must lie in [1, n_channels)"
            )));
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(Error::Usage("sample rate must be positive".into()));
        }
        Ok(())
    }
}

/// A frequency band split into one stratum per sinusoid, handed out in
/// shuffled order with jitter confined to the central half of each stratum.
/// Adjacent sinusoids therefore keep at least half a stratum of separation,
/// so no two channels end up correlated over practical window lengths just
/// because their frequencies happened to collide.
struct Band {
    min_freq: f64,
    stratum_width: f64,
    strata: std::vec::IntoIter<usize>,
}

impl Band {
    fn new(min_freq: f64, max_freq: f64, sinusoids: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..sinusoids).collect();
        order.shuffle(rng);
        Self {
            min_freq,
            stratum_width: (max_freq - min_freq) / sinusoids as f64,
            strata: order.into_iter(),
        }
    }

    fn next_freq(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let stratum = self.strata.next().expect("one stratum reserved per sinusoid") as f64;
        let jitter: f64 = rng.random_range(0.25..0.75);
        self.min_freq + (stratum + jitter) * self.stratum_width
    }
}

/// One unit-variance signal: a sum of four random sinusoids.
#[derive(Clone)]
struct Latent {
    freqs: [f64; SINUSOIDS_PER_LATENT],
    phases: [f64; SINUSOIDS_PER_LATENT],
}

impl Latent {
    fn draw(rng: &mut ChaCha8Rng, band: &mut Band) -> Self {
        let mut freqs = [0.0; SINUSOIDS_PER_LATENT];
        let mut phases = [0.0; SINUSOIDS_PER_LATENT];
        for k in 0..SINUSOIDS_PER_LATENT {
            freqs[k] = band.next_freq(rng);
            phases[k] = rng.random_range(0.0..TAU);
        }
        Self { freqs, phases }
    }

    fn at(&self, t: f64) -> f64 {
        self.at_drifted(t, &[0.0; SINUSOIDS_PER_LATENT])
    }

    fn at_drifted(&self, t: f64, drift: &[f64; SINUSOIDS_PER_LATENT]) -> f64 {
        let mut v = 0.0;
        for ((&freq, &phase), &shift) in self.freqs.iter().zip(&self.phases).zip(drift) {
            v += SINUSOID_AMP * (TAU * freq * t + phase + shift).sin();
        }
        v
    }
}

/// Generates the dataset described by `config`; identical configs produce
/// bit-identical datasets.
pub fn synthesize_plant(config: &SynthConfig) -> Result<TimeSeriesDataset> {
    config.validate()?;
    let n = config.n_channels;
    let n_shared = config.shared_latents();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Draw order is part of the format: shared strata shuffle, private strata
    // shuffle, shared latents, private latents, coupling rows, then per time
    // step the shared phase-jitter field in (latent, sinusoid) order — only
    // when jitter is enabled — followed by the noise draws in channel order.
    let mut shared_band = Band::new(
        SHARED_MIN_FREQ,
        SHARED_MAX_FREQ,
        n_shared * SINUSOIDS_PER_LATENT,
        &mut rng,
    );
    let mut private_band = Band::new(
        PRIVATE_MIN_FREQ,
        PRIVATE_MAX_FREQ,
        n * SINUSOIDS_PER_LATENT,
        &mut rng,
    );
    let shared: Vec<Latent> = (0..n_shared)
        .map(|_| Latent::draw(&mut rng, &mut shared_band))
        .collect();
    let private: Vec<Latent> = (0..n)
        .map(|_| Latent::draw(&mut rng, &mut private_band))
        .collect();
    let coupling: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> =
                (0..n_shared).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect();

    let c = config.coupling_strength;
    let private_weight = (1.0 - c * c).sqrt();
    let mut samples = Array2::zeros((config.length, n));
    let mut shared_now = vec![0.0; n_shared];
    let mut drift = vec![[0.0; SINUSOIDS_PER_LATENT]; n_shared];
    for t in 0..config.length {
        let tf = t as f64;
        if config.shared_phase_jitter > 0.0 {
            for latent_drift in drift.iter_mut() {
                for step in latent_drift.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *step += config.shared_phase_jitter * e;
                }
            }
        }
        for (j, latent) in shared.iter().enumerate() {
            shared_now[j] = latent.at_drifted(tf, &drift[j]);
        }
        for i in 0..n {
            let mixed: f64 = coupling[i]
                .iter()
                .zip(&shared_now)
                .map(|(a, s)| a * s)
                .sum();
            let signal = config.target_std * (private_weight * private[i].at(tf) + c * mixed);
            let z: f64 = StandardNormal.sample(&mut rng);
            samples[[t, i]] = signal + config.noise_std * z;
        }
    }

    let names = (0..n).map(|i| format!("ch{i:02}")).collect();
    TimeSeriesDataset::new(names, samples, config.sample_rate_hz)
}
