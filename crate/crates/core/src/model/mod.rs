//! The sequence-model interface and its three dense-network formulations:
//!
//! * **masked** — consumes a full window of all channels plus one binary
//!   mask-indicator input per protected channel, and reconstructs every
//!   protected channel at every timestep. The indicator is what lets the
//!   network distinguish genuinely measured values from random fill.
//! * **auto-regressive** — consumes the previous `lookback` rows and
//!   predicts the next row for all channels.
//! * **auto-associative** — reconstructs a single row through a bottleneck
//!   strictly narrower than the channel count (a bottleneck ≥ n could learn
//!   the identity map and would flag nothing).
//!
//! All three are dense tanh networks with an identity output layer. The
//! backbone is deliberately plain: the detection scheme only needs *some*
//! trainable map with the right input/output contract, and a windowed dense
//! network keeps training deterministic and dependency-free.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointData, CheckpointEncoding, ThresholdInfo,
};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{MaskSpec, MaskableChannelSet};
use crate::numerics::{dense_forward, tanh, ParamTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Masked,
    AutoRegressive,
    AutoAssociative,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Formulation::Masked => "masked",
            Formulation::AutoRegressive => "auto_regressive",
            Formulation::AutoAssociative => "auto_associative",
        };
        f.write_str(s)
    }
}

/// A dense network with a fixed input/output contract per [`Formulation`].
/// Immutable after training; forward passes may run from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    formulation: Formulation,
    n_channels: usize,
    n_maskable: usize,
    /// Rows of history. Masked windows have `lookback+1` rows; the
    /// auto-regressive input has `lookback` rows; auto-associative models
    /// work row-wise and store 0.
    lookback: usize,
    hidden_sizes: Vec<usize>,
    /// `[W₁, b₁, W₂, b₂, …]` in layer order.
    params: Vec<ParamTensor>,
}

/// Weights start uniform in ±√(6/(fan_in+fan_out)); biases start at zero.
fn init_layers(dims: &[usize], rng: &mut impl Rng) -> Vec<ParamTensor> {
    let mut params = Vec::with_capacity(2 * (dims.len() - 1));
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        params.push(ParamTensor::new(vec![fan_in, fan_out], values).expect("sized above"));
        params.push(ParamTensor::zeros(vec![fan_out]));
    }
    params
}

impl SequenceModel {
    /// Masked reconstructor: flat input of `(lookback+1)·(n_channels +
    /// n_maskable)` (values then indicators per timestep), flat output of
    /// `(lookback+1)·n_maskable`.
    pub fn build_masked(
        n_channels: usize,
        n_maskable: usize,
        lookback: usize,
        hidden_sizes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_channels < 2 || n_maskable < 1 || n_maskable > n_channels || lookback < 1 {
            return Err(Error::Config(format!(
                "masked model needs n_channels ≥ 2, 1 ≤ n_maskable ≤ n_channels, lookback ≥ 1; \
                 got n={n_channels}, maskable={n_maskable}, lookback={lookback}"
            )));
        }
        Self::assemble(
            Formulation::Masked,
            n_channels,
            n_maskable,
            lookback,
            hidden_sizes,
            rng,
        )
    }

    /// Next-row predictor: flat input `lookback·n_channels`, output `n_channels`.
    pub fn build_auto_regressive(
        n_channels: usize,
        lookback: usize,
        hidden_sizes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_channels < 2 || lookback < 1 {
            return Err(Error::Config(format!(
                "auto-regressive model needs n_channels ≥ 2 and lookback ≥ 1; \
                 got n={n_channels}, lookback={lookback}"
            )));
        }
        Self::assemble(
            Formulation::AutoRegressive,
            n_channels,
            n_channels,
            lookback,
            hidden_sizes,
            rng,
        )
    }

    /// Row autoencoder: input and output `n_channels`, narrowest hidden
    /// layer strictly below `n_channels`.
    pub fn build_auto_associative(
        n_channels: usize,
        hidden_sizes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_channels < 2 {
            return Err(Error::Config("autoencoder needs n_channels ≥ 2".into()));
        }
        let bottleneck = hidden_sizes.iter().copied().min().ok_or_else(|| {
            Error::Config("autoencoder needs at least one hidden layer".into())
        })?;
        if bottleneck >= n_channels {
            return Err(Error::Config(format!(
                "bottleneck {bottleneck} must be narrower than the {n_channels} channels, \
                 otherwise the identity map is learnable and nothing gets flagged"
            )));
        }
        Self::assemble(
            Formulation::AutoAssociative,
            n_channels,
            n_channels,
            0,
            hidden_sizes,
            rng,
        )
    }

    fn assemble(
        formulation: Formulation,
        n_channels: usize,
        n_maskable: usize,
        lookback: usize,
        hidden_sizes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        let mut model = Self {
            formulation,
            n_channels,
            n_maskable,
            lookback,
            hidden_sizes: hidden_sizes.to_vec(),
            params: Vec::new(),
        };
        let dims = model.layer_dims();
        model.params = init_layers(&dims, rng);
        Ok(model)
    }

    /// Rebuilds a model from checkpointed fields; parameter shapes must
    /// match the architecture exactly.
    pub(crate) fn from_parts(
        formulation: Formulation,
        n_channels: usize,
        n_maskable: usize,
        lookback: usize,
        hidden_sizes: Vec<usize>,
        params: Vec<ParamTensor>,
    ) -> Result<Self> {
        let model = Self {
            formulation,
            n_channels,
            n_maskable,
            lookback,
            hidden_sizes,
            params,
        };
        let dims = model.layer_dims();
        let expect: Vec<Vec<usize>> = dims
            .windows(2)
            .flat_map(|p| [vec![p[0], p[1]], vec![p[1]]])
            .collect();
        let got: Vec<Vec<usize>> = model.params.iter().map(|p| p.shape().to_vec()).collect();
        if expect != got {
            return Err(Error::Checkpoint(format!(
                "parameter shapes {got:?} do not match architecture {expect:?}"
            )));
        }
        Ok(model)
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_maskable(&self) -> usize {
        self.n_maskable
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamTensor::len).sum()
    }

    pub fn input_dim(&self) -> usize {
        match self.formulation {
            Formulation::Masked => (self.lookback + 1) * (self.n_channels + self.n_maskable),
            Formulation::AutoRegressive => self.lookback * self.n_channels,
            Formulation::AutoAssociative => self.n_channels,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.formulation {
            Formulation::Masked => (self.lookback + 1) * self.n_maskable,
            Formulation::AutoRegressive | Formulation::AutoAssociative => self.n_channels,
        }
    }

    /// Full layer width list: input, hidden…, output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 2);
        dims.push(self.input_dim());
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.output_dim());
        dims
    }

    /// Batched forward pass over pre-flattened inputs (`batch×input_dim` →
    /// `batch×output_dim`): dense+tanh through the hidden layers, identity
    /// output.
    pub fn forward_flat(&self, input: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input width {} does not match the model's {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let n_layers = self.params.len() / 2;
        let mut x = input.to_owned();
        for layer in 0..n_layers {
            let mut y = dense_forward(
                &x.view(),
                &self.params[2 * layer],
                &self.params[2 * layer + 1],
            )?;
            if layer + 1 < n_layers {
                y = tanh(&y);
            }
            x = y;
        }
        Ok(x)
    }

    /// Flattens a masked window plus its mask indicators into the model's
    /// input layout: per timestep, the `n_channels` (already filled) values
    /// followed by `n_maskable` indicator cells (1 = hidden here).
    pub fn flatten_masked_input(
        &self,
        masked_window: &ArrayView2<'_, f64>,
        mask: &MaskSpec,
        maskable: &MaskableChannelSet,
    ) -> Result<Array2<f64>> {
        self.require(Formulation::Masked)?;
        let rows = self.lookback + 1;
        if masked_window.dim() != (rows, self.n_channels) {
            return Err(Error::Dimension(format!(
                "masked window is {:?}, model expects ({rows}, {})",
                masked_window.dim(),
                self.n_channels
            )));
        }
        if maskable.len() != self.n_maskable {
            return Err(Error::Dimension(format!(
                "maskable set has {} channels, model expects {}",
                maskable.len(),
                self.n_maskable
            )));
        }
        let mut indicator = vec![0.0; self.n_maskable];
        for &pos in &mask.masked_channels {
            if pos >= self.n_maskable {
                return Err(Error::Usage(format!(
                    "masked position {pos} out of range for {} maskable channels",
                    self.n_maskable
                )));
            }
            indicator[pos] = 1.0;
        }
        let width = self.n_channels + self.n_maskable;
        let mut flat = Array2::zeros((1, rows * width));
        for t in 0..rows {
            for c in 0..self.n_channels {
                flat[[0, t * width + c]] = masked_window[[t, c]];
            }
            for (m, &ind) in indicator.iter().enumerate() {
                flat[[0, t * width + self.n_channels + m]] = ind;
            }
        }
        Ok(flat)
    }

    /// Reconstruction of every maskable channel at every timestep,
    /// `(lookback+1)×n_maskable`. The caller reads the masked columns.
    pub fn predict_masked(
        &self,
        masked_window: &ArrayView2<'_, f64>,
        mask: &MaskSpec,
        maskable: &MaskableChannelSet,
    ) -> Result<Array2<f64>> {
        let flat = self.flatten_masked_input(masked_window, mask, maskable)?;
        let out = self.forward_flat(&flat.view())?;
        let rows = self.lookback + 1;
        Ok(out
            .into_shape_with_order((rows, self.n_maskable))
            .expect("output_dim = rows·n_maskable"))
    }

    /// Next-row estimate `1×n_channels` from a `lookback×n_channels` history.
    pub fn predict_next(&self, history: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.require(Formulation::AutoRegressive)?;
        if history.dim() != (self.lookback, self.n_channels) {
            return Err(Error::Dimension(format!(
                "history is {:?}, model expects ({}, {})",
                history.dim(),
                self.lookback,
                self.n_channels
            )));
        }
        let flat = history
            .to_owned()
            .into_shape_with_order((1, self.lookback * self.n_channels))
            .expect("contiguous reshape");
        self.forward_flat(&flat.view())
    }

    /// Row-wise reconstruction through the bottleneck; accepts any number of
    /// rows and treats them as a batch.
    pub fn autoencode(&self, rows: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.require(Formulation::AutoAssociative)?;
        self.forward_flat(rows)
    }

    fn require(&self, expected: Formulation) -> Result<()> {
        if self.formulation != expected {
            return Err(Error::Usage(format!(
                "operation needs a {expected} model, this one is {}",
                self.formulation
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::FillPolicy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn masked_parameter_count_for_reference_shape() {
        // 4 channels, all maskable, 10-row windows, one hidden layer of 64:
        // input 10·(4+4) = 80 → 80·64 + 64 + 64·40 + 40 = 7,784.
        let m = SequenceModel::build_masked(4, 4, 9, &[64], &mut rng(0)).unwrap();
        assert_eq!(m.param_count(), 7_784);
        assert_eq!(m.input_dim(), 80);
        assert_eq!(m.output_dim(), 40);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut m = SequenceModel::build_masked(4, 4, 9, &[64], &mut rng(0)).unwrap();
        for p in m.params_mut() {
            p.values_mut().fill(0.0);
        }
        let window = Array2::zeros((10, 4));
        let mask = MaskSpec::single(2, FillPolicy::ChannelMean);
        let maskable = MaskableChannelSet::all(4).unwrap();
        let out = m.predict_masked(&window.view(), &mask, &maskable).unwrap();
        assert_eq!(out.dim(), (10, 4));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_output_shape_is_mask_independent() {
        let m = SequenceModel::build_masked(6, 3, 4, &[16], &mut rng(1)).unwrap();
        let maskable = MaskableChannelSet::new(vec![0, 2, 4], 6).unwrap();
        let window = Array2::from_elem((5, 6), 0.3);
        for mask in [
            MaskSpec::single(0, FillPolicy::ChannelMean),
            MaskSpec::single(2, FillPolicy::ChannelMean),
            MaskSpec {
                masked_channels: vec![0, 1, 2],
                fill_policy: FillPolicy::ChannelMean,
                rng_seed: 0,
            },
        ] {
            let out = m.predict_masked(&window.view(), &mask, &maskable).unwrap();
            assert_eq!(out.dim(), (5, 3));
        }
    }

    #[test]
    fn indicator_input_changes_the_output() {
        // With random nonzero weights, toggling an indicator bit must move
        // the output; a dead indicator would defeat mask-awareness.
        let m = SequenceModel::build_masked(4, 4, 3, &[8], &mut rng(2)).unwrap();
        let maskable = MaskableChannelSet::all(4).unwrap();
        let window = Array2::from_elem((4, 4), 0.5);
        let out_a = m
            .predict_masked(
                &window.view(),
                &MaskSpec::single(0, FillPolicy::ChannelMean),
                &maskable,
            )
            .unwrap();
        // Same filled values, different indicator (mean fill writes 0.5 too).
        let out_b = m
            .predict_masked(
                &window.view(),
                &MaskSpec::single(1, FillPolicy::ChannelMean),
                &maskable,
            )
            .unwrap();
        assert_ne!(out_a, out_b);
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let a = SequenceModel::build_masked(5, 2, 4, &[32, 16], &mut rng(9)).unwrap();
        let b = SequenceModel::build_masked(5, 2, 4, &[32, 16], &mut rng(9)).unwrap();
        assert_eq!(a, b);
        let c = SequenceModel::build_masked(5, 2, 4, &[32, 16], &mut rng(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn auto_regressive_shapes() {
        let m = SequenceModel::build_auto_regressive(6, 10, &[20], &mut rng(3)).unwrap();
        assert_eq!(m.input_dim(), 60);
        let history = Array2::from_elem((10, 6), 0.1);
        let out = m.predict_next(&history.view()).unwrap();
        assert_eq!(out.dim(), (1, 6));
        // Zero-weight model emits the (zero) bias only.
        let mut z = m.clone();
        for p in z.params_mut() {
            p.values_mut().fill(0.0);
        }
        let out = z.predict_next(&history.view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn autoencoder_reference_shape_and_bottleneck_rule() {
        let m = SequenceModel::build_auto_associative(59, &[64, 32, 2], &mut rng(4)).unwrap();
        assert_eq!(m.layer_dims(), vec![59, 64, 32, 2, 59]);
        let rows = Array2::from_elem((3, 59), 0.2);
        assert_eq!(m.autoencode(&rows.view()).unwrap().dim(), (3, 59));

        // A bottleneck as wide as the input could learn the identity map.
        let err = SequenceModel::build_auto_associative(4, &[8, 4], &mut rng(4));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn formulation_mismatch_is_a_usage_error() {
        let m = SequenceModel::build_auto_regressive(4, 3, &[8], &mut rng(5)).unwrap();
        let window = Array2::zeros((4, 4));
        let mask = MaskSpec::single(0, FillPolicy::ChannelMean);
        let maskable = MaskableChannelSet::all(4).unwrap();
        assert!(matches!(
            m.predict_masked(&window.view(), &mask, &maskable),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            m.autoencode(&window.view()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn flat_input_layout_interleaves_values_and_indicators() {
        let m = SequenceModel::build_masked(2, 2, 1, &[], &mut rng(6)).unwrap();
        let maskable = MaskableChannelSet::all(2).unwrap();
        let window = ndarray::array![[0.1, 0.2], [0.3, 0.4]];
        let mask = MaskSpec::single(1, FillPolicy::ChannelMean);
        let flat = m
            .flatten_masked_input(&window.view(), &mask, &maskable)
            .unwrap();
        assert_eq!(
            flat,
            ndarray::array![[0.1, 0.2, 0.0, 1.0, 0.3, 0.4, 0.0, 1.0]]
        );
    }

    #[test]
    fn bad_dims_are_rejected() {
        let m = SequenceModel::build_masked(4, 4, 9, &[8], &mut rng(7)).unwrap();
        let short = Array2::zeros((5, 4));
        let mask = MaskSpec::single(0, FillPolicy::ChannelMean);
        let maskable = MaskableChannelSet::all(4).unwrap();
        assert!(m.predict_masked(&short.view(), &mask, &maskable).is_err());

        let ar = SequenceModel::build_auto_regressive(4, 3, &[8], &mut rng(8)).unwrap();
        assert!(ar.predict_next(&Array2::zeros((2, 4)).view()).is_err());
    }
}
