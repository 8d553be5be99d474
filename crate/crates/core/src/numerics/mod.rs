//! Differentiable computation core: dense layers, tanh, masked MSE,
//! reverse-mode gradients and Adam. Everything is f64 and deterministic
//! under a seed; there is no hidden global state.

mod adam;
mod tape;

pub use adam::{adam_step, AdamState};
pub use tape::{Tape, ValueId};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A trainable parameter: a shape plus row-major f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if values.len() != expect {
            return Err(Error::Dimension(format!(
                "param values length {} does not match shape {:?} ({} elements)",
                values.len(),
                shape,
                expect
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("param values must be finite".into()));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Views the tensor as a matrix. Rank-1 tensors become a single row, so a
    /// bias of shape `[d]` broadcasts as a `1×d` row vector.
    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        let (r, c) = self.matrix_dims();
        ArrayView2::from_shape((r, c), &self.values).expect("shape invariant")
    }

    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("only rank-1 and rank-2 parameters are supported"),
        }
    }
}

/// `output[b][j] = Σ_i input[b][i]·weights[i][j] + bias[j]`
pub fn dense_forward(
    input: &ArrayView2<'_, f64>,
    weights: &ParamTensor,
    bias: &ParamTensor,
) -> Result<Array2<f64>> {
    let (w_in, w_out) = weights.matrix_dims();
    if weights.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "weights must be rank-2, got shape {:?}",
            weights.shape()
        )));
    }
    if input.ncols() != w_in {
        return Err(Error::Dimension(format!(
            "input has {} columns but weights expect {}",
            input.ncols(),
            w_in
        )));
    }
    if bias.len() != w_out {
        return Err(Error::Dimension(format!(
            "bias has {} entries but weights produce {}",
            bias.len(),
            w_out
        )));
    }
    let mut out = input.dot(&weights.as_matrix());
    let b = bias.as_matrix();
    for mut row in out.rows_mut() {
        row += &b.row(0);
    }
    Ok(out)
}

pub fn tanh(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(f64::tanh)
}

/// Mean squared error over the masked channels only.
///
/// `pred` and `target` are window-shaped (rows = time steps, columns =
/// channels). The mean runs over the `(T+1)·|mask|` elements of the masked
/// channels; unmasked channels contribute exactly zero.
pub fn masked_mse(pred: &Array2<f64>, target: &Array2<f64>, mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Usage(
            "masked_mse requires a non-empty mask; the loss is undefined otherwise".into(),
        ));
    }
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "pred shape {:?} != target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n_channels = pred.ncols();
    let mut sum = 0.0;
    for &ch in mask {
        if ch >= n_channels {
            return Err(Error::Usage(format!(
                "mask channel {ch} out of range for {n_channels} channels"
            )));
        }
        for t in 0..pred.nrows() {
            let d = pred[[t, ch]] - target[[t, ch]];
            sum += d * d;
        }
    }
    Ok(sum / (pred.nrows() * mask.len()) as f64)
}
