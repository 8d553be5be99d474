//! Adam optimiser with bias correction.

use ndarray::Array2;

use super::ParamTensor;
use crate::error::{Error, Result};

/// Per-parameter first/second moment estimates plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8; `param_lens` fixes the number and
    /// size of the tensors every subsequent [`adam_step`] must supply.
    pub fn new(lr: f64, param_lens: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update in place. `grads[i]` must have the matrix shape
/// of `params[i]` (rank-1 tensors are `1×d` rows).
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [ParamTensor],
    grads: &[Array2<f64>],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam_step got {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);

    for (pi, param) in params.iter_mut().enumerate() {
        let (rows, cols) = param.matrix_dims();
        if grads[pi].dim() != (rows, cols) {
            return Err(Error::Dimension(format!(
                "grad {} has shape {:?}, param expects ({rows}, {cols})",
                pi,
                grads[pi].dim()
            )));
        }
        let values = param.values_mut();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let g = grads[pi][[r, c]];
                state.m[pi][i] = state.beta1 * state.m[pi][i] + (1.0 - state.beta1) * g;
                state.v[pi][i] = state.beta2 * state.v[pi][i] + (1.0 - state.beta2) * g * g;
                let m_hat = state.m[pi][i] / bc1;
                let v_hat = state.v[pi][i] / bc2;
                values[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_matches_closed_form() {
        // With m = v = 0, one step with gradient g gives
        // Δ = −lr · g / (|g| + ε); for g = 1 that is −0.001/(1 + 1e-8).
        let mut params = vec![ParamTensor::zeros(vec![1])];
        let mut state = AdamState::new(0.001, &[1]);
        adam_step(&mut state, &mut params, &[array![[1.0]]]).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((params[0].values()[0] - expected).abs() < 1e-15);
        assert_eq!(state.steps_taken(), 1);
    }

    #[test]
    fn first_step_direction_and_scale_for_varied_gradients() {
        for &g in &[0.5, -2.0, 1e-3, -1e3] {
            let mut params = vec![ParamTensor::zeros(vec![1])];
            let mut state = AdamState::new(0.001, &[1]);
            adam_step(&mut state, &mut params, &[array![[g]]]).unwrap();
            let expected = -0.001 * g / (g.abs() + 1e-8);
            assert!(
                (params[0].values()[0] - expected).abs() < 1e-12,
                "g = {g}"
            );
        }
    }

    #[test]
    fn ten_steps_are_bitwise_reproducible() {
        let run = || {
            let mut params = vec![
                ParamTensor::new(vec![2, 2], vec![0.1, -0.2, 0.3, -0.4]).unwrap(),
                ParamTensor::new(vec![2], vec![0.05, -0.05]).unwrap(),
            ];
            let mut state = AdamState::new(0.01, &[4, 2]);
            for step in 0..10 {
                let s = step as f64;
                let g0 = array![[0.3 + s, -0.1], [0.2, 0.4 - s]];
                let g1 = array![[-0.6, 0.9 * s]];
                adam_step(&mut state, &mut params, &[g0, g1]).unwrap();
            }
            params
                .iter()
                .flat_map(|p| p.values().iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_grad_shape_is_rejected() {
        let mut params = vec![ParamTensor::zeros(vec![2, 2])];
        let mut state = AdamState::new(0.001, &[4]);
        let bad = array![[1.0, 2.0]];
        assert!(adam_step(&mut state, &mut params, &[bad]).is_err());
    }
}
