//! Adam with bias correction, in a shaped form for network parameters and a
//! flat form for generic parameter vectors.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{NetworkParams, ParamGrads};

#[allow(clippy::too_many_arguments)]
fn update_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &NetworkParams) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: params.biases.iter().map(|b| Array1::zeros(b.dim())).collect(),
            v_b: params.biases.iter().map(|b| Array1::zeros(b.dim())).collect(),
        }
    }
}

/// One Adam update in place. Rejects non-finite gradients so a diverging loss
/// surfaces at the step that produced it rather than corrupting the state.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grads: &ParamGrads,
) -> Result<()> {
    if grads.weights.len() != params.weights.len() {
        return Err(Error::DimensionMismatch {
            context: "adam gradients",
            expected: params.weights.len(),
            actual: grads.weights.len(),
        });
    }
    let finite = grads.weights.iter().all(|w| w.iter().all(|e| e.is_finite()))
        && grads.biases.iter().all(|b| b.iter().all(|e| e.is_finite()));
    if !finite {
        return Err(Error::NonFinite {
            context: "adam gradients",
            location: format!("step {}", state.step + 1),
        });
    }
    state.step += 1;
    for k in 0..params.weights.len() {
        update_slice(
            params.weights[k].as_slice_mut().unwrap(),
            grads.weights[k].as_slice().unwrap(),
            state.m_w[k].as_slice_mut().unwrap(),
            state.v_w[k].as_slice_mut().unwrap(),
            state.lr,
            state.beta1,
            state.beta2,
            state.epsilon,
            state.step,
        );
        update_slice(
            params.biases[k].as_slice_mut().unwrap(),
            grads.biases[k].as_slice().unwrap(),
            state.m_b[k].as_slice_mut().unwrap(),
            state.v_b[k].as_slice_mut().unwrap(),
            state.lr,
            state.beta1,
            state.beta2,
            state.epsilon,
            state.step,
        );
    }
    Ok(())
}

/// Adam over a flat parameter vector, used where parameters are not network
/// weights (for example variational means and scales).
#[derive(Debug, Clone)]
pub struct FlatAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Array1<f64>,
    v: Array1<f64>,
}

impl FlatAdam {
    pub fn new(lr: f64, dim: usize) -> Self {
        FlatAdam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Array1::zeros(dim),
            v: Array1::zeros(dim),
        }
    }

    pub fn step(&mut self, params: &mut Array1<f64>, grads: &Array1<f64>) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "flat adam gradients",
                expected: self.m.len(),
                actual: grads.len(),
            });
        }
        if grads.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite {
                context: "adam gradients",
                location: format!("step {}", self.step + 1),
            });
        }
        self.step += 1;
        update_slice(
            params.as_slice_mut().unwrap(),
            grads.as_slice().unwrap(),
            self.m.as_slice_mut().unwrap(),
            self.v.as_slice_mut().unwrap(),
            self.lr,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.step,
        );
        Ok(())
    }
}
