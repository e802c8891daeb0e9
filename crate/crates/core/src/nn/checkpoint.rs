//! Checkpoint files: a single JSON document holding the architecture and all
//! parameters. Floats are written in shortest round-trip decimal form, so a
//! save/load cycle reproduces every bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Activation, NetworkParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model_id: String,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    /// One flat row-major array per layer, shape `(layer_sizes[k+1], layer_sizes[k])`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations_trained: u64,
}

impl Checkpoint {
    pub fn from_params(
        params: &NetworkParams,
        model_id: &str,
        seed: u64,
        iterations_trained: u64,
    ) -> Self {
        Checkpoint {
            model_id: model_id.to_string(),
            layer_sizes: params.layer_sizes.clone(),
            activation: "tanh".to_string(),
            weights: params
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: params
                .biases
                .iter()
                .map(|b| b.to_vec())
                .collect(),
            seed,
            iterations_trained,
        }
    }

    pub fn into_params(self) -> Result<NetworkParams> {
        if self.activation != "tanh" {
            return Err(Error::Config(format!(
                "unsupported activation {:?}; supported: \"tanh\"",
                self.activation
            )));
        }
        NetworkParams::validate_sizes(&self.layer_sizes)?;
        let n_layers = self.layer_sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(Error::Config(format!(
                "checkpoint holds {} weight and {} bias arrays for {} layers",
                self.weights.len(),
                self.biases.len(),
                n_layers
            )));
        }
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for (k, (w, b)) in self.weights.into_iter().zip(self.biases).enumerate() {
            let (rows, cols) = (self.layer_sizes[k + 1], self.layer_sizes[k]);
            if w.len() != rows * cols {
                return Err(Error::Config(format!(
                    "layer {k} weights: expected {rows}x{cols} = {} entries, got {}",
                    rows * cols,
                    w.len()
                )));
            }
            if b.len() != rows {
                return Err(Error::Config(format!(
                    "layer {k} biases: expected {rows} entries, got {}",
                    b.len()
                )));
            }
            weights.push(
                Array2::from_shape_vec((rows, cols), w)
                    .map_err(|e| Error::Config(format!("layer {k} weights: {e}")))?,
            );
            biases.push(Array1::from_vec(b));
        }
        Ok(NetworkParams {
            layer_sizes: self.layer_sizes,
            weights,
            biases,
            activation: Activation::Tanh,
        })
    }
}

pub fn save_checkpoint(
    params: &NetworkParams,
    model_id: &str,
    seed: u64,
    iterations_trained: u64,
    path: &Path,
) -> Result<()> {
    let ckpt = Checkpoint::from_params(params, model_id, seed, iterations_trained);
    let json = serde_json::to_string_pretty(&ckpt)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkParams, Checkpoint)> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    let params = ckpt.clone().into_params()?;
    Ok((params, ckpt))
}
