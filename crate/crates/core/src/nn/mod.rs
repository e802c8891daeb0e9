//! Fully connected networks in f64 with two differentiation paths:
//!
//! * forward-mode tangents through the batch, giving `d(output)/d(time input)`
//!   exactly (no finite-difference step), and
//! * reverse-mode gradients with respect to every weight and bias, including
//!   reverse-over-forward so losses may depend on the time derivative itself.
//!
//! Hidden layers use tanh; the output layer is linear. Weights are stored
//! row-major, `weights[k]` has shape `(layer_sizes[k+1], layer_sizes[k])`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod adam;
pub mod checkpoint;

pub use adam::{adam_step, AdamState, FlatAdam};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layer_sizes: Vec<usize>,
    /// `weights[k]` maps layer `k` activations to layer `k+1` pre-activations.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

impl NetworkParams {
    /// Glorot/Xavier uniform initialization: `U(-l, l)` with
    /// `l = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut m = Array2::zeros((fan_out, fan_in));
            for e in m.iter_mut() {
                *e = rng.gen_range(-limit..limit);
            }
            weights.push(m);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(NetworkParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Tanh,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes.windows(2).map(|w| Array1::zeros(w[1])).collect();
        Ok(NetworkParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Tanh,
        })
    }

    fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least input and output layers, got sizes {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "zero-width layer in sizes {layer_sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    /// Layer-major flattening: weights of layer 0 row-major, then its biases,
    /// then layer 1, and so on. `from_flat` is the exact inverse.
    pub fn flatten(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        Array1::from_vec(out)
    }

    pub fn from_flat(layer_sizes: &[usize], flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        if flat.len() != params.n_params() {
            return Err(Error::DimensionMismatch {
                context: "from_flat",
                expected: params.n_params(),
                actual: flat.len(),
            });
        }
        let mut idx = 0;
        for k in 0..params.weights.len() {
            for e in params.weights[k].iter_mut() {
                *e = flat[idx];
                idx += 1;
            }
            for e in params.biases[k].iter_mut() {
                *e = flat[idx];
                idx += 1;
            }
        }
        Ok(params)
    }
}

/// Gradients with the same shapes as [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        ParamGrads {
            weights: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.dim())).collect(),
        }
    }

    pub fn flatten(&self) -> Array1<f64> {
        let n: usize = self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>();
        let mut out = Vec::with_capacity(n);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        Array1::from_vec(out)
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|e| e * c);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|e| e * c);
        }
    }
}

/// Batch of network outputs together with their derivatives with respect to
/// the designated time input column.
#[derive(Debug, Clone)]
pub struct DualBatch {
    pub values: Array2<f64>,
    pub tangents: Array2<f64>,
}

/// Cached intermediates from a forward pass, consumed by [`backprop`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Post-activation values per layer; `activations[0]` is the input batch.
    activations: Vec<Array2<f64>>,
    /// Pre-activation tangents `dz_k` for each layer, present when the pass
    /// propagated time derivatives.
    pre_tangents: Option<Vec<Array2<f64>>>,
    time_column: Option<usize>,
}

fn check_input(params: &NetworkParams, inputs: &Array2<f64>) -> Result<()> {
    if inputs.ncols() != params.in_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: params.in_dim(),
            actual: inputs.ncols(),
        });
    }
    Ok(())
}

/// Output batch, optional tangent batch, optional backprop trace.
type ForwardParts = (Array2<f64>, Option<Array2<f64>>, Option<ForwardTrace>);

fn run_forward(
    params: &NetworkParams,
    inputs: &Array2<f64>,
    time_column: Option<usize>,
    keep_trace: bool,
) -> Result<ForwardParts> {
    check_input(params, inputs)?;
    if let Some(col) = time_column {
        if col >= params.in_dim() {
            return Err(Error::Config(format!(
                "time column {col} out of range for input dim {}",
                params.in_dim()
            )));
        }
    }
    let n_layers = params.n_layers();
    let batch = inputs.nrows();

    let mut a = inputs.to_owned();
    let mut da = time_column.map(|col| {
        let mut seed = Array2::zeros((batch, params.in_dim()));
        seed.column_mut(col).fill(1.0);
        seed
    });

    let mut activations = Vec::new();
    let mut pre_tangents = time_column.map(|_| Vec::new());
    if keep_trace {
        activations.push(a.clone());
    }

    for k in 0..n_layers {
        let w = &params.weights[k];
        let b = &params.biases[k];
        let mut z = a.dot(&w.t());
        z += b;
        let dz = da.as_ref().map(|d| d.dot(&w.t()));

        if k < n_layers - 1 {
            // Hidden layer: tanh. Tangent uses tanh'(z) = 1 - tanh(z)^2.
            a = z.mapv(f64::tanh);
            if let Some(dz) = &dz {
                let mut d = dz.clone();
                Zip::from(&mut d).and(&a).for_each(|t, &h| *t *= 1.0 - h * h);
                da = Some(d);
            }
        } else {
            // Linear output layer.
            a = z;
            da = dz.clone();
        }

        if keep_trace {
            activations.push(a.clone());
            if let (Some(store), Some(dz)) = (pre_tangents.as_mut(), dz) {
                store.push(dz);
            }
        }
    }

    let trace = keep_trace.then(|| ForwardTrace {
        activations,
        pre_tangents,
        time_column,
    });
    Ok((a, da, trace))
}

/// Plain batched forward pass.
pub fn forward(params: &NetworkParams, inputs: &Array2<f64>) -> Result<Array2<f64>> {
    let (values, _, _) = run_forward(params, inputs, None, false)?;
    Ok(values)
}

/// Activations feeding the output layer: the last hidden layer's values, or
/// the input batch itself for a single-layer network.
pub fn last_hidden(params: &NetworkParams, inputs: &Array2<f64>) -> Result<Array2<f64>> {
    let (_, _, trace) = run_forward(params, inputs, None, true)?;
    let mut activations = trace.expect("trace requested").activations;
    activations.truncate(params.n_layers());
    Ok(activations.pop().expect("non-empty trace"))
}

/// Forward pass carrying exact `d(output)/d(inputs[:, time_column])` tangents.
pub fn forward_with_time_derivative(
    params: &NetworkParams,
    inputs: &Array2<f64>,
    time_column: usize,
) -> Result<DualBatch> {
    let (values, tangents, _) = run_forward(params, inputs, Some(time_column), false)?;
    Ok(DualBatch {
        values,
        tangents: tangents.unwrap(),
    })
}

/// Forward pass that records the intermediates needed for [`backprop`].
/// Tangent propagation is included when `time_column` is given.
pub fn forward_traced(
    params: &NetworkParams,
    inputs: &Array2<f64>,
    time_column: Option<usize>,
) -> Result<(Array2<f64>, Option<Array2<f64>>, ForwardTrace)> {
    let (values, tangents, trace) = run_forward(params, inputs, time_column, true)?;
    Ok((values, tangents, trace.unwrap()))
}

/// Reverse-mode gradients of a scalar loss with respect to all parameters.
///
/// `upstream_values[b, i]` is `dL/d(values[b, i])`; `upstream_tangents`, when
/// present, is `dL/d(tangents[b, i])` and requires a trace built with a time
/// column. Gradients of both paths accumulate into the same parameter slots.
pub fn backprop(
    params: &NetworkParams,
    trace: &ForwardTrace,
    upstream_values: &Array2<f64>,
    upstream_tangents: Option<&Array2<f64>>,
) -> Result<ParamGrads> {
    let n_layers = params.n_layers();
    if trace.activations.len() != n_layers + 1 {
        return Err(Error::Config(
            "trace does not match network depth".to_string(),
        ));
    }
    let batch = trace.activations[0].nrows();
    if upstream_values.dim() != (batch, params.out_dim()) {
        return Err(Error::DimensionMismatch {
            context: "backprop upstream values",
            expected: params.out_dim(),
            actual: upstream_values.ncols(),
        });
    }
    let with_tangents = upstream_tangents.is_some();
    if with_tangents && trace.pre_tangents.is_none() {
        return Err(Error::Config(
            "upstream tangents supplied but trace has no tangent path".to_string(),
        ));
    }

    let mut grads = ParamGrads::zeros_like(params);
    let mut ga = upstream_values.to_owned();
    let mut gda = upstream_tangents.map(|u| u.to_owned());

    for k in (0..n_layers).rev() {
        let a_out = &trace.activations[k + 1];
        let (gz, gdz) = if k == n_layers - 1 {
            (ga, gda)
        } else {
            // Invert tanh: h = tanh(z), dh = s * dz with s = 1 - h^2.
            // dL/dz collects the value path (ga * s) and, through the tangent
            // path, the z-dependence of s: d(s)/dz = -2 h s.
            let s = a_out.mapv(|h| 1.0 - h * h);
            let mut gz = &ga * &s;
            let mut gdz_opt = None;
            if let Some(gda) = &gda {
                let dz = &trace.pre_tangents.as_ref().unwrap()[k];
                Zip::from(&mut gz)
                    .and(gda)
                    .and(dz)
                    .and(a_out)
                    .and(&s)
                    .for_each(|g, &gd, &t, &h, &sv| *g += gd * t * (-2.0 * h * sv));
                gdz_opt = Some(gda * &s);
            }
            (gz, gdz_opt)
        };

        let a_in = &trace.activations[k];
        grads.weights[k] = gz.t().dot(a_in);
        grads.biases[k] = gz.sum_axis(Axis(0));
        if let Some(gdz) = &gdz {
            // Input tangent of this layer: the seed for k = 0, otherwise the
            // post-activation tangent s_in * dz_in of the previous layer.
            let da_in = if k == 0 {
                let col = trace.time_column.unwrap();
                let mut seed = Array2::zeros((batch, params.in_dim()));
                seed.column_mut(col).fill(1.0);
                seed
            } else {
                let dz_in = &trace.pre_tangents.as_ref().unwrap()[k - 1];
                let mut d = dz_in.clone();
                Zip::from(&mut d)
                    .and(&trace.activations[k])
                    .for_each(|t, &h| *t *= 1.0 - h * h);
                d
            };
            grads.weights[k] += &gdz.t().dot(&da_in);
        }

        if k > 0 {
            ga = gz.dot(&params.weights[k]);
            gda = gdz.map(|g| g.dot(&params.weights[k]));
        } else {
            ga = gz;
            gda = gdz;
        }
    }

    Ok(grads)
}
