//! Step-one deterministic bundle training.
//!
//! Minimizes the unweighted mean squared residual of the IC-enforced network
//! over freshly sampled `(x, λ)` batches. The enforced output is
//! `ũ(x, λ) = u_0(λ) + c(x)·u_θ(x, λ)` and the residual is
//! `r̃ = dũ/dx − rhs(x, ũ, λ)`, where `dũ/dx` carries both the coefficient
//! derivative and the network's exact input tangent.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelId, ModelSpec};
use crate::nn::{self, AdamState, ForwardTrace, NetworkParams, ParamGrads};
use crate::rngutil;

/// Configuration for one deterministic training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_id: ModelId,
    /// Hidden layer widths; input and output sizes come from the model.
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub samples_per_dim: usize,
    pub lr: f64,
    /// Optional step-size floor: the rate decays exponentially from `lr` to
    /// this value over the run. `None` keeps `lr` constant throughout.
    #[serde(default)]
    pub lr_floor: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    /// Full layer sizes for this model: `[1 + p, hidden..., state_dim]`.
    pub fn layer_sizes(&self, spec: &ModelSpec) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(spec.input_dim());
        sizes.extend_from_slice(&self.hidden);
        sizes.push(spec.state_dim);
        sizes
    }

    fn validate(&self, resuming: bool) -> Result<()> {
        if self.samples_per_dim == 0 {
            return Err(Error::Config("samples_per_dim must be positive".into()));
        }
        if self.iterations == 0 && !resuming {
            return Err(Error::Config(
                "iterations must be positive for a fresh run".into(),
            ));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be a positive finite number, got {}",
                self.lr
            )));
        }
        if let Some(floor) = self.lr_floor {
            if !floor.is_finite() || floor <= 0.0 || floor > self.lr {
                return Err(Error::Config(format!(
                    "lr floor must lie in (0, lr], got {floor} with lr {}",
                    self.lr
                )));
            }
        }
        Ok(())
    }
}

/// A trained deterministic solution bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetSolution {
    pub params: NetworkParams,
    pub spec: ModelSpec,
    pub train_config: TrainConfig,
    /// Mean squared residual on a fresh batch drawn after the last step.
    pub final_loss: f64,
    /// `(iteration, batch loss)` recorded every 100 iterations.
    pub loss_history: Vec<(usize, f64)>,
}

impl DetSolution {
    /// IC-enforced bundle values at `points` (rows of `[x, λ...]`).
    pub fn evaluate(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        enforced_values(&self.spec, &self.params, points)
    }

    /// IC-enforced values together with their exact x-derivatives.
    pub fn evaluate_with_tangent(&self, points: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        enforced_values_and_tangents(&self.spec, &self.params, points)
    }
}

/// Uniform Cartesian-product batch over the training region: one draw set of
/// `samples_per_dim` values per dimension (independent variable first, then
/// each bundle parameter), combined into `samples_per_dim^(1+p)` rows.
pub fn sample_batch<R: Rng + ?Sized>(
    spec: &ModelSpec,
    samples_per_dim: usize,
    rng: &mut R,
) -> Array2<f64> {
    let p = spec.n_bundle_params();
    let n = samples_per_dim;
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(1 + p);
    let (x_lo, x_hi) = spec.train_range;
    axes.push((0..n).map(|_| rng.gen_range(x_lo..x_hi)).collect());
    for &(lo, hi) in &spec.bundle_param_box {
        axes.push((0..n).map(|_| rng.gen_range(lo..hi)).collect());
    }

    let rows = n.pow((1 + p) as u32);
    let mut out = Array2::zeros((rows, 1 + p));
    for r in 0..rows {
        // Row-major product order: the last dimension cycles fastest.
        let mut idx = r;
        for d in (0..=p).rev() {
            out[[r, d]] = axes[d][idx % n];
            idx /= n;
        }
    }
    out
}

/// Enforced batch evaluation with everything the residual and its parameter
/// gradient need: raw outputs, tangents, the forward trace, the enforcement
/// coefficient and its derivative, and the enforced values/derivatives.
struct BatchEval {
    trace: ForwardTrace,
    c: Array1<f64>,
    dc: Array1<f64>,
    utilde: Array2<f64>,
    dutilde: Array2<f64>,
}

fn eval_enforced(
    spec: &ModelSpec,
    params: &NetworkParams,
    batch: &Array2<f64>,
) -> Result<BatchEval> {
    if batch.ncols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "training batch columns",
            expected: spec.input_dim(),
            actual: batch.ncols(),
        });
    }
    if params.out_dim() != spec.state_dim {
        return Err(Error::DimensionMismatch {
            context: "network output dimension",
            expected: spec.state_dim,
            actual: params.out_dim(),
        });
    }
    let (raw, raw_t, trace) = nn::forward_traced(params, batch, Some(0))?;
    let raw_t = raw_t.expect("tangents requested");
    let b = batch.nrows();
    let d = spec.state_dim;
    let mut c = Array1::zeros(b);
    let mut dc = Array1::zeros(b);
    let mut utilde = Array2::zeros((b, d));
    let mut dutilde = Array2::zeros((b, d));
    let mut lam = vec![0.0; spec.n_bundle_params()];
    for i in 0..b {
        let x = batch[[i, 0]];
        for (j, l) in lam.iter_mut().enumerate() {
            *l = batch[[i, j + 1]];
        }
        let u0 = spec.initial_state(&lam)?;
        let (ci, dci) = spec.enforce_coefficient(x);
        c[i] = ci;
        dc[i] = dci;
        for k in 0..d {
            utilde[[i, k]] = u0[k] + ci * raw[[i, k]];
            dutilde[[i, k]] = dci * raw[[i, k]] + ci * raw_t[[i, k]];
        }
    }
    Ok(BatchEval {
        trace,
        c,
        dc,
        utilde,
        dutilde,
    })
}

/// IC-enforced bundle values at `points`.
pub fn enforced_values(
    spec: &ModelSpec,
    params: &NetworkParams,
    points: &Array2<f64>,
) -> Result<Array2<f64>> {
    let ev = eval_enforced(spec, params, points)?;
    Ok(ev.utilde)
}

/// IC-enforced values and their exact derivatives with respect to the
/// independent variable.
pub fn enforced_values_and_tangents(
    spec: &ModelSpec,
    params: &NetworkParams,
    points: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let ev = eval_enforced(spec, params, points)?;
    Ok((ev.utilde, ev.dutilde))
}

/// Residual of the enforced network at a single `(x, λ)` point.
pub fn residual(
    spec: &ModelSpec,
    params: &NetworkParams,
    x: f64,
    lam: &[f64],
) -> Result<Vec<f64>> {
    let mut row = Array2::zeros((1, spec.input_dim()));
    row[[0, 0]] = x;
    for (j, &l) in lam.iter().enumerate() {
        row[[0, j + 1]] = l;
    }
    let ev = eval_enforced(spec, params, &row)?;
    let u: Vec<f64> = ev.utilde.row(0).to_vec();
    let rhs = spec.rhs(x, &u, lam)?;
    Ok((0..spec.state_dim)
        .map(|k| ev.dutilde[[0, k]] - rhs[k])
        .collect())
}

/// Residuals of the enforced network at every row of `points`.
pub fn residuals_on(
    spec: &ModelSpec,
    params: &NetworkParams,
    points: &Array2<f64>,
) -> Result<Array2<f64>> {
    let ev = eval_enforced(spec, params, points)?;
    let b = points.nrows();
    let d = spec.state_dim;
    let mut res = Array2::zeros((b, d));
    let mut lam = vec![0.0; spec.n_bundle_params()];
    for i in 0..b {
        for (j, l) in lam.iter_mut().enumerate() {
            *l = points[[i, j + 1]];
        }
        let u: Vec<f64> = ev.utilde.row(i).to_vec();
        let rhs = spec.rhs(points[[i, 0]], &u, &lam)?;
        for k in 0..d {
            res[[i, k]] = ev.dutilde[[i, k]] - rhs[k];
        }
    }
    Ok(res)
}

/// Residual from externally supplied solution values and derivative; lets a
/// closed-form solution be checked against the same defining equation.
pub fn residual_from_values(
    spec: &ModelSpec,
    x: f64,
    u: &[f64],
    du: &[f64],
    lam: &[f64],
) -> Result<Vec<f64>> {
    if du.len() != u.len() {
        return Err(Error::DimensionMismatch {
            context: "residual_from_values derivative",
            expected: u.len(),
            actual: du.len(),
        });
    }
    let rhs = spec.rhs(x, u, lam)?;
    Ok(du.iter().zip(&rhs).map(|(d, r)| d - r).collect())
}

/// Mean over the batch of the squared residual summed over state components.
pub fn residual_loss(spec: &ModelSpec, params: &NetworkParams, batch: &Array2<f64>) -> Result<f64> {
    let res = residuals_on(spec, params, batch)?;
    Ok(res.mapv(|r| r * r).sum() / batch.nrows() as f64)
}

/// Residual loss together with its exact parameter gradient.
///
/// With `g = (2/B)·r̃`, the upstream sensitivities entering reverse mode are
/// `∂L/∂u_θ = g·c' − c·(Jᵀg)` (J the rhs state Jacobian at the enforced
/// point) and `∂L/∂(du_θ/dx) = g·c`.
pub fn residual_loss_and_grads(
    spec: &ModelSpec,
    params: &NetworkParams,
    batch: &Array2<f64>,
) -> Result<(f64, ParamGrads)> {
    let ev = eval_enforced(spec, params, batch)?;
    let b = batch.nrows();
    let d = spec.state_dim;
    let scale = 2.0 / b as f64;
    let mut loss = 0.0;
    let mut up_values = Array2::zeros((b, d));
    let mut up_tangents = Array2::zeros((b, d));
    let mut lam = vec![0.0; spec.n_bundle_params()];
    let mut g = vec![0.0; d];
    for i in 0..b {
        for (j, l) in lam.iter_mut().enumerate() {
            *l = batch[[i, j + 1]];
        }
        let u: Vec<f64> = ev.utilde.row(i).to_vec();
        let (rhs, jac) = spec.rhs_jacobian(batch[[i, 0]], &u, &lam)?;
        for k in 0..d {
            let r = ev.dutilde[[i, k]] - rhs[k];
            loss += r * r;
            g[k] = scale * r;
        }
        for k in 0..d {
            let mut jtg = 0.0;
            for m in 0..d {
                jtg += jac[[m, k]] * g[m];
            }
            up_values[[i, k]] = g[k] * ev.dc[i] - ev.c[i] * jtg;
            up_tangents[[i, k]] = g[k] * ev.c[i];
        }
    }
    loss /= b as f64;
    let grads = nn::backprop(params, &ev.trace, &up_values, Some(&up_tangents))?;
    Ok((loss, grads))
}

/// Train a bundle network from scratch with the model's default ranges.
pub fn train(cfg: &TrainConfig) -> Result<DetSolution> {
    train_with_spec(cfg, ModelSpec::new(cfg.model_id), None)
}

/// Train against an explicit `ModelSpec` (custom ranges or fiducial values),
/// optionally resuming from existing parameters. With `init` present,
/// `iterations` may be zero; the returned solution then carries the input
/// parameters unchanged, with a freshly evaluated `final_loss`.
pub fn train_with_spec(
    cfg: &TrainConfig,
    spec: ModelSpec,
    init: Option<NetworkParams>,
) -> Result<DetSolution> {
    cfg.validate(init.is_some())?;
    if spec.id != cfg.model_id {
        return Err(Error::Config(format!(
            "config model {} does not match spec model {}",
            cfg.model_id, spec.id
        )));
    }
    let sizes = cfg.layer_sizes(&spec);
    let mut params = match init {
        Some(p) => {
            if p.layer_sizes != sizes {
                return Err(Error::Config(format!(
                    "resume parameters have layers {:?}, config wants {:?}",
                    p.layer_sizes, sizes
                )));
            }
            p
        }
        None => NetworkParams::glorot(&sizes, &mut rngutil::stream_rng(cfg.seed, "train-init"))?,
    };
    let mut batch_rng = rngutil::stream_rng(cfg.seed, "train-batches");
    let mut adam = AdamState::new(cfg.lr, &params);
    let mut loss_history = Vec::new();

    for it in 1..=cfg.iterations {
        if let Some(floor) = cfg.lr_floor {
            let frac = it as f64 / cfg.iterations as f64;
            adam.lr = cfg.lr * (floor / cfg.lr).powf(frac);
        }
        let batch = sample_batch(&spec, cfg.samples_per_dim, &mut batch_rng);
        let (loss, grads) = residual_loss_and_grads(&spec, &params, &batch)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                loss,
            });
        }
        nn::adam_step(&mut adam, &mut params, &grads)?;
        if it % 100 == 0 {
            log::debug!("{} iteration {it}: loss {loss:.3e}", spec.id);
            loss_history.push((it, loss));
        }
    }

    let final_batch = sample_batch(&spec, cfg.samples_per_dim, &mut batch_rng);
    let final_loss = residual_loss(&spec, &params, &final_batch)?;
    Ok(DetSolution {
        params,
        spec,
        train_config: cfg.clone(),
        final_loss,
        loss_history,
    })
}
