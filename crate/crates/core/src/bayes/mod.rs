//! Step-two Bayesian uncertainty over the deterministic bundle.
//!
//! The trained network from step one supplies a supervised dataset
//! `(x, λ) → ũ_det(x, λ)`; a posterior over the weights of a second network
//! is then built by one of three approximations: a neural linear model
//! (exact conjugate posterior over the output layer on frozen features),
//! mean-field variational inference, or the No-U-Turn sampler. The
//! likelihood width per point is either a constant, the certified error
//! bound at `(x, λ)`, or a fixed width on equation residuals (baseline).
//!
//! Except for the residual baseline, second-step networks predict the
//! IC-enforced output directly: the targets already include enforcement, and
//! the near-zero likelihood width at the domain start pins predictive draws
//! to the initial condition. The residual baseline instead treats the second
//! network as an enforced solver and scores its equation residuals.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundTableSet;
use crate::error::{Error, Result};
use crate::models::{ModelId, ModelSpec};
use crate::nn::{self, NetworkParams, ParamGrads};
use crate::train::{self, DetSolution};

pub mod bbb;
pub mod nlm;
pub mod nuts;

pub use bbb::{bbb_train, BbbConfig};
pub use nlm::{nlm_fit, nlm_predict, NlmHead};
pub use nuts::{nuts_sample, NutsDiagnostics, NutsResult};

/// Supervised dataset for step two: deterministic bundle outputs as targets,
/// with a positive likelihood standard deviation per target entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupervisedSet {
    /// Rows of `[x, λ...]`.
    pub inputs: Array2<f64>,
    /// IC-enforced deterministic outputs at `inputs`.
    pub targets: Array2<f64>,
    /// Likelihood std per target entry, positive after the floor clamp.
    pub sigma_like: Array2<f64>,
    /// Width floor applied where the raw width would vanish.
    pub sigma_floor: f64,
}

impl SupervisedSet {
    pub fn new(
        inputs: Array2<f64>,
        targets: Array2<f64>,
        sigma_like: Array2<f64>,
        sigma_floor: f64,
    ) -> Result<Self> {
        if targets.nrows() != inputs.nrows() {
            return Err(Error::DimensionMismatch {
                context: "supervised set target rows",
                expected: inputs.nrows(),
                actual: targets.nrows(),
            });
        }
        if sigma_like.dim() != targets.dim() {
            return Err(Error::DimensionMismatch {
                context: "supervised set sigma rows",
                expected: targets.len(),
                actual: sigma_like.len(),
            });
        }
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma floor must be positive and finite, got {sigma_floor}"
            )));
        }
        if sigma_like.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config(
                "sigma_like must be positive and finite elementwise".into(),
            ));
        }
        Ok(SupervisedSet {
            inputs,
            targets,
            sigma_like,
            sigma_floor,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// Observation model attached to the step-two dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LikelihoodSpec {
    /// Constant noise std on every target entry.
    Homoscedastic(f64),
    /// Heteroscedastic noise equal to the certified error bound at `(x, λ)`,
    /// clamped below by the dataset's width floor.
    ErrorBoundHetero(BoundTableSet),
    /// Gaussian over equation residuals with a fixed width; puts no noise
    /// model on the targets themselves.
    ResidualBaseline(f64),
}

impl LikelihoodSpec {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        match self {
            LikelihoodSpec::Homoscedastic(s) | LikelihoodSpec::ResidualBaseline(s) => {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(Error::Config(format!(
                        "likelihood std must be positive and finite, got {s}"
                    )));
                }
            }
            LikelihoodSpec::ErrorBoundHetero(tables) => {
                if !matches!(spec.id, ModelId::Lcdm | ModelId::Cpl) {
                    return Err(Error::Config(format!(
                        "error-bound likelihood needs a model with certified bounds; {} has none",
                        spec.id
                    )));
                }
                let dim = tables.tables[0].lambda.len();
                if dim != spec.n_bundle_params() {
                    return Err(Error::DimensionMismatch {
                        context: "bound table lambda dimension",
                        expected: spec.n_bundle_params(),
                        actual: dim,
                    });
                }
            }
        }
        Ok(())
    }

    /// True for the baseline whose likelihood lives on residuals rather than
    /// on the targets.
    pub fn is_residual(&self) -> bool {
        matches!(self, LikelihoodSpec::ResidualBaseline(_))
    }
}

/// Likelihood std at arbitrary points: the constant for the homoscedastic
/// model, the tabulated error bound clamped to `floor` for the
/// heteroscedastic one, and the nominal residual width for the baseline
/// (whose likelihood does not actually read per-point widths).
pub fn sigma_at(
    like: &LikelihoodSpec,
    points: &Array2<f64>,
    state_dim: usize,
    floor: f64,
) -> Result<Array2<f64>> {
    let q = points.nrows();
    let mut sig = Array2::zeros((q, state_dim));
    match like {
        LikelihoodSpec::Homoscedastic(s) | LikelihoodSpec::ResidualBaseline(s) => sig.fill(*s),
        LikelihoodSpec::ErrorBoundHetero(tables) => {
            let mut lam = vec![0.0; points.ncols() - 1];
            for i in 0..q {
                for (j, l) in lam.iter_mut().enumerate() {
                    *l = points[[i, j + 1]];
                }
                let b = tables.bound_at(points[[i, 0]], &lam)?.max(floor);
                for k in 0..state_dim {
                    sig[[i, k]] = b;
                }
            }
        }
    }
    Ok(sig)
}

/// Sample a supervised dataset from the trained deterministic bundle: inputs
/// drawn like a training batch, targets from the enforced network, widths
/// from the likelihood. The width floor is `1e-6 · max(1, max |target|)`, so
/// a bound that vanishes at the domain start still yields a proper Gaussian.
pub fn build_dataset<R: Rng + ?Sized>(
    det: &DetSolution,
    like: &LikelihoodSpec,
    n_per_dim: usize,
    rng: &mut R,
) -> Result<SupervisedSet> {
    like.validate(&det.spec)?;
    if n_per_dim == 0 {
        return Err(Error::Config("n_per_dim must be positive".into()));
    }
    let inputs = train::sample_batch(&det.spec, n_per_dim, rng);
    let targets = det.evaluate(&inputs)?;
    let scale = targets.iter().fold(1.0_f64, |m, &t| m.max(t.abs()));
    let floor = 1e-6 * scale;
    let sigma_like = sigma_at(like, &inputs, det.spec.state_dim, floor)?;
    SupervisedSet::new(inputs, targets, sigma_like, floor)
}

fn half_ln_tau() -> f64 {
    0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Sum over all points and components of `log N(target | prediction, σ)`.
pub fn gaussian_loglik(set: &SupervisedSet, predictions: &Array2<f64>) -> Result<f64> {
    if predictions.dim() != set.targets.dim() {
        return Err(Error::DimensionMismatch {
            context: "gaussian_loglik predictions",
            expected: set.targets.len(),
            actual: predictions.len(),
        });
    }
    let c = half_ln_tau();
    let mut ll = 0.0;
    for ((t, p), s) in set
        .targets
        .iter()
        .zip(predictions.iter())
        .zip(set.sigma_like.iter())
    {
        let z = (t - p) / s;
        ll += -c - s.ln() - 0.5 * z * z;
    }
    Ok(ll)
}

/// [`gaussian_loglik`] of a plain network forward pass, together with its
/// exact gradient with respect to the network parameters.
pub fn gaussian_loglik_and_grad(
    set: &SupervisedSet,
    params: &NetworkParams,
) -> Result<(f64, ParamGrads)> {
    let (pred, _, trace) = nn::forward_traced(params, &set.inputs, None)?;
    if pred.dim() != set.targets.dim() {
        return Err(Error::DimensionMismatch {
            context: "gaussian_loglik predictions",
            expected: set.targets.ncols(),
            actual: pred.ncols(),
        });
    }
    let c = half_ln_tau();
    let mut ll = 0.0;
    let mut upstream = Array2::zeros(pred.dim());
    for i in 0..pred.nrows() {
        for k in 0..pred.ncols() {
            let s = set.sigma_like[[i, k]];
            let diff = set.targets[[i, k]] - pred[[i, k]];
            ll += -c - s.ln() - 0.5 * (diff / s) * (diff / s);
            upstream[[i, k]] = diff / (s * s);
        }
    }
    let grads = nn::backprop(params, &trace, &upstream, None)?;
    Ok((ll, grads))
}

fn check_sigma_r(sigma_r: f64) -> Result<()> {
    if !(sigma_r.is_finite() && sigma_r > 0.0) {
        return Err(Error::Config(format!(
            "residual likelihood std must be positive and finite, got {sigma_r}"
        )));
    }
    Ok(())
}

/// Gaussian log-density of the enforced network's equation residuals around
/// zero with std `sigma_r`, summed over batch rows and state components.
pub fn residual_loglik(
    spec: &ModelSpec,
    params: &NetworkParams,
    batch: &Array2<f64>,
    sigma_r: f64,
) -> Result<f64> {
    check_sigma_r(sigma_r)?;
    let mean_sq = train::residual_loss(spec, params, batch)?;
    let b = batch.nrows() as f64;
    let entries = b * spec.state_dim as f64;
    Ok(-b * mean_sq / (2.0 * sigma_r * sigma_r) - entries * (half_ln_tau() + sigma_r.ln()))
}

/// [`residual_loglik`] with its exact parameter gradient. The mean squared
/// residual already has a gradient path; the log-likelihood is an affine
/// function of it: `ll = -B·L/(2σ_r²) + const`.
pub fn residual_loglik_and_grad(
    spec: &ModelSpec,
    params: &NetworkParams,
    batch: &Array2<f64>,
    sigma_r: f64,
) -> Result<(f64, ParamGrads)> {
    check_sigma_r(sigma_r)?;
    let (mean_sq, mut grads) = train::residual_loss_and_grads(spec, params, batch)?;
    let b = batch.nrows() as f64;
    let entries = b * spec.state_dim as f64;
    let ll = -b * mean_sq / (2.0 * sigma_r * sigma_r) - entries * (half_ln_tau() + sigma_r.ln());
    grads.scale(-b / (2.0 * sigma_r * sigma_r));
    Ok((ll, grads))
}

/// Feature map for the neural linear model: last hidden activations of the
/// deterministic net with an appended constant-1 feature, giving the
/// Bayesian output layer a bias.
pub fn nlm_features(feature_net: &NetworkParams, points: &Array2<f64>) -> Result<Array2<f64>> {
    let hidden = nn::last_hidden(feature_net, points)?;
    let (q, f) = hidden.dim();
    let mut phi = Array2::ones((q, f + 1));
    phi.slice_mut(s![.., ..f]).assign(&hidden);
    Ok(phi)
}

fn check_net_matches_set(layer_sizes: &[usize], set: &SupervisedSet) -> Result<()> {
    if layer_sizes.first() != Some(&set.inputs.ncols()) {
        return Err(Error::DimensionMismatch {
            context: "step-two net input width",
            expected: set.inputs.ncols(),
            actual: layer_sizes.first().copied().unwrap_or(0),
        });
    }
    if layer_sizes.last() != Some(&set.targets.ncols()) {
        return Err(Error::DimensionMismatch {
            context: "step-two net output width",
            expected: set.targets.ncols(),
            actual: layer_sizes.last().copied().unwrap_or(0),
        });
    }
    Ok(())
}

/// Sample the weight posterior of a step-two network with NUTS. The log
/// target is the chosen likelihood plus an isotropic `N(0, prior_std² I)`
/// prior over all weights and biases. `init` (typically the deterministic
/// optimum) sets the chain start; otherwise Glorot from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn nuts_fit<R: Rng + ?Sized>(
    spec: &ModelSpec,
    layer_sizes: &[usize],
    set: &SupervisedSet,
    like: &LikelihoodSpec,
    prior_std: f64,
    n_samples: usize,
    n_tune: usize,
    init: Option<&NetworkParams>,
    rng: &mut R,
) -> Result<PosteriorHandle> {
    like.validate(spec)?;
    check_net_matches_set(layer_sizes, set)?;
    if !(prior_std.is_finite() && prior_std > 0.0) {
        return Err(Error::Config(format!(
            "prior std must be positive and finite, got {prior_std}"
        )));
    }
    let theta0 = match init {
        Some(p) => {
            if p.layer_sizes != layer_sizes {
                return Err(Error::Config(format!(
                    "initial parameters have layers {:?}, expected {:?}",
                    p.layer_sizes, layer_sizes
                )));
            }
            p.flatten()
        }
        None => NetworkParams::glorot(layer_sizes, rng)?.flatten(),
    };
    let n = theta0.len();
    let sp2 = prior_std * prior_std;
    let prior_norm = n as f64 * (half_ln_tau() + prior_std.ln());

    let logp = |theta: &Array1<f64>| -> Result<(f64, Array1<f64>)> {
        let params = NetworkParams::from_flat(layer_sizes, theta.as_slice().unwrap())?;
        let (ll, grads) = match like {
            LikelihoodSpec::ResidualBaseline(sr) => {
                residual_loglik_and_grad(spec, &params, &set.inputs, *sr)?
            }
            _ => gaussian_loglik_and_grad(set, &params)?,
        };
        let mut g = grads.flatten();
        let mut lp = ll - prior_norm;
        for j in 0..n {
            lp -= theta[j] * theta[j] / (2.0 * sp2);
            g[j] -= theta[j] / sp2;
        }
        Ok((lp, g))
    };
    let out = nuts_sample(logp, &theta0, n_samples, n_tune, rng)?;
    Ok(PosteriorHandle::Nuts {
        layer_sizes: layer_sizes.to_vec(),
        samples: out.samples,
        prior_std,
        sigma_floor: set.sigma_floor,
        enforced_pinn: like.is_residual(),
        diagnostics: out.diagnostics,
    })
}

/// An approximate weight posterior, tagged by the method that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PosteriorHandle {
    /// Exact Gaussian posterior over a linear output layer on the frozen
    /// deterministic features, one independent head per state component.
    Nlm {
        feature_net: NetworkParams,
        heads: Vec<NlmHead>,
        likelihood: LikelihoodSpec,
        prior_std: f64,
        sigma_floor: f64,
    },
    /// Mean-field Gaussian: per-parameter means and pre-softplus scales.
    Bbb {
        layer_sizes: Vec<usize>,
        mu: Array1<f64>,
        rho: Array1<f64>,
        prior_std: f64,
        sigma_floor: f64,
        /// Whether draws evaluate as IC-enforced solvers (residual baseline)
        /// or as plain networks (gaussian likelihoods).
        enforced_pinn: bool,
        /// One ELBO estimate per training iteration.
        elbo_history: Vec<f64>,
    },
    /// Posterior draws over flattened network parameters, one row per draw.
    Nuts {
        layer_sizes: Vec<usize>,
        samples: Array2<f64>,
        prior_std: f64,
        sigma_floor: f64,
        enforced_pinn: bool,
        diagnostics: NutsDiagnostics,
    },
}

impl PosteriorHandle {
    pub fn method(&self) -> &'static str {
        match self {
            PosteriorHandle::Nlm { .. } => "nlm",
            PosteriorHandle::Bbb { .. } => "bbb",
            PosteriorHandle::Nuts { .. } => "nuts",
        }
    }
}

/// Predictive mean and std fields over a set of query points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictiveSummary {
    /// Rows of `[x, λ...]`.
    pub points: Array2<f64>,
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    /// Per-draw outputs (`Q×state_dim` each), kept on request.
    pub draws: Option<Vec<Array2<f64>>>,
}

pub(crate) fn draw_outputs(
    spec: &ModelSpec,
    params: &NetworkParams,
    points: &Array2<f64>,
    enforced: bool,
) -> Result<Array2<f64>> {
    if enforced {
        train::enforced_values(spec, params, points)
    } else {
        nn::forward(params, points)
    }
}

/// Materialize `m` posterior draws as ordinary networks, with a flag saying
/// whether they must be evaluated as IC-enforced solvers. Neural-linear
/// draws are the feature net with its output layer sampled from the
/// conjugate posterior (the constant feature's weight becomes the layer
/// bias); variational draws are `μ + softplus(ρ)·ε`; chain draws are evenly
/// thinned sample rows.
pub fn posterior_draws<R: Rng + ?Sized>(
    handle: &PosteriorHandle,
    m: usize,
    rng: &mut R,
) -> Result<(Vec<NetworkParams>, bool)> {
    if m == 0 {
        return Err(Error::Config("need at least one posterior draw".into()));
    }
    match handle {
        PosteriorHandle::Nlm {
            feature_net, heads, ..
        } => {
            let last = feature_net.weights.len() - 1;
            let f = feature_net.weights[last].ncols() + 1;
            let chols: Vec<_> = heads
                .iter()
                .map(|head| {
                    if head.mu.len() != f {
                        return Err(Error::DimensionMismatch {
                            context: "posterior head width",
                            expected: f,
                            actual: head.mu.len(),
                        });
                    }
                    let cov = nalgebra::DMatrix::from_fn(f, f, |r, c| head.cov[[r, c]]);
                    nalgebra::Cholesky::new(cov).ok_or_else(|| {
                        Error::Linalg(
                            "posterior covariance is not positive definite; \
                             cannot sample output layers"
                                .into(),
                        )
                    })
                })
                .collect::<Result<_>>()?;
            let mut draws = Vec::with_capacity(m);
            for _ in 0..m {
                let mut net = feature_net.clone();
                for (k, (head, chol)) in heads.iter().zip(&chols).enumerate() {
                    let eps = nalgebra::DVector::from_fn(f, |_, _| {
                        rng.sample::<f64, _>(rand_distr::StandardNormal)
                    });
                    let w = chol.l() * eps;
                    for c in 0..f - 1 {
                        net.weights[last][[k, c]] = head.mu[c] + w[c];
                    }
                    net.biases[last][k] = head.mu[f - 1] + w[f - 1];
                }
                draws.push(net);
            }
            Ok((draws, false))
        }
        PosteriorHandle::Bbb {
            layer_sizes,
            mu,
            rho,
            enforced_pinn,
            ..
        } => {
            let sigma = rho.mapv(bbb::softplus);
            let mut theta = Array1::zeros(mu.len());
            let mut draws = Vec::with_capacity(m);
            for _ in 0..m {
                for j in 0..mu.len() {
                    let eps: f64 = rng.sample(rand_distr::StandardNormal);
                    theta[j] = mu[j] + sigma[j] * eps;
                }
                draws.push(NetworkParams::from_flat(
                    layer_sizes,
                    theta.as_slice().unwrap(),
                )?);
            }
            Ok((draws, *enforced_pinn))
        }
        PosteriorHandle::Nuts {
            layer_sizes,
            samples,
            enforced_pinn,
            ..
        } => {
            let s = samples.nrows();
            if m > s {
                return Err(Error::Config(format!(
                    "requested {m} draws but the posterior holds {s} samples"
                )));
            }
            let mut draws = Vec::with_capacity(m);
            for i in 0..m {
                let idx = i * s / m;
                let row = samples.row(idx).to_owned();
                draws.push(NetworkParams::from_flat(
                    layer_sizes,
                    row.as_slice().unwrap(),
                )?);
            }
            Ok((draws, *enforced_pinn))
        }
    }
}

/// The posterior-mean network: conjugate head means on the frozen features,
/// variational means, or the average of chain samples. The flag mirrors
/// [`posterior_draws`]: true when evaluation must be IC-enforced.
pub fn posterior_mean_network(handle: &PosteriorHandle) -> Result<(NetworkParams, bool)> {
    match handle {
        PosteriorHandle::Nlm {
            feature_net, heads, ..
        } => {
            let last = feature_net.weights.len() - 1;
            let f = feature_net.weights[last].ncols() + 1;
            let mut net = feature_net.clone();
            for (k, head) in heads.iter().enumerate() {
                if head.mu.len() != f {
                    return Err(Error::DimensionMismatch {
                        context: "posterior head width",
                        expected: f,
                        actual: head.mu.len(),
                    });
                }
                for c in 0..f - 1 {
                    net.weights[last][[k, c]] = head.mu[c];
                }
                net.biases[last][k] = head.mu[f - 1];
            }
            Ok((net, false))
        }
        PosteriorHandle::Bbb {
            layer_sizes,
            mu,
            enforced_pinn,
            ..
        } => Ok((
            NetworkParams::from_flat(layer_sizes, mu.as_slice().unwrap())?,
            *enforced_pinn,
        )),
        PosteriorHandle::Nuts {
            layer_sizes,
            samples,
            enforced_pinn,
            ..
        } => {
            let mean = samples
                .mean_axis(ndarray::Axis(0))
                .ok_or_else(|| Error::Config("posterior holds no samples".into()))?;
            Ok((
                NetworkParams::from_flat(layer_sizes, mean.as_slice().unwrap())?,
                *enforced_pinn,
            ))
        }
    }
}

/// Predictive summary from posterior draws via the law of total variance:
/// `Var = σ_Like²(x, λ) + sample variance of the network outputs`.
///
/// NLM dispatches to its closed form ([`nlm_predict`]), using the likelihood
/// stored at fit time. The residual baseline defines no target-space width,
/// so its predictive variance is the sample term alone, floored at the
/// dataset's width floor.
pub fn predictive<R: Rng + ?Sized>(
    handle: &PosteriorHandle,
    spec: &ModelSpec,
    like: &LikelihoodSpec,
    points: &Array2<f64>,
    n_draws: usize,
    keep_draws: bool,
    rng: &mut R,
) -> Result<PredictiveSummary> {
    let sigma_floor = match handle {
        PosteriorHandle::Nlm { .. } => return nlm_predict(handle, points),
        PosteriorHandle::Bbb { sigma_floor, .. } | PosteriorHandle::Nuts { sigma_floor, .. } => {
            *sigma_floor
        }
    };
    if n_draws < 2 {
        return Err(Error::Config(format!(
            "sample-based predictive needs at least 2 draws, got {n_draws}"
        )));
    }
    let (nets, residual) = posterior_draws(handle, n_draws, rng)?;
    let draws = nets
        .iter()
        .map(|params| draw_outputs(spec, params, points, residual))
        .collect::<Result<Vec<_>>>()?;

    let m = draws.len() as f64;
    let shape = draws[0].dim();
    let mut mean = Array2::zeros(shape);
    for d in &draws {
        mean += d;
    }
    mean /= m;
    let mut sample_var: Array2<f64> = Array2::zeros(shape);
    for d in &draws {
        sample_var += &(d - &mean).mapv(|e| e * e);
    }
    sample_var /= m;

    let std = if residual {
        sample_var.mapv(|v| v.sqrt().max(sigma_floor))
    } else {
        let sig = sigma_at(like, points, shape.1, sigma_floor)?;
        let mut std = Array2::zeros(shape);
        for i in 0..shape.0 {
            for k in 0..shape.1 {
                let s = sig[[i, k]];
                std[[i, k]] = (s * s + sample_var[[i, k]]).sqrt();
            }
        }
        std
    };

    Ok(PredictiveSummary {
        points: points.clone(),
        mean,
        std,
        draws: keep_draws.then_some(draws),
    })
}
