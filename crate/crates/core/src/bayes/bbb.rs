//! Mean-field variational inference over network weights ("Bayes by
//! Backprop"): a fully factorized Gaussian `q(θ) = Π N(μ_i, softplus(ρ_i)²)`
//! trained to maximize the ELBO with reparameterized gradients and a
//! closed-form Gaussian KL term.

use ndarray::{s, Array1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::nn::{FlatAdam, NetworkParams};

use super::{gaussian_loglik_and_grad, residual_loglik_and_grad, LikelihoodSpec, PosteriorHandle, SupervisedSet};

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: the ρ whose softplus is `s` (requires `s > 0`).
pub fn softplus_inv(s: f64) -> f64 {
    s.exp_m1().ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Closed-form `KL(q ‖ prior)` between the factorized Gaussian
/// `q = Π N(μ_i, σ_i²)` and the isotropic prior `N(0, σ_p² I)`.
pub fn gaussian_kl(mu: &Array1<f64>, sigma: &Array1<f64>, prior_std: f64) -> f64 {
    let sp2 = prior_std * prior_std;
    mu.iter()
        .zip(sigma.iter())
        .map(|(&m, &s)| (prior_std / s).ln() + (s * s + m * m) / (2.0 * sp2) - 0.5)
        .sum()
}

#[derive(Debug, Clone)]
pub struct BbbConfig {
    pub prior_std: f64,
    pub iterations: usize,
    pub lr: f64,
    /// Reparameterized draws per step for the likelihood expectation.
    pub mc_samples: usize,
}

impl BbbConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.lr
            )));
        }
        if !(self.prior_std.is_finite() && self.prior_std > 0.0) {
            return Err(Error::Config(format!(
                "prior std must be positive and finite, got {}",
                self.prior_std
            )));
        }
        Ok(())
    }
}

/// Initial pre-softplus scale: every weight starts with std 1e-3, small
/// enough that early draws stay near the means.
fn initial_rho() -> f64 {
    softplus_inv(1e-3)
}

/// Train a mean-field Gaussian posterior over the weights of a network with
/// the given layout. Gaussian likelihoods score a plain forward pass against
/// the dataset targets; the residual baseline scores the enforced network's
/// equation residuals on the dataset inputs. `init_means` (typically the
/// deterministic optimum) anchors the variational means; otherwise they are
/// Glorot-initialized from `rng`.
pub fn bbb_train<R: Rng + ?Sized>(
    spec: &ModelSpec,
    layer_sizes: &[usize],
    set: &SupervisedSet,
    like: &LikelihoodSpec,
    cfg: &BbbConfig,
    init_means: Option<&NetworkParams>,
    rng: &mut R,
) -> Result<PosteriorHandle> {
    cfg.validate()?;
    like.validate(spec)?;
    super::check_net_matches_set(layer_sizes, set)?;

    let mu0 = match init_means {
        Some(p) => {
            if p.layer_sizes != layer_sizes {
                return Err(Error::Config(format!(
                    "initial means have layers {:?}, expected {:?}",
                    p.layer_sizes, layer_sizes
                )));
            }
            p.flatten()
        }
        None => NetworkParams::glorot(layer_sizes, rng)?.flatten(),
    };
    let n = mu0.len();

    // One flat vector [μ; ρ] so a single optimizer drives both halves.
    let mut var_params = Array1::zeros(2 * n);
    var_params.slice_mut(s![..n]).assign(&mu0);
    var_params.slice_mut(s![n..]).fill(initial_rho());
    let mut adam = FlatAdam::new(cfg.lr, 2 * n);
    let mut elbo_history = Vec::with_capacity(cfg.iterations);

    let sp2 = cfg.prior_std * cfg.prior_std;
    let mut theta = Array1::<f64>::zeros(n);
    let mut eps = Array1::<f64>::zeros(n);

    for it in 1..=cfg.iterations {
        let mu = var_params.slice(s![..n]).to_owned();
        let rho = var_params.slice(s![n..]).to_owned();
        let sigma = rho.mapv(softplus);

        let mut mean_ll = 0.0;
        let mut dll_dmu = Array1::<f64>::zeros(n);
        let mut dll_drho = Array1::<f64>::zeros(n);
        for _ in 0..cfg.mc_samples {
            for j in 0..n {
                eps[j] = rng.sample(rand_distr::StandardNormal);
                theta[j] = mu[j] + sigma[j] * eps[j];
            }
            let params = NetworkParams::from_flat(layer_sizes, theta.as_slice().unwrap())?;
            let (ll, grads) = match like {
                LikelihoodSpec::ResidualBaseline(sr) => {
                    residual_loglik_and_grad(spec, &params, &set.inputs, *sr)?
                }
                _ => gaussian_loglik_and_grad(set, &params)?,
            };
            mean_ll += ll;
            let g = grads.flatten();
            for j in 0..n {
                dll_dmu[j] += g[j];
                dll_drho[j] += g[j] * eps[j] * sigmoid(rho[j]);
            }
        }
        let mc = cfg.mc_samples as f64;
        mean_ll /= mc;
        dll_dmu /= mc;
        dll_drho /= mc;

        let kl = gaussian_kl(&mu, &sigma, cfg.prior_std);
        let elbo = mean_ll - kl;
        if !elbo.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                loss: -elbo,
            });
        }
        elbo_history.push(elbo);

        // Minimize -ELBO: gradient is -d(loglik) + d(KL).
        let mut grad = Array1::zeros(2 * n);
        for j in 0..n {
            grad[j] = -dll_dmu[j] + mu[j] / sp2;
            grad[n + j] = -dll_drho[j] + (sigma[j] / sp2 - 1.0 / sigma[j]) * sigmoid(rho[j]);
        }
        adam.step(&mut var_params, &grad)?;
    }

    Ok(PosteriorHandle::Bbb {
        layer_sizes: layer_sizes.to_vec(),
        mu: var_params.slice(s![..n]).to_owned(),
        rho: var_params.slice(s![n..]).to_owned(),
        prior_std: cfg.prior_std,
        sigma_floor: set.sigma_floor,
        enforced_pinn: like.is_residual(),
        elbo_history,
    })
}
