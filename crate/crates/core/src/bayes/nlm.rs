//! Neural linear model: a Bayesian linear output layer on the frozen
//! last-hidden features of the deterministic net, with an exact conjugate
//! Gaussian posterior per state component.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkParams;

use super::{nlm_features, sigma_at, LikelihoodSpec, PosteriorHandle, PredictiveSummary, SupervisedSet};

/// Gaussian posterior over one output head's linear weights (the last
/// feature is the constant 1, so its weight is the head's bias).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlmHead {
    pub mu: Array1<f64>,
    pub cov: Array2<f64>,
}

/// Exact posterior of the linear output layer under a Gaussian likelihood:
/// `Σ_post = (Φᵀ Σ⁻¹ Φ + σ_prior⁻² I)⁻¹`, `μ_post = Σ_post Φᵀ Σ⁻¹ y`, with
/// `Σ = diag(sigma_like²)` per component.
pub fn nlm_fit(
    feature_net: &NetworkParams,
    set: &SupervisedSet,
    like: &LikelihoodSpec,
    prior_std: f64,
) -> Result<PosteriorHandle> {
    if like.is_residual() {
        return Err(Error::Config(
            "the neural linear model needs a Gaussian likelihood on targets; \
             a residual likelihood breaks its conjugacy"
                .into(),
        ));
    }
    if !(prior_std.is_finite() && prior_std > 0.0) {
        return Err(Error::Config(format!(
            "prior std must be positive and finite, got {prior_std}"
        )));
    }
    let phi = nlm_features(feature_net, &set.inputs)?;
    let (n, f) = phi.dim();
    let d = set.targets.ncols();
    let prior_prec = prior_std.powi(-2);

    let mut heads = Vec::with_capacity(d);
    for k in 0..d {
        // Weighted feature matrix W Φ with W = Σ⁻¹ = diag(1/σ²).
        let mut wphi = phi.clone();
        for i in 0..n {
            let s = set.sigma_like[[i, k]];
            let w = 1.0 / (s * s);
            for c in 0..f {
                wphi[[i, c]] *= w;
            }
        }
        let a_nd = phi.t().dot(&wphi);
        let b_nd = wphi.t().dot(&set.targets.column(k));

        let mut a = DMatrix::from_row_iterator(f, f, a_nd.iter().copied());
        for r in 0..f {
            a[(r, r)] += prior_prec;
        }
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::Linalg(
                "posterior normal matrix is not positive definite; \
                 increase the prior precision (smaller prior std)"
                    .into(),
            )
        })?;
        let b = DVector::from_iterator(f, b_nd.iter().copied());
        let mu_na = chol.solve(&b);
        let cov_na = chol.inverse();
        heads.push(NlmHead {
            mu: Array1::from_iter(mu_na.iter().copied()),
            cov: Array2::from_shape_fn((f, f), |(r, c)| cov_na[(r, c)]),
        });
    }

    Ok(PosteriorHandle::Nlm {
        feature_net: feature_net.clone(),
        heads,
        likelihood: like.clone(),
        prior_std,
        sigma_floor: set.sigma_floor,
    })
}

/// Closed-form predictive of the neural linear model: mean `Φ μ_post`,
/// variance `σ_Like²(x, λ) + φᵀ Σ_post φ` per point and component.
pub fn nlm_predict(handle: &PosteriorHandle, points: &Array2<f64>) -> Result<PredictiveSummary> {
    let PosteriorHandle::Nlm {
        feature_net,
        heads,
        likelihood,
        sigma_floor,
        ..
    } = handle
    else {
        return Err(Error::Config(
            "nlm_predict needs a neural-linear posterior handle".into(),
        ));
    };
    let phi = nlm_features(feature_net, points)?;
    let q = phi.nrows();
    let d = heads.len();
    let sig = sigma_at(likelihood, points, d, *sigma_floor)?;
    let mut mean = Array2::zeros((q, d));
    let mut std = Array2::zeros((q, d));
    for (k, head) in heads.iter().enumerate() {
        let m = phi.dot(&head.mu);
        let pc = phi.dot(&head.cov);
        for i in 0..q {
            // φᵀ Σ_post φ is non-negative for a PD posterior; clamp rounding.
            let var_post = pc.row(i).dot(&phi.row(i)).max(0.0);
            let s = sig[[i, k]];
            mean[[i, k]] = m[i];
            std[[i, k]] = (s * s + var_post).sqrt();
        }
    }
    Ok(PredictiveSummary {
        points: points.clone(),
        mean,
        std,
        draws: None,
    })
}
