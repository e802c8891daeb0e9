//! Equation-parameter estimation from Hubble-rate observations.
//!
//! The observation likelihood marginalizes over the learned solution
//! distribution: at each observed redshift the Gaussian density of the
//! measurement is averaged over M solution draws mapped through the model's
//! Hubble function, and the log of that average is summed over observations.
//! A uniform prior over a finite box closes the posterior, which an
//! affine-invariant stretch-move ensemble explores. Draws are frozen once
//! per likelihood call (and once per chain), so the sampled density is a
//! deterministic function of position.

use ndarray::{Array2, Array3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, LikelihoodSpec, PosteriorHandle};
use crate::error::{Error, Result};
use crate::models::{HubbleParams, ModelSpec};
use crate::nn::NetworkParams;
use crate::train::DetSolution;

/// One Hubble-parameter measurement, `hubble` and `sigma` in km/s/Mpc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub z: f64,
    pub hubble: f64,
    pub sigma: f64,
    pub source: String,
}

/// A set of H(z) measurements with positive uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub rows: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        let set = ObservationSet { rows };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Config("observation set is empty".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !(r.sigma.is_finite() && r.sigma > 0.0) {
                return Err(Error::Config(format!(
                    "observation {i}: sigma must be positive and finite, got {}",
                    r.sigma
                )));
            }
            if !(r.z.is_finite() && r.z >= 0.0) {
                return Err(Error::Config(format!(
                    "observation {i}: z must be nonnegative and finite, got {}",
                    r.z
                )));
            }
            if !r.hubble.is_finite() {
                return Err(Error::Config(format!(
                    "observation {i}: H must be finite, got {}",
                    r.hubble
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Cosmic-chronometer H(z) measurements, grouped by source publication.
const CC_ROWS: [(f64, f64, f64, &str); 30] = [
    (0.09, 69.0, 12.0, "simon2005"),
    (0.17, 83.0, 8.0, "simon2005"),
    (0.27, 77.0, 14.0, "simon2005"),
    (0.4, 95.0, 17.0, "simon2005"),
    (0.9, 117.0, 23.0, "simon2005"),
    (1.3, 168.0, 17.0, "simon2005"),
    (1.43, 177.0, 18.0, "simon2005"),
    (1.53, 140.0, 14.0, "simon2005"),
    (1.75, 202.0, 40.0, "simon2005"),
    (0.48, 97.0, 62.0, "stern2010"),
    (0.88, 90.0, 40.0, "stern2010"),
    (0.1791, 75.0, 4.0, "moresco2012"),
    (0.1993, 75.0, 5.0, "moresco2012"),
    (0.3519, 83.0, 14.0, "moresco2012"),
    (0.5929, 104.0, 13.0, "moresco2012"),
    (0.6797, 92.0, 8.0, "moresco2012"),
    (0.7812, 105.0, 12.0, "moresco2012"),
    (0.8754, 125.0, 17.0, "moresco2012"),
    (1.037, 154.0, 20.0, "moresco2012"),
    (0.07, 69.0, 19.6, "zhang2014"),
    (0.12, 68.6, 26.2, "zhang2014"),
    (0.2, 72.9, 29.6, "zhang2014"),
    (0.28, 88.8, 36.6, "zhang2014"),
    (1.363, 160.0, 33.6, "moresco2015"),
    (1.965, 186.5, 50.4, "moresco2015"),
    (0.3802, 83.0, 13.5, "moresco2016"),
    (0.4004, 77.0, 10.2, "moresco2016"),
    (0.4247, 87.1, 11.2, "moresco2016"),
    (0.4497, 92.8, 12.9, "moresco2016"),
    (0.4783, 80.9, 9.0, "moresco2016"),
];

/// The 30 embedded cosmic-chronometer measurements.
pub fn load_cc() -> ObservationSet {
    ObservationSet {
        rows: CC_ROWS
            .iter()
            .map(|&(z, hubble, sigma, source)| Observation {
                z,
                hubble,
                sigma,
                source: source.to_string(),
            })
            .collect(),
    }
}

/// Where solution samples u(z, λ) come from during marginalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SolutionSource {
    /// Closed-form solution where the model has one; a delta distribution.
    Analytic,
    /// Trained deterministic bundle; a delta distribution at the network.
    Deterministic(DetSolution),
    /// Posterior over solutions; `m_draws` networks are frozen per chain.
    /// The likelihood rides along for provenance and validation only; the
    /// marginalized density needs just the draws.
    Bayesian {
        handle: PosteriorHandle,
        likelihood: LikelihoodSpec,
    },
}

/// Uniform prior bounds for the free parameters of `spec`: the bundle
/// parameters in order, then H0. Boxes generously contain the posteriors
/// and deliberately exceed the training box, since trained bundles
/// extrapolate in λ.
pub fn default_prior_box(spec: &ModelSpec) -> Vec<(f64, f64)> {
    let mut boxes: Vec<(f64, f64)> = spec
        .bundle_param_names
        .iter()
        .zip(&spec.bundle_param_box)
        .map(|(name, fallback)| match name.as_str() {
            "omega_m0" => (0.05, 0.6),
            "w0" => (-3.0, 1.0),
            "w1" => (-8.0, 3.0),
            "lambda" => (0.0, 4.0),
            "b" => (0.0, 8.0),
            _ => *fallback,
        })
        .collect();
    boxes.push((50.0, 90.0));
    boxes
}

/// A parameter-inference problem: model, solution source, uniform prior box
/// over (bundle params..., H0), and sampler settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceTask {
    pub spec: ModelSpec,
    pub source: SolutionSource,
    /// Per-parameter (lo, hi); the prior is uniform inside, zero outside.
    pub prior_box: Vec<(f64, f64)>,
    pub walkers: usize,
    pub steps: usize,
    /// Solution draws per likelihood evaluation for a Bayesian source.
    pub m_draws: usize,
    pub seed: u64,
}

impl InferenceTask {
    /// Task with the default prior box and sampler settings (32 walkers,
    /// 10,000 steps, 50 marginalization draws).
    pub fn new(spec: ModelSpec, source: SolutionSource) -> Self {
        let prior_box = default_prior_box(&spec);
        InferenceTask {
            spec,
            source,
            prior_box,
            walkers: 32,
            steps: 10_000,
            m_draws: 50,
            seed: 0,
        }
    }

    /// Number of inferred parameters: bundle parameters plus H0.
    pub fn dim(&self) -> usize {
        self.spec.n_bundle_params() + 1
    }

    /// Inferred parameter names: bundle names in order, then `h0`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.spec.bundle_param_names.clone();
        names.push("h0".to_string());
        names
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.prior_box.len() != d {
            return Err(Error::DimensionMismatch {
                context: "prior box",
                expected: d,
                actual: self.prior_box.len(),
            });
        }
        for (i, (lo, hi)) in self.prior_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "prior box {i} must be finite with lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.walkers < 2 * d || !self.walkers.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "need an even walker count of at least 2*dim = {}, got {}",
                2 * d,
                self.walkers
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("need at least one sampling step".into()));
        }
        if self.m_draws == 0 {
            return Err(Error::Config(
                "need at least one solution draw per likelihood evaluation".into(),
            ));
        }
        match &self.source {
            SolutionSource::Analytic => {}
            SolutionSource::Deterministic(det) => {
                if det.spec.id != self.spec.id {
                    return Err(Error::Config(format!(
                        "deterministic solution was trained for {}, task is for {}",
                        det.spec.id, self.spec.id
                    )));
                }
            }
            SolutionSource::Bayesian { likelihood, .. } => likelihood.validate(&self.spec)?,
        }
        Ok(())
    }
}

/// Solution draws materialized for one chain: evaluating the target at a
/// fixed position is then deterministic.
enum FrozenSource {
    Analytic,
    Deterministic(Box<DetSolution>),
    Draws {
        nets: Vec<NetworkParams>,
        enforced: bool,
    },
}

fn freeze_source<R: Rng + ?Sized>(task: &InferenceTask, rng: &mut R) -> Result<FrozenSource> {
    match &task.source {
        SolutionSource::Analytic => {
            // Fail fast for models without a closed form.
            let center: Vec<f64> = task
                .spec
                .bundle_param_box
                .iter()
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect();
            task.spec.analytic_solution(0.0, &center)?;
            Ok(FrozenSource::Analytic)
        }
        SolutionSource::Deterministic(det) => Ok(FrozenSource::Deterministic(Box::new(det.clone()))),
        SolutionSource::Bayesian { handle, .. } => {
            let (nets, enforced) = bayes::posterior_draws(handle, task.m_draws, rng)?;
            let sizes = &nets[0].layer_sizes;
            let want_in = 1 + task.spec.n_bundle_params();
            if sizes[0] != want_in {
                return Err(Error::DimensionMismatch {
                    context: "posterior network input width",
                    expected: want_in,
                    actual: sizes[0],
                });
            }
            let out = *sizes.last().unwrap();
            if out != task.spec.state_dim {
                return Err(Error::DimensionMismatch {
                    context: "posterior network output width",
                    expected: task.spec.state_dim,
                    actual: out,
                });
            }
            Ok(FrozenSource::Draws { nets, enforced })
        }
    }
}

fn in_box(lam: &[f64], prior_box: &[(f64, f64)]) -> bool {
    lam.iter()
        .zip(prior_box)
        .all(|(v, (lo, hi))| v.is_finite() && *lo <= *v && *v <= *hi)
}

/// Batch of network inputs `[z_i, λ_bundle...]`, one row per observation.
fn obs_points(obs: &ObservationSet, bundle: &[f64]) -> Array2<f64> {
    let mut pts = Array2::zeros((obs.rows.len(), 1 + bundle.len()));
    for (i, r) in obs.rows.iter().enumerate() {
        pts[[i, 0]] = r.z;
        for (j, b) in bundle.iter().enumerate() {
            pts[[i, 1 + j]] = *b;
        }
    }
    pts
}

/// Marginalized log-likelihood at a fixed draw set. Positions outside the
/// prior box, unphysical Hubble parameters, and observations where every
/// draw is invalid all collapse to −∞; a draw that errors (negative
/// radicand, unreachable state) contributes zero density rather than
/// aborting, which keeps the sampler exploring near physical boundaries.
fn frozen_log_likelihood(
    spec: &ModelSpec,
    frozen: &FrozenSource,
    prior_box: &[(f64, f64)],
    lam_full: &[f64],
    obs: &ObservationSet,
) -> f64 {
    if lam_full.len() != prior_box.len() || !in_box(lam_full, prior_box) {
        return f64::NEG_INFINITY;
    }
    let p = spec.n_bundle_params();
    let bundle = &lam_full[..p];
    let h0 = lam_full[p];
    let om = spec
        .bundle_param_names
        .iter()
        .position(|n| n == "omega_m0")
        .map(|i| bundle[i])
        .unwrap_or(spec.omega_m0_fiducial);
    let Ok(hp) = HubbleParams::new(h0, om) else {
        return f64::NEG_INFINITY;
    };

    let n = obs.rows.len();
    // One state matrix (n × state_dim) per draw; None if the draw cannot be
    // evaluated at all.
    let states: Vec<Option<Array2<f64>>> = match frozen {
        FrozenSource::Analytic => {
            let mut out = Array2::zeros((n, spec.state_dim));
            for (i, r) in obs.rows.iter().enumerate() {
                match spec.analytic_solution(r.z, bundle) {
                    Ok(u) => {
                        for (c, v) in u.iter().enumerate() {
                            out[[i, c]] = *v;
                        }
                    }
                    Err(_) => return f64::NEG_INFINITY,
                }
            }
            vec![Some(out)]
        }
        FrozenSource::Deterministic(det) => {
            vec![det.evaluate(&obs_points(obs, bundle)).ok()]
        }
        FrozenSource::Draws { nets, enforced } => {
            let pts = obs_points(obs, bundle);
            nets.iter()
                .map(|net| bayes::draw_outputs(spec, net, &pts, *enforced).ok())
                .collect()
        }
    };
    if states.iter().all(|s| s.is_none()) {
        return f64::NEG_INFINITY;
    }

    let half_ln_tau = 0.5 * std::f64::consts::TAU.ln();
    let ln_m = (states.len() as f64).ln();
    let mut total = 0.0;
    for (i, r) in obs.rows.iter().enumerate() {
        // Log densities of the valid draws; the average still divides by M.
        let mut lds: Vec<f64> = Vec::with_capacity(states.len());
        for s in &states {
            let Some(u) = s else { continue };
            let row = u.row(i);
            let Ok(h) = spec.hubble(r.z, row.as_slice().unwrap(), &hp) else {
                continue;
            };
            if !h.is_finite() {
                continue;
            }
            let t = (r.hubble - h) / r.sigma;
            let ld = -half_ln_tau - r.sigma.ln() - 0.5 * t * t;
            if ld.is_finite() {
                lds.push(ld);
            }
        }
        let Some(&max) = lds.iter().max_by(|a, b| a.total_cmp(b)) else {
            return f64::NEG_INFINITY;
        };
        let sum: f64 = lds.iter().map(|ld| (ld - max).exp()).sum();
        total += max + sum.ln() - ln_m;
    }
    total
}

/// Marginalized observation log-likelihood at `lam_full` = (bundle params...,
/// H0). Draws are frozen from `rng` at entry, so the value is deterministic
/// given the rng state; positions outside the prior box return −∞.
pub fn log_likelihood<R: Rng + ?Sized>(
    task: &InferenceTask,
    lam_full: &[f64],
    obs: &ObservationSet,
    rng: &mut R,
) -> Result<f64> {
    task.validate()?;
    obs.validate()?;
    let frozen = freeze_source(task, rng)?;
    Ok(frozen_log_likelihood(
        &task.spec,
        &frozen,
        &task.prior_box,
        lam_full,
        obs,
    ))
}

/// Ensemble-sampler output: every walker position at every step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainResult {
    pub param_names: Vec<String>,
    /// walker × step × parameter.
    pub samples: Array3<f64>,
    /// walker × step.
    pub log_probs: Array2<f64>,
    /// Accepted proposals over walkers·steps.
    pub acceptance_rate: f64,
    /// Default burn-in length (one fifth of the chain), advisory.
    pub burn_in: usize,
}

/// Affine-invariant stretch-move ensemble over an arbitrary log-density.
///
/// `init` is walker × dim with an even walker count of at least 2·dim. Each
/// step updates the two walker halves in turn: walker k proposes
/// `y = x_j + z (x_k - x_j)` against a partner j from the other half, with
/// `z = ((a-1)u + 1)^2 / a` for a = 2 (density ∝ 1/√z on [1/2, 2]), and
/// accepts with probability min(1, z^(d-1) π(y)/π(x)). Returns samples
/// (walker × step × dim), log densities (walker × step), and the acceptance
/// rate. All randomness is drawn sequentially before the half's proposals
/// evaluate in parallel, so results are independent of thread count.
pub fn stretch_sample<F, R>(
    log_prob: &F,
    init: &Array2<f64>,
    steps: usize,
    rng: &mut R,
) -> Result<(Array3<f64>, Array2<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let k = init.nrows();
    let d = init.ncols();
    if d == 0 {
        return Err(Error::Config("ensemble dimension must be positive".into()));
    }
    if k < 2 * d || !k.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "ensemble needs an even walker count of at least 2*dim = {}, got {k}",
            2 * d
        )));
    }
    if steps == 0 {
        return Err(Error::Config("need at least one sampling step".into()));
    }

    let mut pos = init.to_owned();
    let mut lp: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|w| log_prob(pos.row(w).as_slice().unwrap()))
        .collect();
    if lp.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Domain(
            "all initial walker positions have zero posterior density".into(),
        ));
    }

    const A: f64 = 2.0;
    let half = k / 2;
    let mut samples = Array3::zeros((k, steps, d));
    let mut log_probs = Array2::zeros((k, steps));
    let mut accepted = 0usize;
    let mut proposals = Array2::zeros((half, d));
    let mut zs = vec![0.0; half];
    let mut ln_u = vec![0.0; half];

    for t in 0..steps {
        for (lo, other) in [(0, half), (half, 0)] {
            for i in 0..half {
                let u: f64 = rng.gen();
                let s = (A - 1.0) * u + 1.0;
                let z = s * s / A;
                let j = other + rng.gen_range(0..half);
                ln_u[i] = rng.gen::<f64>().ln();
                zs[i] = z;
                for c in 0..d {
                    let xj = pos[[j, c]];
                    proposals[[i, c]] = xj + z * (pos[[lo + i, c]] - xj);
                }
            }
            let new_lp: Vec<f64> = (0..half)
                .into_par_iter()
                .map(|i| log_prob(proposals.row(i).as_slice().unwrap()))
                .collect();
            for i in 0..half {
                let w = lo + i;
                // −∞ against −∞ gives NaN; the comparison then rejects.
                let log_q = (d as f64 - 1.0) * zs[i].ln() + new_lp[i] - lp[w];
                if ln_u[i] < log_q {
                    for c in 0..d {
                        pos[[w, c]] = proposals[[i, c]];
                    }
                    lp[w] = new_lp[i];
                    accepted += 1;
                }
            }
        }
        for w in 0..k {
            for c in 0..d {
                samples[[w, t, c]] = pos[[w, c]];
            }
            log_probs[[w, t]] = lp[w];
        }
    }
    let acceptance = accepted as f64 / (k * steps) as f64;
    Ok((samples, log_probs, acceptance))
}

/// Sample the marginalized posterior of `task` against `obs`. Walkers start
/// uniform in the prior box; Bayesian solution draws are frozen once for the
/// whole chain.
pub fn ensemble_sample<R: Rng + ?Sized>(
    task: &InferenceTask,
    obs: &ObservationSet,
    rng: &mut R,
) -> Result<ChainResult> {
    task.validate()?;
    obs.validate()?;
    let frozen = freeze_source(task, rng)?;
    let d = task.dim();
    let mut init = Array2::zeros((task.walkers, d));
    for w in 0..task.walkers {
        for (c, (lo, hi)) in task.prior_box.iter().enumerate() {
            init[[w, c]] = rng.gen_range(*lo..*hi);
        }
    }
    let spec = &task.spec;
    let prior_box = &task.prior_box;
    let target =
        move |lam: &[f64]| frozen_log_likelihood(spec, &frozen, prior_box, lam, obs);
    let (samples, log_probs, acceptance_rate) = stretch_sample(&target, &init, task.steps, rng)?;
    Ok(ChainResult {
        param_names: task.param_names(),
        samples,
        log_probs,
        acceptance_rate,
        burn_in: task.steps / 5,
    })
}

/// Posterior mean and standard deviation of one inferred parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-parameter mean and standard deviation over the flattened post-burn-in
/// samples. `burn_in_fraction` is the leading fraction of steps to drop.
pub fn summarize(chain: &ChainResult, burn_in_fraction: f64) -> Result<Vec<ParamSummary>> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::Config(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let (k, steps, d) = chain.samples.dim();
    if chain.param_names.len() != d {
        return Err(Error::DimensionMismatch {
            context: "chain parameter names",
            expected: d,
            actual: chain.param_names.len(),
        });
    }
    let burn = (steps as f64 * burn_in_fraction).floor() as usize;
    let kept = steps.saturating_sub(burn);
    if k == 0 || kept == 0 {
        return Err(Error::Config("no post-burn-in samples".into()));
    }
    let mut out = Vec::with_capacity(d);
    for c in 0..d {
        // Welford update: a constant chain yields exactly zero variance.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut count = 0.0;
        for w in 0..k {
            for t in burn..steps {
                let x = chain.samples[[w, t, c]];
                count += 1.0;
                let d1 = x - mean;
                mean += d1 / count;
                m2 += d1 * (x - mean);
            }
        }
        out.push(ParamSummary {
            name: chain.param_names[c].clone(),
            mean,
            std: (m2 / count).sqrt(),
        });
    }
    Ok(out)
}
