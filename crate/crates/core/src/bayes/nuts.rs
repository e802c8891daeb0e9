//! No-U-Turn sampler: multiplicative trajectory doubling with multinomial
//! leaf sampling, the standard u-turn criterion on leapfrog trees,
//! dual-averaging step-size adaptation toward 0.8 acceptance, and an
//! identity mass matrix.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_TREE_DEPTH: usize = 10;
/// Energy gain over the trajectory start above which a step is divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;
const TARGET_ACCEPT: f64 = 0.8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NutsDiagnostics {
    /// Divergent transitions among the kept (post-tuning) draws.
    pub divergences: usize,
    /// Mean leapfrog acceptance statistic over kept draws.
    pub mean_accept: f64,
    /// Step size after dual averaging.
    pub step_size: f64,
    /// Kept draws whose trajectory hit the maximum tree depth.
    pub max_depth_hits: usize,
}

#[derive(Debug, Clone)]
pub struct NutsResult {
    /// One kept draw per row.
    pub samples: Array2<f64>,
    pub diagnostics: NutsDiagnostics,
}

/// Phase-space point with its cached density and gradient.
#[derive(Debug, Clone)]
struct Edge {
    theta: Array1<f64>,
    r: Array1<f64>,
    grad: Array1<f64>,
    logp: f64,
}

impl Edge {
    fn hamiltonian(&self) -> f64 {
        -self.logp + 0.5 * self.r.dot(&self.r)
    }
}

/// Evaluate the target, mapping failures and non-finite values to a zero
/// density so they surface as divergent transitions instead of errors.
fn eval<F>(logp: &F, theta: &Array1<f64>) -> (f64, Array1<f64>)
where
    F: Fn(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    match logp(theta) {
        Ok((lp, g)) if lp.is_finite() && g.iter().all(|e| e.is_finite()) => (lp, g),
        _ => (f64::NEG_INFINITY, Array1::zeros(theta.len())),
    }
}

/// One leapfrog step of signed size `step` from `from`.
fn leapfrog<F>(logp: &F, from: &Edge, step: f64) -> Edge
where
    F: Fn(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    let mut r = &from.r + &from.grad.mapv(|g| 0.5 * step * g);
    let theta = &from.theta + &r.mapv(|ri| step * ri);
    let (lp, grad) = eval(logp, &theta);
    r += &grad.mapv(|g| 0.5 * step * g);
    Edge {
        theta,
        r,
        grad,
        logp: lp,
    }
}

fn uturn(minus: &Edge, plus: &Edge) -> bool {
    let mut dot_minus = 0.0;
    let mut dot_plus = 0.0;
    for j in 0..minus.theta.len() {
        let d = plus.theta[j] - minus.theta[j];
        dot_minus += d * minus.r[j];
        dot_plus += d * plus.r[j];
    }
    dot_minus < 0.0 || dot_plus < 0.0
}

fn logsumexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct Tree {
    minus: Edge,
    plus: Edge,
    proposal: Edge,
    /// log Σ exp(h0 − h) over the subtree's leaves.
    log_sum_weight: f64,
    sum_accept: f64,
    n_leapfrog: usize,
    divergent: bool,
    turning: bool,
}

/// Build a balanced subtree of `2^depth` leapfrog steps growing from `edge`
/// in direction `v`, sampling one leaf in proportion to its weight.
fn build_tree<F, R>(
    logp: &F,
    edge: &Edge,
    v: f64,
    depth: usize,
    eps: f64,
    h0: f64,
    rng: &mut R,
) -> Tree
where
    F: Fn(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    R: Rng + ?Sized,
{
    if depth == 0 {
        let leaf = leapfrog(logp, edge, v * eps);
        let h = leaf.hamiltonian();
        let log_w = h0 - h;
        let divergent = h - h0 > DIVERGENCE_THRESHOLD;
        let accept = (h0 - h).min(0.0).exp();
        return Tree {
            minus: leaf.clone(),
            plus: leaf.clone(),
            proposal: leaf,
            log_sum_weight: log_w,
            sum_accept: accept,
            n_leapfrog: 1,
            divergent,
            turning: false,
        };
    }

    let first = build_tree(logp, edge, v, depth - 1, eps, h0, rng);
    if first.divergent || first.turning {
        return first;
    }
    let grow_from = if v > 0.0 { &first.plus } else { &first.minus };
    let second = build_tree(logp, grow_from, v, depth - 1, eps, h0, rng);

    let total = logsumexp(first.log_sum_weight, second.log_sum_weight);
    let take_second =
        !second.divergent && rng.gen::<f64>() < (second.log_sum_weight - total).exp();
    let proposal = if take_second {
        second.proposal
    } else {
        first.proposal
    };
    let (minus, plus) = if v > 0.0 {
        (first.minus, second.plus)
    } else {
        (second.minus, first.plus)
    };
    let divergent = second.divergent;
    let turning = second.turning || (!divergent && uturn(&minus, &plus));
    Tree {
        minus,
        plus,
        proposal,
        log_sum_weight: total,
        sum_accept: first.sum_accept + second.sum_accept,
        n_leapfrog: first.n_leapfrog + second.n_leapfrog,
        divergent,
        turning,
    }
}

/// Double `eps` up or halve it down until one leapfrog step crosses 50%
/// acceptance, giving dual averaging a sane starting point.
fn find_reasonable_epsilon<F, R>(logp: &F, start: &Edge, rng: &mut R) -> f64
where
    F: Fn(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    R: Rng + ?Sized,
{
    let dim = start.theta.len();
    let mut edge = start.clone();
    edge.r = Array1::zeros(dim);
    for j in 0..dim {
        edge.r[j] = rng.sample(rand_distr::StandardNormal);
    }
    let h0 = edge.hamiltonian();
    let log_ratio = |eps: f64| h0 - leapfrog(logp, &edge, eps).hamiltonian();

    let mut eps = 1.0_f64;
    let mut lr = log_ratio(eps);
    let a: f64 = if lr > (0.5_f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..60 {
        if a * lr <= -a * std::f64::consts::LN_2 || !(1e-10..=1e7).contains(&eps) {
            break;
        }
        eps *= (2.0_f64).powf(a);
        lr = log_ratio(eps);
    }
    eps
}

/// Draw `n_samples` from `logp` after `n_tune` adaptation iterations. The
/// target returns the log density and its gradient; evaluation failures act
/// as zero-density barriers (divergent transitions), not errors.
pub fn nuts_sample<F, R>(
    logp: F,
    init: &Array1<f64>,
    n_samples: usize,
    n_tune: usize,
    rng: &mut R,
) -> Result<NutsResult>
where
    F: Fn(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    R: Rng + ?Sized,
{
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let dim = init.len();
    let (lp0, grad0) = logp(init)?;
    if !lp0.is_finite() {
        return Err(Error::Domain(format!(
            "log density is not finite at the initial point: {lp0}"
        )));
    }

    let mut current = Edge {
        theta: init.clone(),
        r: Array1::zeros(dim),
        grad: grad0,
        logp: lp0,
    };
    let mut eps = find_reasonable_epsilon(&logp, &current, rng);

    // Dual averaging (target acceptance 0.8).
    let mu_da = (10.0 * eps).ln();
    let (gamma, t0, kappa) = (0.05, 10.0, 0.75);
    let mut log_eps_bar = 0.0_f64;
    let mut h_bar = 0.0_f64;

    let mut samples = Array2::zeros((n_samples, dim));
    let mut divergences = 0;
    let mut max_depth_hits = 0;
    let mut accept_sum = 0.0;

    for m in 0..(n_tune + n_samples) {
        for j in 0..dim {
            current.r[j] = rng.sample(rand_distr::StandardNormal);
        }
        let h0 = current.hamiltonian();

        let mut minus = current.clone();
        let mut plus = current.clone();
        let mut proposal = current.clone();
        let mut lsw = 0.0_f64;
        let mut sum_accept = 0.0;
        let mut n_leap = 0usize;
        let mut draw_divergent = false;
        let mut hit_max = false;

        let mut depth = 0;
        loop {
            if depth >= MAX_TREE_DEPTH {
                hit_max = true;
                break;
            }
            let v: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let edge = if v > 0.0 { &plus } else { &minus };
            let sub = build_tree(&logp, edge, v, depth, eps, h0, rng);
            sum_accept += sub.sum_accept;
            n_leap += sub.n_leapfrog;
            if sub.divergent {
                draw_divergent = true;
                break;
            }
            if sub.turning {
                break;
            }
            // Biased progressive sampling favoring the fresh subtree.
            if rng.gen::<f64>() < (sub.log_sum_weight - lsw).exp().min(1.0) {
                proposal = sub.proposal.clone();
            }
            lsw = logsumexp(lsw, sub.log_sum_weight);
            if v > 0.0 {
                plus = sub.plus;
            } else {
                minus = sub.minus;
            }
            if uturn(&minus, &plus) {
                break;
            }
            depth += 1;
        }

        current = proposal;
        let alpha = (sum_accept / n_leap as f64).min(1.0);

        if m < n_tune {
            let mm = (m + 1) as f64;
            h_bar = (1.0 - 1.0 / (mm + t0)) * h_bar + (TARGET_ACCEPT - alpha) / (mm + t0);
            let log_eps = mu_da - mm.sqrt() / gamma * h_bar;
            let w = mm.powf(-kappa);
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
            eps = if m + 1 == n_tune {
                log_eps_bar.exp()
            } else {
                log_eps.exp()
            };
        } else {
            samples.row_mut(m - n_tune).assign(&current.theta);
            accept_sum += alpha;
            if draw_divergent {
                divergences += 1;
            }
            if hit_max {
                max_depth_hits += 1;
            }
        }
    }

    if divergences * 10 > n_samples {
        log::warn!(
            "{divergences} of {n_samples} draws diverged; the posterior geometry \
             may be too stiff for this step size"
        );
    }
    Ok(NutsResult {
        samples,
        diagnostics: NutsDiagnostics {
            divergences,
            mean_accept: accept_sum / n_samples as f64,
            step_size: eps,
            max_depth_hits,
        },
    })
}
