//! Accuracy and uncertainty-calibration metrics over gridded evaluations.
//!
//! Accuracy is scored against an oracle solution (closed form or a
//! high-order integrator); calibration compares central Gaussian prediction
//! intervals with their empirical coverage. All metrics are pure functions
//! of the supplied arrays and invariant under point reordering.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::nn::NetworkParams;
use crate::train;

/// Denominator floor for relative errors; the truth crosses zero for some
/// models, so raw division would blow up.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-12;

/// Which part of the domain a report describes: the training region, a finer
/// grid over the same region, or the adjacent extrapolation region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionTag {
    Train,
    Test,
    Ood,
}

impl std::fmt::Display for RegionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegionTag::Train => "train",
            RegionTag::Test => "test",
            RegionTag::Ood => "ood",
        })
    }
}

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>, context: &'static str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Config(format!("{context}: no points to score")));
    }
    Ok(())
}

/// Median with the midpoint convention for even counts. `values` must be
/// nonempty.
fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Flattened relative errors `|pred - truth| / max(|truth|, floor)`.
pub fn relative_errors(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<Vec<f64>> {
    check_shapes(pred, truth, "relative errors")?;
    Ok(pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t).abs() / t.abs().max(RELATIVE_ERROR_FLOOR))
        .collect())
}

/// Median over all points and components of the relative error.
pub fn median_relative_error(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    Ok(median_of(relative_errors(pred, truth)?))
}

/// Median of `|r̃|` over all grid points and state components for an
/// IC-enforced network. For a posterior, score its mean network
/// ([`crate::bayes::posterior_mean_network`]).
pub fn median_residual(
    spec: &ModelSpec,
    params: &NetworkParams,
    points: &Array2<f64>,
) -> Result<f64> {
    let res = train::residuals_on(spec, params, points)?;
    if res.is_empty() {
        return Err(Error::Config("median residual: no points".into()));
    }
    Ok(median_of(res.iter().map(|r| r.abs()).collect()))
}

/// Median residual of a posterior, scored on its mean network.
///
/// Residual-baseline posteriors sample IC-enforced networks, so the enforced
/// residual applies; the other likelihoods model the solution output
/// directly, so the residual uses the plain forward pass and its exact
/// x-derivative.
pub fn posterior_median_residual(
    spec: &ModelSpec,
    handle: &crate::bayes::PosteriorHandle,
    points: &Array2<f64>,
) -> Result<f64> {
    let (mean_net, enforced) = crate::bayes::posterior_mean_network(handle)?;
    if enforced {
        return median_residual(spec, &mean_net, points);
    }
    let batch = crate::nn::forward_with_time_derivative(&mean_net, points, 0)?;
    median_residual_from_values(spec, points, &batch.values, &batch.tangents)
}

/// Median of `|r̃|` from externally supplied solution values and
/// x-derivatives (rows aligned with `points`). Lets a closed-form solution
/// be scored against the same defining equations.
pub fn median_residual_from_values(
    spec: &ModelSpec,
    points: &Array2<f64>,
    values: &Array2<f64>,
    tangents: &Array2<f64>,
) -> Result<f64> {
    check_shapes(values, tangents, "residual values")?;
    if points.nrows() != values.nrows() {
        return Err(Error::DimensionMismatch {
            context: "residual points",
            expected: values.nrows(),
            actual: points.nrows(),
        });
    }
    let p = spec.n_bundle_params();
    let mut abs = Vec::with_capacity(values.len());
    let mut lam = vec![0.0; p];
    for i in 0..points.nrows() {
        for (j, l) in lam.iter_mut().enumerate() {
            *l = points[[i, j + 1]];
        }
        let u: Vec<f64> = values.row(i).to_vec();
        let du: Vec<f64> = tangents.row(i).to_vec();
        let r = train::residual_from_values(spec, points[[i, 0]], &u, &du, &lam)?;
        abs.extend(r.iter().map(|v| v.abs()));
    }
    Ok(median_of(abs))
}

/// Calibration curve: pairs of (expected coverage, empirical coverage) for
/// expected coverages p = 0.01..0.99. The empirical coverage is the fraction
/// of truth values inside the central Gaussian interval
/// `mean ± z_{(1+p)/2} std`.
pub fn coverage_curve(
    pred_mean: &Array2<f64>,
    pred_std: &Array2<f64>,
    truth: &Array2<f64>,
) -> Result<Vec<(f64, f64)>> {
    check_shapes(pred_mean, pred_std, "miscalibration mean/std")?;
    check_shapes(pred_mean, truth, "miscalibration mean/truth")?;
    if pred_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Config(
            "prediction stds must be nonnegative and finite".into(),
        ));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = pred_mean.len() as f64;
    let mut curve = Vec::with_capacity(99);
    for j in 1..=99 {
        let p = j as f64 / 100.0;
        let z = normal.inverse_cdf(0.5 * (1.0 + p));
        let covered = pred_mean
            .iter()
            .zip(pred_std.iter())
            .zip(truth.iter())
            .filter(|((m, s), t)| (*t - *m).abs() <= z * **s)
            .count();
        curve.push((p, covered as f64 / n));
    }
    Ok(curve)
}

/// Miscalibration area and RMS calibration error.
///
/// Over the coverage curve p = 0.01..0.99, the area is the mean absolute gap
/// between empirical and expected coverage, the RMS the quadratic mean.
/// Zero-width intervals are legal: with any errors present they cover
/// nothing and the area degenerates to exactly 0.5.
pub fn miscalibration_area(
    pred_mean: &Array2<f64>,
    pred_std: &Array2<f64>,
    truth: &Array2<f64>,
) -> Result<(f64, f64)> {
    let curve = coverage_curve(pred_mean, pred_std, truth)?;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for &(p, c) in &curve {
        let gap = c - p;
        abs_sum += gap.abs();
        sq_sum += gap * gap;
    }
    let k = curve.len() as f64;
    Ok((abs_sum / k, (sq_sum / k).sqrt()))
}

/// Proper scoring rules of a Gaussian predictive distribution, each averaged
/// over all points and components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProperScores {
    /// Mean Gaussian negative log-likelihood.
    pub nll: f64,
    /// Mean closed-form Gaussian CRPS.
    pub crps: f64,
    /// Mean predictive standard deviation.
    pub sharpness: f64,
    /// Mean 95% central interval score.
    pub interval_score: f64,
    /// Mean pinball loss over the nine inner decile levels.
    pub check_score: f64,
}

/// NLL, CRPS, sharpness, 95% interval score, and decile check score.
pub fn proper_scores(
    pred_mean: &Array2<f64>,
    pred_std: &Array2<f64>,
    truth: &Array2<f64>,
) -> Result<ProperScores> {
    check_shapes(pred_mean, pred_std, "scores mean/std")?;
    check_shapes(pred_mean, truth, "scores mean/truth")?;
    if pred_std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Config(
            "proper scores need strictly positive stds".into(),
        ));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let half_ln_tau = 0.5 * std::f64::consts::TAU.ln();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let z95 = normal.inverse_cdf(0.975);
    let alpha = 0.05;
    let decile_z: Vec<(f64, f64)> = (1..10)
        .map(|k| {
            let tau = k as f64 / 10.0;
            (tau, normal.inverse_cdf(tau))
        })
        .collect();

    let n = pred_mean.len() as f64;
    let (mut nll, mut crps, mut sharp, mut interval, mut check) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((m, s), t) in pred_mean.iter().zip(pred_std.iter()).zip(truth.iter()) {
        let z = (t - m) / s;
        nll += half_ln_tau + s.ln() + 0.5 * z * z;
        crps += s * (z * (2.0 * normal.cdf(z) - 1.0) + 2.0 * normal.pdf(z) - inv_sqrt_pi);
        sharp += s;
        let lo = m - z95 * s;
        let hi = m + z95 * s;
        interval += (hi - lo)
            + (2.0 / alpha) * (lo - t).max(0.0)
            + (2.0 / alpha) * (t - hi).max(0.0);
        let mut pin = 0.0;
        for (tau, zq) in &decile_z {
            let q = m + zq * s;
            pin += if *t >= q {
                tau * (t - q)
            } else {
                (1.0 - tau) * (q - t)
            };
        }
        check += pin / decile_z.len() as f64;
    }
    Ok(ProperScores {
        nll: nll / n,
        crps: crps / n,
        sharpness: sharp / n,
        interval_score: interval / n,
        check_score: check / n,
    })
}

/// Q10..Q100 of the relative error, by linear interpolation between order
/// statistics (so Q100 is the maximum). Always nondecreasing.
pub fn decile_table(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<[f64; 10]> {
    let mut rel = relative_errors(pred, truth)?;
    rel.sort_by(|a, b| a.total_cmp(b));
    let n = rel.len();
    let mut out = [0.0; 10];
    for (k, slot) in out.iter_mut().enumerate() {
        let p = (k + 1) as f64 / 10.0;
        let idx = p * (n - 1) as f64;
        let lo = idx.floor() as usize;
        let frac = idx - lo as f64;
        *slot = if lo + 1 < n {
            rel[lo] + frac * (rel[lo + 1] - rel[lo])
        } else {
            rel[n - 1]
        };
    }
    Ok(out)
}

/// Mean absolute error and root mean squared error.
pub fn mae_rmse(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<(f64, f64)> {
    check_shapes(pred, truth, "mae/rmse")?;
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, t) in pred.iter().zip(truth.iter()) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// Evaluation grid for one region: the Cartesian product of `n_x` points
/// over the region's independent-variable range (train and test share the
/// training range; test grids are simply finer) with `n_lambda` points per
/// bundle-parameter dimension. Rows are `[x, λ...]`, endpoints included.
pub fn region_grid(
    spec: &ModelSpec,
    region: RegionTag,
    n_x: usize,
    n_lambda: usize,
) -> Result<Array2<f64>> {
    if n_x < 2 || n_lambda < 2 {
        return Err(Error::Config(format!(
            "region grid needs at least 2 points per dimension, got {n_x} x {n_lambda}"
        )));
    }
    let (x_lo, x_hi) = match region {
        RegionTag::Train | RegionTag::Test => spec.train_range,
        RegionTag::Ood => spec.ood_range,
    };
    let p = spec.n_bundle_params();
    let rows = n_x * n_lambda.pow(p as u32);
    let mut grid = Array2::zeros((rows, 1 + p));
    let lin = |lo: f64, hi: f64, i: usize, n: usize| {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    };
    for (r, mut row) in grid.rows_mut().into_iter().enumerate() {
        let mut rest = r;
        let xi = rest % n_x;
        rest /= n_x;
        row[0] = lin(x_lo, x_hi, xi, n_x);
        for (j, (lo, hi)) in spec.bundle_param_box.iter().enumerate() {
            let li = rest % n_lambda;
            rest /= n_lambda;
            row[1 + j] = lin(*lo, *hi, li, n_lambda);
        }
    }
    Ok(grid)
}

/// One region's accuracy and calibration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub region_tag: RegionTag,
    pub median_re: f64,
    pub median_residual: f64,
    pub miscal_area: f64,
    pub rms_cal: f64,
    pub sharpness: f64,
    pub nll: f64,
    pub crps: f64,
    pub interval_score: f64,
    pub check_score: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Q10..Q100 of relative error, nondecreasing.
    pub quantiles: [f64; 10],
}

/// Assemble the full report for one region. `median_residual` is supplied by
/// the caller since it needs the model and network, not just arrays.
pub fn eval_report(
    region_tag: RegionTag,
    pred_mean: &Array2<f64>,
    pred_std: &Array2<f64>,
    truth: &Array2<f64>,
    median_residual: f64,
) -> Result<EvalReport> {
    let median_re = median_relative_error(pred_mean, truth)?;
    let (miscal_area, rms_cal) = miscalibration_area(pred_mean, pred_std, truth)?;
    let scores = proper_scores(pred_mean, pred_std, truth)?;
    let quantiles = decile_table(pred_mean, truth)?;
    let (mae, rmse) = mae_rmse(pred_mean, truth)?;
    Ok(EvalReport {
        region_tag,
        median_re,
        median_residual,
        miscal_area,
        rms_cal,
        sharpness: scores.sharpness,
        nll: scores.nll,
        crps: scores.crps,
        interval_score: scores.interval_score,
        check_score: scores.check_score,
        mae,
        rmse,
        quantiles,
    })
}

#[cfg(test)]
mod tests;
