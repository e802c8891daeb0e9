use ndarray::{arr2, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::models::ModelId;
use crate::rngutil::stream_rng;

fn grid_lcdm(n_x: usize, n_l: usize) -> (ModelSpec, Array2<f64>) {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let grid = region_grid(&spec, RegionTag::Train, n_x, n_l).unwrap();
    (spec, grid)
}

/// Composite Simpson rule over [a, b] with 2n+1 evaluation points.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / (2 * n) as f64;
    let mut sum = f(a) + f(b);
    for i in 1..2 * n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

#[test]
fn exact_predictions_have_zero_relative_error() {
    let truth = arr2(&[[1.0, -2.0], [0.5, 3.0]]);
    assert_eq!(median_relative_error(&truth, &truth).unwrap(), 0.0);
    let scaled = truth.mapv(|t| 1.1 * t);
    let mre = median_relative_error(&scaled, &truth).unwrap();
    assert!((mre - 0.1).abs() < 1e-12, "mre = {mre}");
}

#[test]
fn relative_error_floors_the_denominator_and_ignores_common_scales() {
    // Zero truth: the floor keeps the ratio finite.
    let pred = arr2(&[[1e-6]]);
    let truth = arr2(&[[0.0]]);
    let rel = relative_errors(&pred, &truth).unwrap();
    assert!((rel[0] - 1e-6 / 1e-12).abs() / rel[0] < 1e-12);

    // Simultaneous positive scaling leaves the metric alone.
    let p = arr2(&[[1.0, 2.0], [3.0, -4.0], [0.5, 0.25]]);
    let t = arr2(&[[1.1, 1.9], [3.3, -4.4], [0.45, 0.2]]);
    let a = median_relative_error(&p, &t).unwrap();
    let b = median_relative_error(&p.mapv(|v| 3.7 * v), &t.mapv(|v| 3.7 * v)).unwrap();
    assert!((a - b).abs() < 1e-12);

    // Shape mismatches and empty inputs are rejected.
    assert!(median_relative_error(&p, &arr2(&[[1.0], [2.0], [3.0]])).is_err());
    assert!(median_relative_error(&Array2::zeros((0, 1)), &Array2::zeros((0, 1))).is_err());
}

#[test]
fn metrics_ignore_point_ordering() {
    let n = 40;
    let mut rng = stream_rng(7, "shuffle");
    let mut mean = Array2::zeros((n, 1));
    let mut std = Array2::zeros((n, 1));
    let mut truth = Array2::zeros((n, 1));
    for i in 0..n {
        mean[[i, 0]] = rng.gen_range(-2.0..2.0);
        std[[i, 0]] = rng.gen_range(0.1..1.5);
        truth[[i, 0]] = mean[[i, 0]] + rng.gen_range(-1.0..1.0);
    }
    // Reverse is a permutation; every metric must agree exactly.
    let rev = |a: &Array2<f64>| {
        let mut b = a.clone();
        for i in 0..n {
            b[[i, 0]] = a[[n - 1 - i, 0]];
        }
        b
    };
    let (rm, rs, rt) = (rev(&mean), rev(&std), rev(&truth));
    assert_eq!(
        median_relative_error(&mean, &truth).unwrap(),
        median_relative_error(&rm, &rt).unwrap()
    );
    assert_eq!(
        miscalibration_area(&mean, &std, &truth).unwrap(),
        miscalibration_area(&rm, &rs, &rt).unwrap()
    );
    assert_eq!(
        decile_table(&mean, &truth).unwrap(),
        decile_table(&rm, &rt).unwrap()
    );
    let a = proper_scores(&mean, &std, &truth).unwrap();
    let b = proper_scores(&rm, &rs, &rt).unwrap();
    assert!((a.nll - b.nll).abs() < 1e-12);
    assert!((a.crps - b.crps).abs() < 1e-12);
    assert!((a.check_score - b.check_score).abs() < 1e-12);
}

#[test]
fn exact_solutions_have_vanishing_residuals() {
    for id in [ModelId::Lcdm, ModelId::Cpl] {
        let spec = ModelSpec::new(id);
        let grid = region_grid(&spec, RegionTag::Train, 9, 4).unwrap();
        let n = grid.nrows();
        let mut values = Array2::zeros((n, spec.state_dim));
        let mut tangents = Array2::zeros((n, spec.state_dim));
        let h = 1e-6;
        for i in 0..n {
            let z = grid[[i, 0]];
            let lam: Vec<f64> = (1..grid.ncols()).map(|j| grid[[i, j]]).collect();
            let u = spec.analytic_solution(z, &lam).unwrap();
            // Central difference of the closed form: exact enough for 1e-10.
            let up = spec.analytic_solution(z + h, &lam).unwrap();
            let um = spec.analytic_solution(z - h, &lam).unwrap();
            for k in 0..spec.state_dim {
                values[[i, k]] = u[k];
                tangents[[i, k]] = (up[k] - um[k]) / (2.0 * h);
            }
        }
        let med = median_residual_from_values(&spec, &grid, &values, &tangents).unwrap();
        assert!(med <= 1e-5, "{id:?}: median residual {med}");
    }

    // With exact derivatives the residual vanishes to rounding error.
    let spec = ModelSpec::new(ModelId::Lcdm);
    let grid = region_grid(&spec, RegionTag::Train, 9, 4).unwrap();
    let n = grid.nrows();
    let mut values = Array2::zeros((n, 1));
    let mut tangents = Array2::zeros((n, 1));
    for i in 0..n {
        let (z, om) = (grid[[i, 0]], grid[[i, 1]]);
        values[[i, 0]] = om * (1.0 + z).powi(3);
        tangents[[i, 0]] = 3.0 * om * (1.0 + z).powi(2);
    }
    let med = median_residual_from_values(&spec, &grid, &values, &tangents).unwrap();
    assert!(med <= 1e-10, "median residual {med}");
}

#[test]
fn network_residual_median_matches_a_naive_loop() {
    let (spec, grid) = grid_lcdm(7, 4);
    let params =
        crate::nn::NetworkParams::glorot(&[2, 6, 1], &mut stream_rng(3, "net")).unwrap();
    let fast = median_residual(&spec, &params, &grid).unwrap();

    let mut abs = Vec::new();
    for i in 0..grid.nrows() {
        let lam = [grid[[i, 1]]];
        let r = crate::train::residual(&spec, &params, grid[[i, 0]], &lam).unwrap();
        abs.extend(r.iter().map(|v| v.abs()));
    }
    abs.sort_by(|a, b| a.total_cmp(b));
    let n = abs.len();
    let naive = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    assert!((fast - naive).abs() < 1e-12, "{fast} vs {naive}");

    // Same seed and grid: identical value on recomputation.
    assert_eq!(fast, median_residual(&spec, &params, &grid).unwrap());
}

#[test]
fn perfectly_calibrated_data_has_small_miscalibration() {
    let n = 100_000;
    let mut rng = stream_rng(11, "calibration");
    let mut mean = Array2::zeros((n, 1));
    let mut std = Array2::zeros((n, 1));
    let mut truth = Array2::zeros((n, 1));
    for i in 0..n {
        mean[[i, 0]] = rng.gen_range(-1.0..1.0);
        std[[i, 0]] = rng.gen_range(0.5..2.0);
        let eps: f64 = rng.sample(StandardNormal);
        truth[[i, 0]] = mean[[i, 0]] + std[[i, 0]] * eps;
    }
    let (ma, rms) = miscalibration_area(&mean, &std, &truth).unwrap();
    assert!(ma < 0.01, "MA = {ma}");
    assert!(rms < 0.015, "RMS = {rms}");

    // Grossly inflated widths are badly calibrated in the other direction.
    let wide = std.mapv(|s| 10.0 * s);
    let (ma_wide, _) = miscalibration_area(&mean, &wide, &truth).unwrap();
    assert!(ma_wide > 0.3, "MA = {ma_wide}");
}

#[test]
fn zero_width_intervals_degenerate_to_half_area() {
    let mean = Array2::zeros((50, 1));
    let std = Array2::zeros((50, 1));
    let mut truth = Array2::zeros((50, 1));
    for i in 0..50 {
        truth[[i, 0]] = 0.01 + i as f64;
    }
    let (ma, rms) = miscalibration_area(&mean, &std, &truth).unwrap();
    assert_eq!(ma, 0.5);
    // Coverage is identically zero, so the RMS is the quadratic mean of the
    // expected coverages themselves.
    let want: f64 = {
        let mut s = 0.0;
        for j in 1..=99 {
            let p = j as f64 / 100.0;
            s += p * p;
        }
        (s / 99.0).sqrt()
    };
    assert!((rms - want).abs() < 1e-15);

    // Negative or non-finite stds are rejected.
    let bad = Array2::from_elem((50, 1), -0.1);
    assert!(miscalibration_area(&mean, &bad, &truth).is_err());
}

#[test]
fn proper_scores_match_closed_forms_at_the_center() {
    let n = 8;
    let mean = Array2::from_elem((n, 1), 0.3);
    let std = Array2::ones((n, 1));
    let scores = proper_scores(&mean, &std, &mean).unwrap();

    let half_ln_tau = 0.5 * std::f64::consts::TAU.ln();
    assert!((scores.nll - half_ln_tau).abs() < 1e-12);
    // CRPS at z = 0: sigma * (2 phi(0) - 1/sqrt(pi)).
    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let want_crps = 2.0 * phi0 - 1.0 / std::f64::consts::PI.sqrt();
    assert!((scores.crps - want_crps).abs() < 1e-12);
    assert!((want_crps - 0.23369).abs() < 1e-5);
    assert_eq!(scores.sharpness, 1.0);

    // Truth inside the central interval: the score is just its width.
    use statrs::distribution::{ContinuousCDF, Normal};
    let z95 = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    assert!((scores.interval_score - 2.0 * z95).abs() < 1e-12);

    // Zero or negative stds are rejected here (unlike miscalibration).
    assert!(proper_scores(&mean, &Array2::zeros((n, 1)), &mean).is_err());
}

#[test]
fn sharpness_scales_linearly_with_the_stds() {
    let mut rng = stream_rng(5, "sharp");
    let n = 30;
    let mut mean = Array2::zeros((n, 1));
    let mut std = Array2::zeros((n, 1));
    let mut truth = Array2::zeros((n, 1));
    for i in 0..n {
        mean[[i, 0]] = rng.gen_range(-1.0..1.0);
        std[[i, 0]] = rng.gen_range(0.2..2.0);
        truth[[i, 0]] = rng.gen_range(-1.5..1.5);
    }
    let a = proper_scores(&mean, &std, &truth).unwrap();
    let b = proper_scores(&mean, &std.mapv(|s| 3.0 * s), &truth).unwrap();
    assert!((b.sharpness - 3.0 * a.sharpness).abs() / b.sharpness < 1e-12);
}

#[test]
fn crps_matches_numerical_quadrature() {
    for (m, s, t) in [(0.0, 1.0, 0.7), (2.0, 0.5, 1.0), (-1.0, 2.0, -4.0)] {
        let scores = proper_scores(
            &arr2(&[[m]]),
            &arr2(&[[s]]),
            &arr2(&[[t]]),
        )
        .unwrap();
        // CRPS = integral of (F(y) - step(y - t))^2 dy.
        use statrs::distribution::{ContinuousCDF, Normal};
        let normal = Normal::new(m, s).unwrap();
        let lo = (m - 12.0 * s).min(t - 12.0 * s);
        let hi = (m + 12.0 * s).max(t + 12.0 * s);
        // Split at the jump so each piece is smooth, including its endpoints.
        let below = |y: f64| normal.cdf(y).powi(2);
        let above = |y: f64| (normal.cdf(y) - 1.0).powi(2);
        let want = simpson(below, lo, t, 20_000) + simpson(above, t, hi, 20_000);
        assert!(
            (scores.crps - want).abs() < 1e-6,
            "crps {} vs quadrature {want}",
            scores.crps
        );
    }
}

#[test]
fn nll_agrees_with_the_supervised_gaussian_likelihood() {
    use crate::bayes::{build_dataset, gaussian_loglik, LikelihoodSpec};
    use crate::train::{train_with_spec, TrainConfig};
    let cfg = TrainConfig {
        model_id: ModelId::Lcdm,
        hidden: vec![8],
        iterations: 0,
        samples_per_dim: 4,
        lr: 1e-3,
        lr_floor: None,
        seed: 9,
    };
    let spec = ModelSpec::new(ModelId::Lcdm);
    let init = crate::nn::NetworkParams::glorot(&cfg.layer_sizes(&spec), &mut stream_rng(9, "i"))
        .unwrap();
    let det = train_with_spec(&cfg, spec, Some(init)).unwrap();
    let like = LikelihoodSpec::Homoscedastic(0.3);
    let set = build_dataset(&det, &like, 6, &mut stream_rng(2, "set")).unwrap();

    let eval_net =
        crate::nn::NetworkParams::glorot(&[2, 5, 1], &mut stream_rng(4, "eval")).unwrap();
    let pred = crate::nn::forward(&eval_net, &set.inputs).unwrap();
    let scores = proper_scores(&pred, &set.sigma_like, &set.targets).unwrap();
    let ll = gaussian_loglik(&set, &pred).unwrap();
    let n = set.targets.len() as f64;
    assert!(
        (scores.nll - (-ll / n)).abs() < 1e-9,
        "nll {} vs {}",
        scores.nll,
        -ll / n
    );
}

#[test]
fn interval_and_check_scores_match_literal_formulas() {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = stream_rng(13, "scores");
    let n = 25;
    let mut mean = Array2::zeros((n, 2));
    let mut std = Array2::zeros((n, 2));
    let mut truth = Array2::zeros((n, 2));
    for i in 0..n {
        for k in 0..2 {
            mean[[i, k]] = rng.gen_range(-2.0..2.0);
            std[[i, k]] = rng.gen_range(0.1..1.0);
            truth[[i, k]] = rng.gen_range(-3.0..3.0);
        }
    }
    let scores = proper_scores(&mean, &std, &truth).unwrap();

    let z95 = normal.inverse_cdf(0.975);
    let mut interval = 0.0;
    let mut check = 0.0;
    for ((m, s), t) in mean.iter().zip(std.iter()).zip(truth.iter()) {
        let (lo, hi) = (m - z95 * s, m + z95 * s);
        interval += (hi - lo) + 40.0 * (lo - t).max(0.0) + 40.0 * (t - hi).max(0.0);
        let mut pin = 0.0;
        for k in 1..10 {
            let tau = k as f64 / 10.0;
            let q = m + normal.inverse_cdf(tau) * s;
            pin += if *t >= q { tau * (t - q) } else { (1.0 - tau) * (q - t) };
        }
        check += pin / 9.0;
    }
    let cnt = mean.len() as f64;
    assert!((scores.interval_score - interval / cnt).abs() < 1e-12);
    assert!((scores.check_score - check / cnt).abs() < 1e-12);
    assert!(scores.check_score >= 0.0);
}

#[test]
fn decile_tables_follow_order_statistics() {
    // Constant relative error: every decile equals it.
    let truth = Array2::from_elem((40, 1), 2.0);
    let pred = truth.mapv(|t| 1.1 * t);
    let q = decile_table(&pred, &truth).unwrap();
    for v in q {
        assert!((v - 0.1).abs() < 1e-12, "decile {v}");
    }

    // Uniform relative errors: deciles land near 0.1 .. 1.0.
    let n = 20_000;
    let mut rng = stream_rng(19, "uniform");
    let t = Array2::ones((n, 1));
    let mut p = Array2::ones((n, 1));
    for i in 0..n {
        let e: f64 = rng.gen_range(0.0..1.0);
        p[[i, 0]] = t[[i, 0]] * (1.0 + e);
    }
    let q = decile_table(&p, &t).unwrap();
    for (k, v) in q.iter().enumerate() {
        let want = (k + 1) as f64 / 10.0;
        let tol = if k == 9 { 0.001 } else { 2.0 / (n as f64).sqrt() * 1.5 };
        assert!((v - want).abs() < tol.max(0.001), "Q{}0 = {v}", k + 1);
    }
    for w in q.windows(2) {
        assert!(w[0] <= w[1]);
    }
    // The last decile is the maximum exactly.
    let max_rel = relative_errors(&p, &t)
        .unwrap()
        .into_iter()
        .fold(0.0_f64, f64::max);
    assert_eq!(q[9], max_rel);

    assert!(decile_table(&Array2::zeros((0, 1)), &Array2::zeros((0, 1))).is_err());
}

#[test]
fn mae_and_rmse_match_hand_computation() {
    let pred = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
    let truth = arr2(&[[0.0, 2.0], [5.0, 2.0]]);
    let (mae, rmse) = mae_rmse(&pred, &truth).unwrap();
    assert!((mae - (1.0 + 0.0 + 2.0 + 2.0) / 4.0).abs() < 1e-15);
    assert!((rmse - ((1.0 + 0.0 + 4.0 + 4.0) / 4.0_f64).sqrt()).abs() < 1e-15);
}

#[test]
fn region_grids_cover_the_declared_ranges() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let train = region_grid(&spec, RegionTag::Train, 5, 3).unwrap();
    assert_eq!(train.dim(), (15, 2));
    let xs: Vec<f64> = train.column(0).to_vec();
    assert!(xs.contains(&0.0) && xs.contains(&3.0));
    assert!(xs.iter().all(|x| (0.0..=3.0).contains(x)));
    let ls: Vec<f64> = train.column(1).to_vec();
    assert!(ls.iter().all(|l| (0.1..=0.4).contains(l)));
    assert!(ls.contains(&0.1) && ls.contains(&0.4));

    let test = region_grid(&spec, RegionTag::Test, 11, 3).unwrap();
    assert_eq!(test.nrows(), 33);
    assert!(test.column(0).iter().all(|x| (0.0..=3.0).contains(x)));

    let ood = region_grid(&spec, RegionTag::Ood, 4, 3).unwrap();
    assert!(ood.column(0).iter().all(|x| (3.0..=4.0).contains(x)));

    // Two bundle dimensions multiply out.
    let quint = ModelSpec::new(ModelId::Quintessence);
    let g = region_grid(&quint, RegionTag::Train, 4, 3).unwrap();
    assert_eq!(g.dim(), (4 * 9, 3));

    assert!(region_grid(&spec, RegionTag::Train, 1, 3).is_err());
    assert!(region_grid(&spec, RegionTag::Train, 3, 1).is_err());
}

#[test]
fn eval_reports_assemble_and_round_trip() {
    let mut rng = stream_rng(23, "report");
    let n = 60;
    let mut mean = Array2::zeros((n, 1));
    let mut std = Array2::zeros((n, 1));
    let mut truth = Array2::zeros((n, 1));
    for i in 0..n {
        mean[[i, 0]] = rng.gen_range(-1.0..1.0);
        std[[i, 0]] = rng.gen_range(0.1..0.6);
        let eps: f64 = rng.sample(StandardNormal);
        truth[[i, 0]] = mean[[i, 0]] + std[[i, 0]] * eps;
    }
    let report = eval_report(RegionTag::Test, &mean, &std, &truth, 1.5e-3).unwrap();
    assert_eq!(report.region_tag, RegionTag::Test);
    assert_eq!(report.median_residual, 1.5e-3);
    assert!((0.0..=0.5).contains(&report.miscal_area));
    assert!(report.rms_cal >= report.miscal_area * 0.5);
    for w in report.quantiles.windows(2) {
        assert!(w[0] <= w[1]);
    }
    assert!(report.sharpness > 0.0);
    assert!(report.rmse >= report.mae * 0.999);

    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(report, back);
}

#[test]
fn posterior_residuals_pick_the_matching_network_reading() {
    use crate::bayes::PosteriorHandle;
    use crate::bayes::NutsDiagnostics;
    let (spec, grid) = grid_lcdm(6, 3);
    let layer_sizes = vec![2, 5, 1];
    let net =
        crate::nn::NetworkParams::glorot(&layer_sizes, &mut stream_rng(31, "n")).unwrap();
    let flat = net.flatten();
    let samples = ndarray::Array2::from_shape_vec((1, flat.len()), flat.to_vec()).unwrap();
    let diag = NutsDiagnostics {
        divergences: 0,
        mean_accept: 1.0,
        step_size: 0.1,
        max_depth_hits: 0,
    };
    let enforced = PosteriorHandle::Nuts {
        layer_sizes: layer_sizes.clone(),
        samples: samples.clone(),
        prior_std: 1.0,
        sigma_floor: 1e-9,
        enforced_pinn: true,
        diagnostics: diag.clone(),
    };
    let direct = PosteriorHandle::Nuts {
        layer_sizes,
        samples,
        prior_std: 1.0,
        sigma_floor: 1e-9,
        enforced_pinn: false,
        diagnostics: diag,
    };

    // Enforced handle: identical to the enforced-network residual.
    let a = posterior_median_residual(&spec, &enforced, &grid).unwrap();
    assert_eq!(a, median_residual(&spec, &net, &grid).unwrap());

    // Direct handle: identical to the plain forward residual.
    let b = posterior_median_residual(&spec, &direct, &grid).unwrap();
    let batch = crate::nn::forward_with_time_derivative(&net, &grid, 0).unwrap();
    let want =
        median_residual_from_values(&spec, &grid, &batch.values, &batch.tangents).unwrap();
    assert_eq!(b, want);
    assert_ne!(a, b);
}

#[test]
fn rk_truth_agrees_with_the_closed_form_where_one_exists() {
    use crate::models::{truth_on_points, Oracle};
    for id in [ModelId::Lcdm, ModelId::Cpl] {
        let spec = ModelSpec::new(id);
        for region in [RegionTag::Train, RegionTag::Ood] {
            let grid = region_grid(&spec, region, 6, 3).unwrap();
            let exact = truth_on_points(&spec, &grid, Oracle::Analytic).unwrap();
            let rk = truth_on_points(&spec, &grid, Oracle::Rk).unwrap();
            let mre = median_relative_error(&rk, &exact).unwrap();
            assert!(mre < 1e-8, "{id:?} {region:?}: mre {mre}");
        }
    }
}

#[test]
fn rk_truth_handles_backward_domains_and_ic_rows() {
    use crate::models::{truth_on_points, Oracle};
    let spec = ModelSpec::new(ModelId::Quintessence);
    assert!(truth_on_points(
        &spec,
        &region_grid(&spec, RegionTag::Train, 3, 2).unwrap(),
        Oracle::Analytic
    )
    .is_err());

    // Train rows run from 0 up to the initial condition at 10; the z = 10
    // rows must carry the exact initial state.
    let grid = region_grid(&spec, RegionTag::Train, 5, 2).unwrap();
    let truth = truth_on_points(&spec, &grid, Oracle::Rk).unwrap();
    for i in 0..grid.nrows() {
        assert!(truth.row(i).iter().all(|v| v.is_finite()));
        if grid[[i, 0]] == 10.0 {
            let lam: Vec<f64> = (1..grid.ncols()).map(|j| grid[[i, j]]).collect();
            let ic = spec.initial_state(&lam).unwrap();
            assert_eq!(truth.row(i).to_vec(), ic);
        }
    }

    // A grid straddling the initial condition integrates on both sides.
    let spec_ood = ModelSpec::new(ModelId::Quintessence);
    let mut straddle = Array2::zeros((3, 3));
    for (i, x) in [9.5, 10.0, 10.5].iter().enumerate() {
        straddle[[i, 0]] = *x;
        straddle[[i, 1]] = 1.0;
        straddle[[i, 2]] = 0.3;
    }
    let t = truth_on_points(&spec_ood, &straddle, Oracle::Rk).unwrap();
    assert!(t.iter().all(|v| v.is_finite()));
    let ic = spec_ood.initial_state(&[1.0, 0.3]).unwrap();
    assert_eq!(t.row(1).to_vec(), ic);
    assert_ne!(t.row(0).to_vec(), t.row(2).to_vec());
}
