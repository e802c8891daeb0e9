use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::nn;

use super::*;

fn all_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new(ModelId::Lcdm),
        ModelSpec::new(ModelId::Cpl),
        ModelSpec::new(ModelId::Quintessence),
        ModelSpec::new(ModelId::Hs),
    ]
}

fn random_lambda(spec: &ModelSpec, rng: &mut impl Rng) -> Vec<f64> {
    spec.bundle_param_box
        .iter()
        .map(|&(lo, hi)| rng.gen_range(lo..hi))
        .collect()
}

#[test]
fn lcdm_rhs_direct_value() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let out = spec.rhs(1.0, &[2.4], &[0.3]).unwrap();
    assert_relative_eq!(out[0], 3.6, max_relative = 1e-15);
}

#[test]
fn cpl_rhs_cosmological_constant_limit() {
    let spec = ModelSpec::new(ModelId::Cpl);
    for &z in &[0.0, 0.7, 2.9] {
        let out = spec.rhs(z, &[0.7], &[-1.0, 0.0]).unwrap();
        assert_eq!(out[0], 0.0);
    }
}

#[test]
fn hs_gamma_direct_value() {
    // With b = 1, r = 1: Gamma = (2)(4 - 2)/4 = 1, so dr/dz at z = 0 with
    // state x = 1 is -r * Gamma * x / (z + 1) = -1.
    let spec = ModelSpec::new(ModelId::Hs);
    let state = [1.0, 0.0, 0.0, 0.0, 1.0];
    let out = spec.rhs(0.0, &state, &[1.0, 0.3]).unwrap();
    assert_relative_eq!(out[4], -1.0, max_relative = 1e-14);
}

#[test]
fn hs_singularities_are_reported() {
    let spec = ModelSpec::new(ModelId::Hs);
    let state = [0.0, 0.5, 0.5, 0.3, 10.0];
    assert!(spec.rhs(0.0, &state, &[0.0, 0.3]).is_err());
    let zero_r = [0.0, 0.5, 0.5, 0.3, 0.0];
    assert!(spec.rhs(0.0, &zero_r, &[1.0, 0.3]).is_err());
    assert!(spec.rhs(-1.0, &state, &[1.0, 0.3]).is_err());
}

#[test]
fn initial_states_match_formulas() {
    let lcdm = ModelSpec::new(ModelId::Lcdm);
    assert_eq!(lcdm.initial_state(&[0.3]).unwrap(), vec![0.3]);

    let cpl = ModelSpec::new(ModelId::Cpl);
    assert_relative_eq!(
        cpl.initial_state(&[-1.0, 0.0]).unwrap()[0],
        0.7,
        max_relative = 1e-15
    );

    // At z_0 = 0 the HS matter fraction reduces to omega itself.
    let hs = ModelSpec::new(ModelId::Hs).with_ic_point(0.0);
    let ic = hs.initial_state(&[1.0, 0.3]).unwrap();
    assert_relative_eq!(ic[3], 0.3, max_relative = 1e-14);
    assert_eq!(ic[0], 0.0);
}

#[test]
fn quintessence_initial_state_matches_formula() {
    let spec = ModelSpec::new(ModelId::Quintessence);
    let omega = 0.3;
    let ic = spec.initial_state(&[1.0, omega]).unwrap();
    let m = omega * 11.0_f64.powi(3);
    assert_eq!(ic[0], 0.0);
    assert_relative_eq!(
        ic[1],
        ((1.0 - omega) / (m + 1.0 - omega)).sqrt(),
        max_relative = 1e-14
    );
}

#[test]
fn enforcement_is_exact_at_ic_point_for_all_models() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for spec in all_models() {
        for _ in 0..250 {
            let lam = random_lambda(&spec, &mut rng);
            let raw: Vec<f64> = (0..spec.state_dim).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let enforced = spec.enforce_ic(spec.ic_point, &raw, &lam).unwrap();
            let u0 = spec.initial_state(&lam).unwrap();
            for (a, b) in enforced.iter().zip(&u0) {
                assert!((a - b).abs() <= 1e-12, "{}: {a} vs {b}", spec.id);
            }
        }
    }
}

#[test]
fn zero_raw_output_reproduces_initial_state_everywhere() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let zero = vec![0.0];
    for &z in &[0.0, 0.5, 2.0, 4.0] {
        let out = spec.enforce_ic(z, &zero, &[0.25]).unwrap();
        assert_eq!(out[0], 0.25);
    }
}

#[test]
fn enforcement_coefficient_is_monotone_and_saturates() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let mut prev = -1.0;
    for i in 0..=100 {
        let x = 0.1 * i as f64;
        let (c, dc) = spec.enforce_coefficient(x);
        assert!(c > prev);
        assert!(dc > 0.0);
        prev = c;
    }
    let (c_far, _) = spec.enforce_coefficient(30.0);
    assert!((c_far - 1.0).abs() < 1e-12);
}

#[test]
fn backward_models_keep_coefficient_bounded_on_domain() {
    // IC at z0 = 10: the coefficient must stay in [0, 1) across [0, z0]
    // rather than blowing up exponentially toward z = 0.
    let spec = ModelSpec::new(ModelId::Quintessence);
    assert_eq!(spec.direction(), -1.0);
    for i in 0..=100 {
        let z = 0.1 * i as f64;
        let (c, _) = spec.enforce_coefficient(z);
        assert!((0.0..1.0).contains(&c), "c({z}) = {c}");
    }
    let (c0, _) = spec.enforce_coefficient(10.0);
    assert_eq!(c0, 0.0);
}

#[test]
fn hubble_examples() {
    let lcdm = ModelSpec::new(ModelId::Lcdm);
    let hp = HubbleParams::new(70.0, 0.3).unwrap();
    assert_relative_eq!(lcdm.hubble(0.0, &[0.3], &hp).unwrap(), 70.0, max_relative = 1e-14);

    let hp2 = HubbleParams::new(68.5, 0.31).unwrap();
    let x_m = 0.31 * 8.0;
    assert_relative_eq!(
        lcdm.hubble(1.0, &[x_m], &hp2).unwrap(),
        68.5 * (2.48_f64 + 0.69).sqrt(),
        max_relative = 1e-12
    );

    let quint = ModelSpec::new(ModelId::Quintessence);
    assert!(quint.hubble(1.0, &[0.8, 0.7], &hp).is_err());
}

#[test]
fn hubble_params_are_validated() {
    assert!(HubbleParams::new(-1.0, 0.3).is_err());
    assert!(HubbleParams::new(70.0, 1.2).is_err());
    assert!(HubbleParams::new(70.0, 0.3).is_ok());
}

#[test]
fn analytic_solutions_match_examples() {
    let lcdm = ModelSpec::new(ModelId::Lcdm);
    assert_relative_eq!(
        lcdm.analytic_solution(1.0, &[0.3]).unwrap()[0],
        2.4,
        max_relative = 1e-14
    );

    let cpl = ModelSpec::new(ModelId::Cpl);
    for &z in &[0.0, 1.3, 3.0] {
        assert_relative_eq!(
            cpl.analytic_solution(z, &[-1.0, 0.0]).unwrap()[0],
            0.7,
            max_relative = 1e-14
        );
    }

    assert!(ModelSpec::new(ModelId::Hs).analytic_solution(1.0, &[1.0, 0.3]).is_err());
}

#[test]
fn analytic_derivative_matches_rhs() {
    // d/dz of the closed forms, by central difference, must satisfy the ODE.
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    for spec in [ModelSpec::new(ModelId::Lcdm), ModelSpec::new(ModelId::Cpl)] {
        for _ in 0..20 {
            let lam = random_lambda(&spec, &mut rng);
            let z = rng.gen_range(0.05..2.95);
            let h = 1e-6;
            let up = spec.analytic_solution(z + h, &lam).unwrap()[0];
            let dn = spec.analytic_solution(z - h, &lam).unwrap()[0];
            let fd = (up - dn) / (2.0 * h);
            let u = spec.analytic_solution(z, &lam).unwrap();
            let rhs = spec.rhs(z, &u, &lam).unwrap()[0];
            let tol = 1e-6 * rhs.abs().max(1.0);
            assert!((fd - rhs).abs() <= tol, "{}: fd {fd} vs rhs {rhs}", spec.id);
        }
    }
}

#[test]
fn rk_matches_lcdm_analytic() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let grid: Vec<f64> = (0..=60).map(|i| 0.05 * i as f64).collect();
    let sol = rk_solve(&spec, &[0.3], &grid).unwrap();
    for (i, &z) in grid.iter().enumerate() {
        let exact = spec.analytic_solution(z, &[0.3]).unwrap()[0];
        let rel = (sol[[i, 0]] - exact).abs() / exact.abs();
        assert!(rel < 1e-8, "z = {z}: rel err {rel}");
    }
}

#[test]
fn cpl_analytic_matches_rk_for_random_parameters() {
    let spec = ModelSpec::new(ModelId::Cpl);
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    for _ in 0..5 {
        let lam = random_lambda(&spec, &mut rng);
        let omega = rng.gen_range(0.1..0.4);
        let spec = spec.clone().with_omega_fiducial(omega);
        let grid: Vec<f64> = (0..=30).map(|i| 0.1 * i as f64).collect();
        let sol = rk_solve_with_step(&spec, &lam, &grid, 1e-4).unwrap();
        for (i, &z) in grid.iter().enumerate() {
            let exact = spec.analytic_solution(z, &lam).unwrap()[0];
            let rel = (sol[[i, 0]] - exact).abs() / exact.abs().max(1e-300);
            assert!(rel < 1e-8, "lam {lam:?} z {z}: rel {rel}");
        }
    }
}

#[test]
fn rk_fourth_order_convergence_on_lcdm() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    let grid = [0.0, 3.0];
    let exact = spec.analytic_solution(3.0, &[0.3]).unwrap()[0];
    let err = |h: f64| {
        let sol = rk_solve_with_step(&spec, &[0.3], &grid, h).unwrap();
        (sol[[1, 0]] - exact).abs()
    };
    let e1 = err(0.1);
    let e2 = err(0.05);
    let ratio = e1 / e2;
    assert!(
        (12.0..=20.0).contains(&ratio),
        "expected ~16x error reduction, got {ratio} (e1 = {e1}, e2 = {e2})"
    );
}

#[test]
fn rk_single_point_grid_returns_initial_state() {
    let spec = ModelSpec::new(ModelId::Quintessence);
    let sol = rk_solve(&spec, &[1.0, 0.3], &[10.0]).unwrap();
    let ic = spec.initial_state(&[1.0, 0.3]).unwrap();
    assert_eq!(sol.row(0).to_vec(), ic);
}

#[test]
fn rk_rejects_bad_grids() {
    let spec = ModelSpec::new(ModelId::Lcdm);
    assert!(rk_solve(&spec, &[0.3], &[0.5, 1.0]).is_err());
    assert!(rk_solve(&spec, &[0.3], &[0.0, 1.0, 0.5]).is_err());
    assert!(rk_solve(&spec, &[0.3], &[]).is_err());
}

#[test]
fn backward_integration_reaches_present_day() {
    // Both far-IC systems integrate from z0 = 10 down to 0 with finite states,
    // and their Hubble value at the IC matches the matter-dominated limit
    // H0 * sqrt(om (1+z0)^3 + 1 - om) implied by the IC construction.
    for (spec, lam) in [
        (ModelSpec::new(ModelId::Quintessence), vec![0.5, 0.3]),
        (ModelSpec::new(ModelId::Hs), vec![1.0, 0.3]),
    ] {
        let grid: Vec<f64> = (0..=50).map(|i| 10.0 - 0.2 * i as f64).collect();
        let sol = rk_solve(&spec, &lam, &grid).unwrap();
        assert!(sol.iter().all(|v| v.is_finite()));

        let hp = HubbleParams::new(70.0, 0.3).unwrap();
        let h_ic = spec.hubble(10.0, &sol.row(0).to_vec(), &hp).unwrap();
        let expect = 70.0 * (0.3 * 11.0_f64.powi(3) + 0.7).sqrt();
        assert_relative_eq!(h_ic, expect, max_relative = 1e-10);
    }

    // HS starts in the high-redshift matter-dominated limit where f(R) tracks
    // the cosmological-constant case, so its present-day Hubble value stays in
    // the physical range.
    let hs = ModelSpec::new(ModelId::Hs);
    let grid: Vec<f64> = (0..=50).map(|i| 10.0 - 0.2 * i as f64).collect();
    let sol = rk_solve(&hs, &[1.0, 0.3], &grid).unwrap();
    let hp = HubbleParams::new(70.0, 0.3).unwrap();
    let h0 = hs.hubble(0.0, &sol.row(50).to_vec(), &hp).unwrap();
    assert!(h0 > 40.0 && h0 < 110.0, "hs: H(0) = {h0}");
}

#[test]
fn rhs_jacobian_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(29);
    for spec in all_models() {
        let lam = random_lambda(&spec, &mut rng);
        let state: Vec<f64> = match spec.id {
            ModelId::Quintessence => vec![0.3, 0.5],
            ModelId::Hs => vec![0.1, 0.6, 0.8, 0.4, 20.0],
            _ => vec![rng.gen_range(0.3..3.0)],
        };
        let x = 1.3;
        let (value, jac) = spec.rhs_jacobian(x, &state, &lam).unwrap();
        let direct = spec.rhs(x, &state, &lam).unwrap();
        for (a, b) in value.iter().zip(&direct) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        for j in 0..spec.state_dim {
            let h = 1e-7 * state[j].abs().max(1.0);
            let mut sp = state.clone();
            sp[j] += h;
            let mut sm = state.clone();
            sm[j] -= h;
            let fp = spec.rhs(x, &sp, &lam).unwrap();
            let fm = spec.rhs(x, &sm, &lam).unwrap();
            for i in 0..spec.state_dim {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let tol = 1e-5 * fd.abs().max(1.0);
                assert!(
                    (jac[[i, j]] - fd).abs() <= tol,
                    "{} J[{i},{j}]: dual {} vs fd {fd}",
                    spec.id,
                    jac[[i, j]]
                );
            }
        }
    }
}

#[test]
fn model_ids_parse_round_trip() {
    for id in [ModelId::Lcdm, ModelId::Cpl, ModelId::Quintessence, ModelId::Hs] {
        assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
    }
    assert!("einstein".parse::<ModelId>().is_err());
}

#[test]
fn residual_integral_recovers_pointwise_error() {
    // Toy system du/dt = cos t, u(0) = 0, exact solution sin t. For any
    // IC-enforced candidate, the integrated residual equals the pointwise
    // error: int_0^tau R dt = u_hat(tau) - u(tau).
    let mut rng = ChaCha12Rng::seed_from_u64(37);
    let net = nn::NetworkParams::glorot(&[1, 8, 1], &mut rng).unwrap();
    let tau = 2.0;
    let n = 10_000;

    let ts: Vec<f64> = (0..=n).map(|i| tau * i as f64 / n as f64).collect();
    let inputs = ndarray::Array2::from_shape_vec((ts.len(), 1), ts.clone()).unwrap();
    let dual = nn::forward_with_time_derivative(&net, &inputs, 0).unwrap();

    let candidate = |i: usize| {
        let t = ts[i];
        let c = 1.0 - (-t).exp();
        let dc = (-t).exp();
        let u_hat = c * dual.values[[i, 0]];
        let du_hat = dc * dual.values[[i, 0]] + c * dual.tangents[[i, 0]];
        (u_hat, du_hat)
    };

    let mut integral = 0.0;
    let dt = tau / n as f64;
    for i in 0..n {
        let (_, du_a) = candidate(i);
        let (_, du_b) = candidate(i + 1);
        let r_a = du_a - ts[i].cos();
        let r_b = du_b - ts[i + 1].cos();
        integral += 0.5 * (r_a + r_b) * dt;
    }

    let (u_hat_tau, _) = candidate(n);
    let pointwise = u_hat_tau - tau.sin();
    assert!(
        (integral - pointwise).abs() <= 1e-6,
        "integral {integral} vs pointwise {pointwise}"
    );
}
