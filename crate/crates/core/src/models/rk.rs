//! Classic fixed-step RK4 with dense output at requested grid points. Serves
//! as the numerical oracle for models without closed-form solutions.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::ModelSpec;

/// Substep length as a fraction of the grid span when none is given.
const DEFAULT_STEP_FRACTION: f64 = 1e-4;

fn rk4_step(spec: &ModelSpec, x: f64, state: &[f64], lam: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = spec.rhs(x, state, lam)?;
    let mid1: Vec<f64> = state.iter().zip(&k1).map(|(s, k)| s + 0.5 * h * k).collect();
    let k2 = spec.rhs(x + 0.5 * h, &mid1, lam)?;
    let mid2: Vec<f64> = state.iter().zip(&k2).map(|(s, k)| s + 0.5 * h * k).collect();
    let k3 = spec.rhs(x + 0.5 * h, &mid2, lam)?;
    let end: Vec<f64> = state.iter().zip(&k3).map(|(s, k)| s + h * k).collect();
    let k4 = spec.rhs(x + h, &end, lam)?;
    let next: Vec<f64> = (0..state.len())
        .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "rk4 step",
            location: format!("x = {x}, h = {h}"),
        });
    }
    Ok(next)
}

/// Integrate from the model's initial condition and report the state at every
/// grid point. The grid must start at `ic_point` and be strictly monotone;
/// for systems whose initial condition sits at the upper end of the domain the
/// grid decreases and integration runs with negative steps.
pub fn rk_solve(spec: &ModelSpec, lam: &[f64], grid: &[f64]) -> Result<Array2<f64>> {
    let span = grid
        .last()
        .map(|&g| (g - spec.ic_point).abs())
        .unwrap_or(0.0)
        .max(1e-12);
    rk_solve_with_step(spec, lam, grid, DEFAULT_STEP_FRACTION * span)
}

pub fn rk_solve_with_step(
    spec: &ModelSpec,
    lam: &[f64],
    grid: &[f64],
    substep: f64,
) -> Result<Array2<f64>> {
    if grid.is_empty() {
        return Err(Error::Config("rk_solve needs a nonempty grid".to_string()));
    }
    if (grid[0] - spec.ic_point).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "grid must start at ic_point {}, got {}",
            spec.ic_point, grid[0]
        )));
    }
    if !(substep.is_finite() && substep > 0.0) {
        return Err(Error::Config(format!("invalid substep {substep}")));
    }
    let increasing = grid.len() < 2 || grid[1] > grid[0];
    for w in grid.windows(2) {
        let ok = if increasing { w[1] > w[0] } else { w[1] < w[0] };
        if !ok {
            return Err(Error::Config(
                "grid must be strictly monotone away from ic_point".to_string(),
            ));
        }
    }

    let mut out = Array2::zeros((grid.len(), spec.state_dim));
    let mut state = spec.initial_state(lam)?;
    for (i, v) in state.iter().enumerate() {
        out[[0, i]] = *v;
    }
    let mut x = grid[0];
    for (row, &target) in grid.iter().enumerate().skip(1) {
        let dist = (target - x).abs();
        let n_sub = (dist / substep).ceil().max(1.0) as usize;
        let h = (target - x) / n_sub as f64;
        for _ in 0..n_sub {
            state = rk4_step(spec, x, &state, lam, h)?;
            x += h;
        }
        // Land exactly on the grid point to keep dense output free of
        // accumulation drift.
        x = target;
        for (i, v) in state.iter().enumerate() {
            out[[row, i]] = *v;
        }
    }
    Ok(out)
}
