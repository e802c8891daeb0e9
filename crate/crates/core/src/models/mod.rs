//! The four cosmology ODE systems: right-hand sides, initial conditions,
//! initial-condition enforcement, Hubble maps, and reference oracles.
//!
//! State conventions per model:
//!
//! * `lcdm` — 1 state `x_m` (matter density fraction), bundle parameter `Ω_m0`,
//!   solved in redshift z from z = 0.
//! * `cpl` — 1 state `x_DE` (dark-energy density), bundle parameters `(w0, w1)`,
//!   solved in z from 0. Its initial condition `1 - Ω_m0` uses a fiducial `Ω_m0`
//!   carried by the spec, since `Ω_m0` is not a bundle input for this model.
//! * `quintessence` — 2 states `(x, y)`, bundle parameters `(λ, Ω_m0)`. The
//!   equations are integrated directly in z on `[0, z_0]` with the initial
//!   condition at `z_0` (default 10), moving toward z = 0.
//! * `hs` — 5 states `(x, y, v, Ω, r)`, bundle parameters `(b, Ω_m0)`, same
//!   domain treatment as quintessence.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::dual::Dual;
use crate::error::{Error, Result};

mod rk;
mod scalar;

pub use rk::{rk_solve, rk_solve_with_step};
use scalar::RhsScalar;

pub const SQRT6_HALF: f64 = 1.224744871391589; // sqrt(6)/2

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Lcdm,
    Cpl,
    Quintessence,
    Hs,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::Lcdm => "lcdm",
            ModelId::Cpl => "cpl",
            ModelId::Quintessence => "quintessence",
            ModelId::Hs => "hs",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            ModelId::Lcdm | ModelId::Cpl => 1,
            ModelId::Quintessence => 2,
            ModelId::Hs => 5,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lcdm" => Ok(ModelId::Lcdm),
            "cpl" => Ok(ModelId::Cpl),
            "quintessence" => Ok(ModelId::Quintessence),
            "hs" => Ok(ModelId::Hs),
            other => Err(Error::Config(format!(
                "unknown model {other:?}; expected lcdm | cpl | quintessence | hs"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub state_dim: usize,
    pub bundle_param_names: Vec<String>,
    /// Per-parameter (lo, hi), finite with lo < hi.
    pub bundle_param_box: Vec<(f64, f64)>,
    /// Training region of the independent variable.
    pub train_range: (f64, f64),
    /// Out-of-distribution extension adjacent to the training region.
    pub ood_range: (f64, f64),
    /// Value of the independent variable where initial conditions hold.
    pub ic_point: f64,
    /// `Ω_m0` used by the CPL initial condition and analytic solution, where it
    /// is not a bundle input.
    pub omega_m0_fiducial: f64,
}

impl ModelSpec {
    pub fn new(id: ModelId) -> Self {
        match id {
            ModelId::Lcdm => ModelSpec {
                id,
                state_dim: 1,
                bundle_param_names: vec!["omega_m0".into()],
                bundle_param_box: vec![(0.1, 0.4)],
                train_range: (0.0, 3.0),
                ood_range: (3.0, 4.0),
                ic_point: 0.0,
                omega_m0_fiducial: 0.3,
            },
            ModelId::Cpl => ModelSpec {
                id,
                state_dim: 1,
                bundle_param_names: vec!["w0".into(), "w1".into()],
                bundle_param_box: vec![(-2.0, 0.0), (-4.0, 1.0)],
                train_range: (0.0, 3.0),
                ood_range: (3.0, 4.0),
                ic_point: 0.0,
                omega_m0_fiducial: 0.3,
            },
            ModelId::Quintessence => ModelSpec {
                id,
                state_dim: 2,
                bundle_param_names: vec!["lambda".into(), "omega_m0".into()],
                bundle_param_box: vec![(0.0, 3.0), (0.1, 0.4)],
                train_range: (0.0, 10.0),
                ood_range: (10.0, 11.0),
                ic_point: 10.0,
                omega_m0_fiducial: 0.3,
            },
            ModelId::Hs => ModelSpec {
                id,
                state_dim: 5,
                bundle_param_names: vec!["b".into(), "omega_m0".into()],
                bundle_param_box: vec![(0.0, 5.0), (0.1, 0.4)],
                train_range: (0.0, 10.0),
                ood_range: (10.0, 11.0),
                ic_point: 10.0,
                omega_m0_fiducial: 0.3,
            },
        }
    }

    /// Move the initial-condition point (quintessence/hs). The training region
    /// follows: `[0, z_0]` with the OOD extension `(z_0, z_0 + 1]`.
    pub fn with_ic_point(mut self, z0: f64) -> Self {
        self.ic_point = z0;
        if matches!(self.id, ModelId::Quintessence | ModelId::Hs) {
            self.train_range = (0.0, z0);
            self.ood_range = (z0, z0 + 1.0);
        }
        self
    }

    pub fn with_omega_fiducial(mut self, omega_m0: f64) -> Self {
        self.omega_m0_fiducial = omega_m0;
        self
    }

    pub fn n_bundle_params(&self) -> usize {
        self.bundle_param_names.len()
    }

    /// Network input dimension: independent variable plus bundle parameters.
    pub fn input_dim(&self) -> usize {
        1 + self.n_bundle_params()
    }

    /// +1 when integration runs from `ic_point` toward larger x, -1 when the
    /// initial condition sits at the far end of the domain.
    pub fn direction(&self) -> f64 {
        let (lo, hi) = self.train_range;
        if (self.ic_point - lo).abs() <= (self.ic_point - hi).abs() {
            1.0
        } else {
            -1.0
        }
    }

    fn check_lambda(&self, lam: &[f64], context: &'static str) -> Result<()> {
        if lam.len() != self.n_bundle_params() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.n_bundle_params(),
                actual: lam.len(),
            });
        }
        Ok(())
    }

    /// Right-hand side of the system at `(x, state)` for bundle parameters `lam`.
    pub fn rhs(&self, x: f64, state: &[f64], lam: &[f64]) -> Result<Vec<f64>> {
        self.check_lambda(lam, "rhs lambda")?;
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "rhs state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        rhs_generic(self, x, state, lam)
    }

    /// Right-hand side together with its Jacobian with respect to the state,
    /// computed exactly with dual numbers (one seeded pass per component).
    pub fn rhs_jacobian(&self, x: f64, state: &[f64], lam: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
        self.check_lambda(lam, "rhs lambda")?;
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "rhs state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        let d = self.state_dim;
        let mut value = vec![0.0; d];
        let mut jac = Array2::zeros((d, d));
        for j in 0..d {
            let duals: Vec<Dual> = state
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    if i == j {
                        Dual::variable(s)
                    } else {
                        Dual::constant(s)
                    }
                })
                .collect();
            let out = rhs_generic(self, x, &duals, lam)?;
            for i in 0..d {
                jac[[i, j]] = out[i].eps;
                if j == 0 {
                    value[i] = out[i].re;
                }
            }
        }
        Ok((value, jac))
    }

    /// Initial state at `ic_point`. Parameters outside the bundle box are
    /// legitimate (out-of-distribution evaluation) and only logged; parameter
    /// inference probes them on every prior-box proposal.
    pub fn initial_state(&self, lam: &[f64]) -> Result<Vec<f64>> {
        self.check_lambda(lam, "initial_state lambda")?;
        for (i, (&l, &(lo, hi))) in lam.iter().zip(&self.bundle_param_box).enumerate() {
            if l < lo || l > hi {
                log::debug!(
                    "{} parameter {} = {l} outside bundle box [{lo}, {hi}]",
                    self.id,
                    self.bundle_param_names[i]
                );
            }
        }
        match self.id {
            ModelId::Lcdm => Ok(vec![lam[0]]),
            ModelId::Cpl => Ok(vec![1.0 - self.omega_m0_fiducial]),
            ModelId::Quintessence => {
                let omega = lam[1];
                let z0 = self.ic_point;
                let m = omega * (1.0 + z0).powi(3);
                let y0 = ((1.0 - omega) / (m + 1.0 - omega)).sqrt();
                Ok(vec![0.0, y0])
            }
            ModelId::Hs => {
                let omega = lam[1];
                let z0 = self.ic_point;
                let m = omega * (1.0 + z0).powi(3);
                let d = 1.0 - omega;
                Ok(vec![
                    0.0,
                    (m + 2.0 * d) / (2.0 * (m + d)),
                    (m + 4.0 * d) / (2.0 * (m + d)),
                    m / (m + d),
                    (m + 4.0 * d) / d,
                ])
            }
        }
    }

    /// Enforcement coefficient `c(x)` and its x-derivative. The transform
    /// `ũ = u_0 + c(x)·raw` keeps `c(ic_point) = 0` exactly; the exponent runs
    /// along the integration direction so `c` stays bounded on the domain for
    /// systems whose initial condition sits at the far end.
    pub fn enforce_coefficient(&self, x: f64) -> (f64, f64) {
        let d = self.direction();
        let e = (-d * (x - self.ic_point)).exp();
        (1.0 - e, d * e)
    }

    /// IC-enforcement transform applied componentwise:
    /// `ũ(x) = u_0(λ) + c(x)·raw_output` with `ũ(ic_point) = u_0(λ)` for any
    /// raw output.
    pub fn enforce_ic(&self, x: f64, raw_output: &[f64], lam: &[f64]) -> Result<Vec<f64>> {
        let u0 = self.initial_state(lam)?;
        if raw_output.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "enforce_ic raw output",
                expected: self.state_dim,
                actual: raw_output.len(),
            });
        }
        let (c, _) = self.enforce_coefficient(x);
        Ok(u0
            .iter()
            .zip(raw_output)
            .map(|(&u0i, &ri)| u0i + c * ri)
            .collect())
    }

    /// Hubble parameter H(z) from a solution state.
    pub fn hubble(&self, z: f64, state: &[f64], hp: &HubbleParams) -> Result<f64> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "hubble state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        let om = hp.omega_m0;
        let radicand = match self.id {
            ModelId::Lcdm => state[0] + 1.0 - om,
            ModelId::Cpl => om * (1.0 + z).powi(3) + state[0],
            ModelId::Quintessence => {
                let (x, y) = (state[0], state[1]);
                let denom = 1.0 - x * x - y * y;
                if denom <= 0.0 {
                    return Err(Error::HubbleRadicand {
                        model: self.id.as_str(),
                        z,
                        detail: format!("1 - x^2 - y^2 = {denom} with x={x}, y={y}"),
                    });
                }
                om * (1.0 + z).powi(3) / denom
            }
            ModelId::Hs => {
                let (v, r) = (state[2], state[4]);
                if v == 0.0 {
                    return Err(Error::HubbleRadicand {
                        model: self.id.as_str(),
                        z,
                        detail: "v = 0".to_string(),
                    });
                }
                r * (1.0 - om) / (2.0 * v)
            }
        };
        if radicand <= 0.0 {
            return Err(Error::HubbleRadicand {
                model: self.id.as_str(),
                z,
                detail: format!("radicand = {radicand}, state = {state:?}"),
            });
        }
        Ok(hp.h0 * radicand.sqrt())
    }

    /// Closed-form solution, available for lcdm and cpl only. Cross-checked
    /// against `rk_solve` by the test suite before use as an oracle.
    pub fn analytic_solution(&self, z: f64, lam: &[f64]) -> Result<Vec<f64>> {
        self.check_lambda(lam, "analytic_solution lambda")?;
        match self.id {
            ModelId::Lcdm => Ok(vec![lam[0] * (1.0 + z).powi(3)]),
            ModelId::Cpl => {
                let (w0, w1) = (lam[0], lam[1]);
                let x0 = 1.0 - self.omega_m0_fiducial;
                let val = x0
                    * (1.0 + z).powf(3.0 * (1.0 + w0 + w1))
                    * (-3.0 * w1 * z / (1.0 + z)).exp();
                Ok(vec![val])
            }
            other => Err(Error::Config(format!(
                "no analytic solution for model {other}"
            ))),
        }
    }
}

/// Where ground truth comes from when scoring a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    /// Closed-form solution; only lcdm and cpl have one.
    Analytic,
    /// RK4 reference integration from the initial condition.
    Rk,
}

impl FromStr for Oracle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(Oracle::Analytic),
            "rk" => Ok(Oracle::Rk),
            other => Err(Error::Config(format!(
                "unknown oracle {other:?}; expected analytic | rk"
            ))),
        }
    }
}

/// Ground-truth states at rows of `[x, λ...]`.
///
/// The RK path integrates once per distinct λ: grid x values are sorted
/// outward from `ic_point` (separately on each side, for points straddling
/// it) and the dense RK4 output is scattered back to the input rows.
pub fn truth_on_points(
    spec: &ModelSpec,
    points: &Array2<f64>,
    oracle: Oracle,
) -> Result<Array2<f64>> {
    if points.ncols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "truth points",
            expected: spec.input_dim(),
            actual: points.ncols(),
        });
    }
    let mut truth = Array2::zeros((points.nrows(), spec.state_dim));
    if oracle == Oracle::Analytic {
        for (i, row) in points.rows().into_iter().enumerate() {
            let u = spec.analytic_solution(row[0], &row.as_slice().unwrap()[1..])?;
            for (k, v) in u.iter().enumerate() {
                truth[[i, k]] = *v;
            }
        }
        return Ok(truth);
    }

    // Group rows by the exact bit pattern of λ.
    let mut groups: std::collections::HashMap<Vec<u64>, Vec<usize>> =
        std::collections::HashMap::new();
    for (i, row) in points.rows().into_iter().enumerate() {
        let key: Vec<u64> = row.iter().skip(1).map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(i);
    }

    for rows in groups.values() {
        let lam: Vec<f64> = (1..points.ncols())
            .map(|j| points[[*rows.first().expect("non-empty group"), j]])
            .collect();
        // One integration per side of the initial condition.
        for side in [1.0, -1.0] {
            let mut xs: Vec<f64> = rows
                .iter()
                .map(|&i| points[[i, 0]])
                .filter(|&x| side * (x - spec.ic_point) > 0.0)
                .collect();
            if xs.is_empty() {
                continue;
            }
            xs.sort_by(|a, b| (side * a).total_cmp(&(side * b)));
            xs.dedup();
            let mut grid = Vec::with_capacity(xs.len() + 1);
            grid.push(spec.ic_point);
            grid.extend_from_slice(&xs);
            let states = rk_solve(spec, &lam, &grid)?;
            let index_of: std::collections::HashMap<u64, usize> = xs
                .iter()
                .enumerate()
                .map(|(j, x)| (x.to_bits(), j + 1))
                .collect();
            for &i in rows {
                let x = points[[i, 0]];
                if let Some(&j) = index_of.get(&x.to_bits()) {
                    for k in 0..spec.state_dim {
                        truth[[i, k]] = states[[j, k]];
                    }
                }
            }
        }
        // Rows sitting exactly on the initial condition get the IC itself.
        for &i in rows {
            if points[[i, 0]] == spec.ic_point {
                let ic = spec.initial_state(&lam)?;
                for k in 0..spec.state_dim {
                    truth[[i, k]] = ic[k];
                }
            }
        }
    }
    Ok(truth)
}

/// Parameters of the Hubble map that are not part of the solution state:
/// `H0` (km/s/Mpc) and the present-day matter density `Ω_m0`. For lcdm the
/// latter duplicates the bundle parameter; for cpl it is an independent input.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HubbleParams {
    pub h0: f64,
    pub omega_m0: f64,
}

impl HubbleParams {
    pub fn new(h0: f64, omega_m0: f64) -> Result<Self> {
        if h0 <= 0.0 {
            return Err(Error::Config(format!("H0 must be positive, got {h0}")));
        }
        if !(0.0 < omega_m0 && omega_m0 < 1.0) {
            return Err(Error::Config(format!(
                "omega_m0 must lie in (0, 1), got {omega_m0}"
            )));
        }
        Ok(HubbleParams { h0, omega_m0 })
    }
}

/// RHS over a generic scalar so the same formulas serve plain evaluation and
/// exact state Jacobians.
fn rhs_generic<S: RhsScalar>(spec: &ModelSpec, x: f64, state: &[S], lam: &[f64]) -> Result<Vec<S>> {
    match spec.id {
        ModelId::Lcdm => {
            if x == -1.0 {
                return Err(Error::Singularity(format!("{} rhs at z = -1", spec.id)));
            }
            Ok(vec![state[0] * (3.0 / (1.0 + x))])
        }
        ModelId::Cpl => {
            if x == -1.0 {
                return Err(Error::Singularity(format!("{} rhs at z = -1", spec.id)));
            }
            let (w0, w1) = (lam[0], lam[1]);
            let coef = 3.0 / (1.0 + x) * (1.0 + w0 + w1 * x / (1.0 + x));
            Ok(vec![state[0] * coef])
        }
        ModelId::Quintessence => {
            let lq = lam[0];
            let (x_s, y_s) = (state[0], state[1]);
            let common = x_s * x_s - y_s * y_s + 1.0;
            let dx = x_s * (-3.0) + y_s * y_s * (SQRT6_HALF * lq) + x_s * common * 1.5;
            let dy = x_s * y_s * (SQRT6_HALF * lq) + y_s * common * 1.5;
            Ok(vec![dx, dy])
        }
        ModelId::Hs => {
            if x == -1.0 {
                return Err(Error::Singularity(format!("{} rhs at z = -1", spec.id)));
            }
            let b = lam[0];
            if b == 0.0 {
                return Err(Error::Singularity(
                    "hs Gamma(r) undefined at b = 0".to_string(),
                ));
            }
            let (xs, ys, vs, os, rs) = (state[0], state[1], state[2], state[3], state[4]);
            if rs.value() == 0.0 {
                return Err(Error::Singularity(format!(
                    "hs Gamma(r) undefined at r = 0 (z = {x})"
                )));
            }
            let rb = rs + b;
            let gamma = rb * (rb * rb - 2.0 * b) / (rs * (4.0 * b));
            let iz = 1.0 / (x + 1.0);
            let dx = (xs + ys * 4.0 + xs * vs + xs * xs - os - vs * 2.0) * iz;
            let dy = (xs * ys + ys * vs * 2.0 - vs * xs * gamma - ys * 4.0) * iz;
            let dv = vs * (vs * 2.0 - xs * gamma - 4.0) * iz;
            let dom = os * (vs * 2.0 + xs - 1.0) * iz;
            let dr = rs * gamma * xs * (-iz);
            Ok(vec![dx, dy, dv, dom, dr])
        }
    }
}

#[cfg(test)]
mod tests;
