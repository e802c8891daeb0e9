//! Certified error bounds for the first-order linear models.
//!
//! For an ODE `u' + p(t)u = f(t)` whose approximation satisfies the initial
//! condition, `|û(t) - u(t)| ≤ e^{-P(t)} ∫_{t0}^t |r(τ)| e^{P(τ)} dτ` with
//! `P = ∫ p`. The partitioned table bounds the integral with per-partition
//! residual maxima, which tightens the single global-maximum bound while
//! staying sound.

mod expn;
pub mod quad;

pub use expn::{expn, expn_real};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelId;

type ExpPFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type IntExpPFn = Box<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// The two integrating-factor ingredients a bound computation needs:
/// `e^{P(x)}` and `∫_{x0}^x e^{P(s)} ds`.
pub struct BoundIngredients {
    pub model_id: ModelId,
    pub lambda: Vec<f64>,
    exp_p: ExpPFn,
    int_exp_p: IntExpPFn,
}

impl BoundIngredients {
    pub fn new(model_id: ModelId, lambda: Vec<f64>, exp_p: ExpPFn, int_exp_p: IntExpPFn) -> Self {
        Self {
            model_id,
            lambda,
            exp_p,
            int_exp_p,
        }
    }

    pub fn exp_p(&self, x: f64) -> f64 {
        (self.exp_p)(x)
    }

    pub fn int_exp_p(&self, x: f64) -> Result<f64> {
        (self.int_exp_p)(x)
    }
}

/// Matter-density model ingredients: `e^{P(s)} = e^{-3 ln(1+s)}` and
/// `∫_0^z e^{P(s)} ds = 1/2 - 1/(2(1+z)^2)`, exact closed forms.
pub fn lcdm_ingredients(lambda: &[f64]) -> BoundIngredients {
    BoundIngredients::new(
        ModelId::Lcdm,
        lambda.to_vec(),
        Box::new(|z: f64| (-3.0 * (1.0 + z).ln()).exp()),
        Box::new(|z: f64| Ok(0.5 - 0.5 / ((1.0 + z) * (1.0 + z)))),
    )
}

/// Dark-energy equation-of-state model ingredients:
/// `e^{P(z)} = (z+1)^{-3(w0+w1+1)} e^{3 w1 z/(z+1)}`; the integral uses the
/// closed form `e^{3w1}(s+1)^{1-3(w0+w1+1)} E_{2-3(w0+w1+1)}(3w1/(s+1))`
/// evaluated between 0 and z when `w1 > 0`, and adaptive quadrature of
/// `e^{P}` otherwise (non-positive `w1` puts the exponential-integral
/// argument outside its domain).
pub fn cpl_ingredients(lambda: &[f64]) -> Result<BoundIngredients> {
    if lambda.len() < 2 {
        return Err(Error::DimensionMismatch {
            context: "cpl_ingredients lambda",
            expected: 2,
            actual: lambda.len(),
        });
    }
    let (w0, w1) = (lambda[0], lambda[1]);
    let exp_p = move |z: f64| (z + 1.0).powf(-3.0 * (w0 + w1 + 1.0)) * (3.0 * w1 * z / (z + 1.0)).exp();

    let int_exp_p: IntExpPFn = if w1 > 0.0 {
        let order = 2.0 - 3.0 * (w0 + w1 + 1.0);
        let antiderivative = move |s: f64| -> Result<f64> {
            let e = expn_real(order, 3.0 * w1 / (s + 1.0))?;
            Ok((3.0 * w1).exp() * (s + 1.0).powf(1.0 - 3.0 * (w0 + w1 + 1.0)) * e)
        };
        Box::new(move |z: f64| Ok(antiderivative(z)? - antiderivative(0.0)?))
    } else {
        Box::new(move |z: f64| quad::adaptive_simpson(&exp_p, 0.0, z, 1e-12))
    };

    Ok(BoundIngredients::new(
        ModelId::Cpl,
        lambda.to_vec(),
        Box::new(exp_p),
        int_exp_p,
    ))
}

/// Bound for a constant-coefficient first-order linear ODE with residual
/// ceiling `ε`: `ε e^{-λt} ∫_{t0}^t e^{λτ} dτ`, with the `λ = 0` limit
/// `ε (t - t0)`.
pub fn constant_coeff_bound(epsilon: f64, lambda_coef: f64, t0: f64, t: f64) -> f64 {
    if lambda_coef == 0.0 {
        return epsilon * (t - t0);
    }
    epsilon * (-lambda_coef * t).exp() * ((lambda_coef * t).exp() - (lambda_coef * t0).exp())
        / lambda_coef
}

/// Partitioned error-bound table: `bounds[i]` certifies `|û - u|` at
/// `times[i]`. `t_min` is the domain start, where the enforced initial
/// condition makes the error exactly zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundTable {
    pub t_min: f64,
    pub times: Vec<f64>,
    pub bounds: Vec<f64>,
    pub lambda: Vec<f64>,
    pub partitions: usize,
    pub points_per_partition: usize,
}

impl BoundTable {
    /// Bound at an arbitrary time: piecewise-constant using the right
    /// endpoint of the enclosing partition. Times at or before the domain
    /// start get 0; times past the last table entry get the final bound.
    pub fn bound_at(&self, t: f64) -> f64 {
        if t <= self.t_min {
            return 0.0;
        }
        let idx = self.times.partition_point(|&ti| ti < t);
        self.bounds[idx.min(self.bounds.len() - 1)]
    }
}

/// Tight partitioned bounds over `domain = [t_min, t_max]`.
///
/// Partition ends are `linspace(t_min, t_max, n+1)`; `ε_i` is the max of
/// `|residual|` over `k` equispaced points in partition `i`; the bound at
/// `t_i` accumulates `Σ_{j≤i} ε_j (IntEP(t_j) - IntEP(t_{j-1}))` divided by
/// `EP(t_i)`, i.e. the partitioned integral bound evaluated at the table
/// time. A running maximum keeps the table monotone where the raw bound
/// would dip.
pub fn tight_bounds<F: Fn(f64) -> Result<f64>>(
    domain: (f64, f64),
    residual_fn: F,
    ingredients: &BoundIngredients,
    n_partitions: usize,
    points_per_partition: usize,
) -> Result<BoundTable> {
    let (t_min, t_max) = domain;
    if n_partitions < 1 || points_per_partition < 2 {
        return Err(Error::Config(format!(
            "tight_bounds needs n >= 1 partitions and k >= 2 points, got n = {n_partitions}, k = {points_per_partition}"
        )));
    }
    if !t_min.is_finite() || !t_max.is_finite() || t_max <= t_min {
        return Err(Error::Config(format!(
            "tight_bounds domain must be finite with t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }

    let n = n_partitions;
    let k = points_per_partition;
    let times: Vec<f64> = (0..=n)
        .map(|i| t_min + (t_max - t_min) * i as f64 / n as f64)
        .collect();

    let mut bounds = Vec::with_capacity(n);
    let mut weighted_residual_integral = 0.0;
    let mut int_prev = ingredients.int_exp_p(times[0])?;
    let mut running_max = 0.0_f64;
    for i in 1..=n {
        let (a, b) = (times[i - 1], times[i]);
        let mut eps = 0.0_f64;
        for j in 0..k {
            let t = a + (b - a) * j as f64 / (k - 1) as f64;
            let r = residual_fn(t)?;
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    context: "residual in tight_bounds",
                    location: format!("t = {t}"),
                });
            }
            eps = eps.max(r.abs());
        }
        let int_here = ingredients.int_exp_p(times[i])?;
        // Quadrature jitter can make the increment infinitesimally negative.
        weighted_residual_integral += eps * (int_here - int_prev).max(0.0);
        int_prev = int_here;
        let ep = ingredients.exp_p(times[i]);
        if !ep.is_finite() || ep <= 0.0 {
            return Err(Error::Domain(format!(
                "exp_P must be positive and finite, got {ep} at t = {}",
                times[i]
            )));
        }
        running_max = running_max.max(weighted_residual_integral / ep);
        bounds.push(running_max);
    }

    debug_assert!(bounds.windows(2).all(|w| w[0] <= w[1]));
    Ok(BoundTable {
        t_min,
        times: times[1..].to_vec(),
        bounds,
        lambda: ingredients.lambda.clone(),
        partitions: n,
        points_per_partition: k,
    })
}

/// Bound tables at several bundle-parameter points, looked up by nearest λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundTableSet {
    pub tables: Vec<BoundTable>,
}

impl BoundTableSet {
    pub fn new(tables: Vec<BoundTable>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Config("bound table set cannot be empty".into()));
        }
        let dim = tables[0].lambda.len();
        if tables.iter().any(|t| t.lambda.len() != dim) {
            return Err(Error::Config(
                "bound tables disagree on parameter dimension".into(),
            ));
        }
        Ok(Self { tables })
    }

    /// Bound at `(x, λ)` from the table whose λ is nearest in Euclidean
    /// distance.
    pub fn bound_at(&self, x: f64, lam: &[f64]) -> Result<f64> {
        if lam.len() != self.tables[0].lambda.len() {
            return Err(Error::DimensionMismatch {
                context: "bound table lookup lambda",
                expected: self.tables[0].lambda.len(),
                actual: lam.len(),
            });
        }
        let nearest = self
            .tables
            .iter()
            .min_by(|a, b| {
                let da: f64 = a.lambda.iter().zip(lam).map(|(p, q)| (p - q) * (p - q)).sum();
                let db: f64 = b.lambda.iter().zip(lam).map(|(p, q)| (p - q) * (p - q)).sum();
                da.total_cmp(&db)
            })
            .expect("non-empty by construction");
        Ok(nearest.bound_at(x))
    }
}
