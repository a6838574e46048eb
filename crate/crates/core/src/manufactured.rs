//! Manufactured solutions: pick a smooth `u*` and nonnegative slacks `g^a`
//! with `min_a g^a = 0`, then define
//!
//! ```text
//! f^a = -tr[a^a D^2u*] - b^a . Du* - c^a u* + u*_t + g^a
//! ```
//!
//! so that `L^a[u*] = -u*_t - g^a` and `u*_t + sup_a L^a[u*] = 0` exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{CoefficientField, ControlCoefficients, ControlSet, HJBProblem, ScalarField};
use crate::smooth::SmoothFunction;

/// Slack values below this are treated as sign violations.
const SLACK_TOLERANCE: f64 = 1e-12;

/// Points per dimension (and time levels) used to validate the slacks.
const SLACK_SAMPLES: usize = 16;

#[derive(Clone)]
pub struct ManufacturedProblem {
    pub base: HJBProblem,
    pub exact: Arc<dyn SmoothFunction>,
    pub slack: Vec<ScalarField>,
}

impl std::fmt::Debug for ManufacturedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedProblem")
            .field("base", &self.base)
            .finish()
    }
}

impl ManufacturedProblem {
    /// `u*_t + F(t, x, u*, Du*, D^2u*)` using the analytic derivatives of `u*`.
    pub fn residual(&self, t: f64, x: &[f64]) -> Result<f64> {
        let e = &self.exact;
        let f = self
            .base
            .evaluate_f(t, x, e.value(t, x), &e.gradient(t, x), &e.hessian(t, x))?;
        Ok(e.time_derivative(t, x) + f)
    }

    pub fn exact_at(&self, t: f64, x: &[f64]) -> f64 {
        self.exact.value(t, x)
    }
}

/// Builds the manufactured problem. The `source` slot of each entry of
/// `coeffs` is ignored and replaced by the constructed `f^a`.
pub fn manufacture(
    controls: ControlSet,
    coeffs: Vec<ControlCoefficients>,
    slack: Vec<ScalarField>,
    exact: Arc<dyn SmoothFunction>,
    horizon: f64,
    period: Vec<f64>,
) -> Result<ManufacturedProblem> {
    let dim = exact.dim();
    if coeffs.len() != slack.len() {
        return Err(Error::InvalidInput(format!(
            "{} controls but {} slack functions",
            coeffs.len(),
            slack.len()
        )));
    }
    if period.len() != dim {
        return Err(Error::InvalidInput(format!(
            "period has {} entries, u* has dimension {dim}",
            period.len()
        )));
    }
    check_slack(&slack, horizon, &period)?;

    let built: Vec<ControlCoefficients> = coeffs
        .into_iter()
        .zip(&slack)
        .map(|(c, g)| {
            let (sigma, drift, discount) = (c.sigma.clone(), c.drift.clone(), c.discount.clone());
            let (u, g) = (exact.clone(), g.clone());
            let source: ScalarField = Arc::new(move |t, x| {
                let s = sigma(t, x);
                let a = 0.5 * &s * s.transpose();
                -(a.component_mul(&u.hessian(t, x))).sum()
                    - drift(t, x).dot(&u.gradient(t, x))
                    - discount(t, x) * u.value(t, x)
                    + u.time_derivative(t, x)
                    + g(t, x)
            });
            ControlCoefficients { source, ..c }
        })
        .collect();

    let u = exact.clone();
    let base = HJBProblem::new(
        dim,
        controls,
        CoefficientField::new(built, true),
        Arc::new(move |x| u.value(0.0, x)),
        horizon,
        period,
    )?;
    Ok(ManufacturedProblem { base, exact, slack })
}

fn check_slack(slack: &[ScalarField], horizon: f64, period: &[f64]) -> Result<()> {
    let dim = period.len();
    let n = SLACK_SAMPLES;
    for k in 0..=n {
        let t = horizon * k as f64 / n as f64;
        for flat in 0..n.pow(dim as u32) {
            let mut rest = flat;
            let x: Vec<f64> = period
                .iter()
                .map(|p| {
                    let i = rest % n;
                    rest /= n;
                    p * i as f64 / n as f64
                })
                .collect();
            let mut min = f64::INFINITY;
            for (a, g) in slack.iter().enumerate() {
                let v = g(t, &x);
                if !(v >= -SLACK_TOLERANCE) {
                    return Err(Error::InvalidInput(format!(
                        "slack g[{a}] = {v} < 0 at t={t} x={x:?}"
                    )));
                }
                min = min.min(v);
            }
            if min.abs() > SLACK_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "min over controls of the slack is {min} at t={t} x={x:?}; must vanish"
                )));
            }
        }
    }
    Ok(())
}
