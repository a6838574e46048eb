use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SolverOptions, ThetaScheme, Trajectory};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::problem::ScalarField;

/// Sweep tolerance used by the monotonicity probe, relative to the data scale,
/// so that solver noise stays well below the probe slack.
const PROBE_TOLERANCE: f64 = 1e-14;
const PROBE_SLACK: f64 = 1e-12;
const COMPARISON_SLACK: f64 = 1e-9;
const APRIORI_FACTOR: f64 = 1.05;

/// First node at which an ordered pair of inputs produced unordered outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub trial: usize,
    pub node: usize,
    pub coords: Vec<f64>,
    /// `step(u)` and `step(v)` at the node, with `u <= v`.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub trials: usize,
    pub violation: Option<Witness>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub passed: bool,
    /// Largest `max(u - v) - bound` over the levels.
    pub worst_excess: f64,
    pub worst_level: usize,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub passed: bool,
    /// Largest `|u(t)|_0 / bound(t)` over the levels.
    pub worst_ratio: f64,
    pub worst_level: usize,
    pub sup_norms: Vec<f64>,
    pub bounds: Vec<f64>,
    /// Reported, not asserted.
    pub lipschitz: Vec<f64>,
    /// `max_n |u(t_n) - u(t_{n-1})| / sqrt(dt)`; reported, not asserted.
    pub time_holder: f64,
}

impl ThetaScheme {
    /// Runs the first step from random ordered pairs `u <= v` and looks for
    /// a node where `step(u) > step(v) + slack`. Trial 0 is a single spike.
    pub fn monotonicity_probe(&self, trials: usize, seed: u64) -> Result<ProbeReport> {
        let space = self.grid.space;
        let nodes = space.len();
        let scale = 1.0 + self.initial().sup_norm();
        let probe = self.clone().with_options(SolverOptions {
            tolerance: self.options.tolerance.min(PROBE_TOLERANCE * scale),
            ..self.options
        });
        let before = probe.operator(0.0)?;
        let after = if probe.theta > 0.0 {
            Some(probe.operator(probe.grid.time(1))?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for trial in 0..trials {
            let (u, v): (Vec<f64>, Vec<f64>) = if trial == 0 {
                let mut v = vec![0.0; nodes];
                v[nodes / 2] = scale;
                (vec![0.0; nodes], v)
            } else {
                let u: Vec<f64> = (0..nodes)
                    .map(|_| scale * rng.gen_range(-1.0..1.0))
                    .collect();
                let v = u
                    .iter()
                    .map(|&ui| {
                        if rng.gen_bool(0.5) {
                            ui + scale * rng.gen_range(0.0..1.0)
                        } else {
                            ui
                        }
                    })
                    .collect();
                (u, v)
            };
            let u = GridFunction::new(space, u)?;
            let v = GridFunction::new(space, v)?;
            let (su, _) = probe.step_with(&u, 1, &before, after.as_deref())?;
            let (sv, _) = probe.step_with(&v, 1, &before, after.as_deref())?;
            let slack = PROBE_SLACK * scale;
            if let Some(node) = (0..nodes).find(|&i| su.get(i) > sv.get(i) + slack) {
                return Ok(ProbeReport {
                    trials: trial + 1,
                    violation: Some(Witness {
                        trial,
                        node,
                        coords: space.coords(node),
                        lower: su.get(node),
                        upper: sv.get(node),
                    }),
                });
            }
        }
        Ok(ProbeReport {
            trials,
            violation: None,
        })
    }

    /// Checks `max(u - v)(t) <= e^{mu t} |(u0 - v0)^+| + 2 t e^{mu t} |(g1 - g2)^+|`
    /// at every level, where `u`, `v` solve the scheme with right-hand sides `g1`, `g2`.
    pub fn comparison_bound_check(
        &self,
        u: &Trajectory,
        v: &Trajectory,
        g1: &ScalarField,
        g2: &ScalarField,
    ) -> Result<ComparisonReport> {
        if u.levels.len() != v.levels.len() || u.levels.len() != self.grid.nt() + 1 {
            return Err(Error::InvalidInput(
                "trajectories must cover the scheme's time levels".into(),
            ));
        }
        let mu = self.comparison_constants()?.mu;
        let space = &self.grid.space;
        let mut forcing = 0.0f64;
        for n in 0..=self.grid.nt() {
            let t = self.grid.time(n);
            for node in 0..space.len() {
                let x = space.coords(node);
                forcing = forcing.max(g1(t, &x) - g2(t, &x));
            }
        }
        let initial = u.levels[0]
            .zip_with(&v.levels[0], |a, b| a - b)?
            .max_value()
            .max(0.0);
        let mut report = ComparisonReport {
            passed: true,
            worst_excess: f64::NEG_INFINITY,
            worst_level: 0,
            bounds: Vec::with_capacity(u.levels.len()),
        };
        for (n, (un, vn)) in u.levels.iter().zip(&v.levels).enumerate() {
            let t = self.grid.time(n);
            let growth = (mu * t).exp();
            let bound = growth * initial + 2.0 * t * growth * forcing;
            let excess = un.zip_with(vn, |a, b| a - b)?.max_value() - bound;
            if excess > report.worst_excess {
                report.worst_excess = excess;
                report.worst_level = n;
            }
            report.passed &= excess <= COMPARISON_SLACK;
            report.bounds.push(bound);
        }
        Ok(report)
    }

    /// Checks `|u(t)|_0 <= e^{lambda t} (|u0|_0 + t sup|f|) * 1.05` at every level.
    pub fn apriori_bounds_check(&self, traj: &Trajectory) -> Result<BoundReport> {
        let lambda = self.comparison_constants()?.lambda;
        let space = &self.grid.space;
        let mut source = 0.0f64;
        for n in 0..=self.grid.nt() {
            let t = self.grid.time(n);
            for k in 0..self.problem.controls().len() {
                let f = &self.problem.coefficients().control(k)?.source;
                for node in 0..space.len() {
                    source = source.max(f(t, &space.coords(node)).abs());
                }
            }
            if self.is_autonomous() {
                break;
            }
        }
        let u0 = traj.levels[0].sup_norm();
        let mut report = BoundReport {
            passed: true,
            worst_ratio: 0.0,
            worst_level: 0,
            sup_norms: Vec::new(),
            bounds: Vec::new(),
            lipschitz: Vec::new(),
            time_holder: 0.0,
        };
        for (n, level) in traj.levels.iter().enumerate() {
            let t = traj.time(n);
            let norm = level.sup_norm();
            let bound = (lambda * t).exp() * (u0 + t * source) * APRIORI_FACTOR;
            let ratio = if bound > 0.0 {
                norm / bound
            } else if norm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.worst_level = n;
            }
            report.passed &= norm <= bound;
            report.sup_norms.push(norm);
            report.bounds.push(bound);
            report.lipschitz.push(level.lipschitz_seminorm());
            if n > 0 {
                let jump = level
                    .zip_with(&traj.levels[n - 1], |a, b| a - b)?
                    .sup_norm();
                report.time_holder = report.time_holder.max(jump / traj.grid.dt().sqrt());
            }
        }
        Ok(report)
    }
}
