//! Optimal switching systems
//!
//! ```text
//! max{ v_i,t + sup_{a in A_i} L^a[v_i], v_i - min_{j != i}(v_j + k) } = 0,   i = 1..M
//! ```
//!
//! discretised by one theta step per mode on its control subset followed by a
//! Gauss-Seidel obstacle projection over the modes.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::harness::{fit_order, ErrorSide, RateLevel, RateReport, SignedError};
use crate::problem::HJBProblem;
use crate::scheme::{SolverOptions, ThetaScheme};
use crate::stencil::StencilBuilder;

#[derive(Debug, Clone)]
pub struct SwitchingProblem {
    base: HJBProblem,
    modes: Vec<Vec<usize>>,
    cost: f64,
}

impl SwitchingProblem {
    /// `modes[i]` lists the control indices available in mode `i`; together
    /// they must cover every control of `base`.
    pub fn new(base: HJBProblem, modes: Vec<Vec<usize>>, cost: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidInput("need at least one mode".into()));
        }
        if !(cost > 0.0 && cost.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "switching cost must be positive, got {cost}"
            )));
        }
        let count = base.controls().len();
        let mut covered = vec![false; count];
        for (i, m) in modes.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::InvalidInput(format!("mode {i} has no controls")));
            }
            for &a in m {
                if a >= count {
                    return Err(Error::ControlOutOfRange { index: a, count });
                }
                covered[a] = true;
            }
        }
        if let Some(a) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidInput(format!(
                "control {a} belongs to no mode"
            )));
        }
        Ok(Self { base, modes, cost })
    }

    pub fn with_cost(&self, cost: f64) -> Result<Self> {
        Self::new(self.base.clone(), self.modes.clone(), cost)
    }

    pub fn base(&self) -> &HJBProblem {
        &self.base
    }

    pub fn modes(&self) -> &[Vec<usize>] {
        &self.modes
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }
}

/// `components[i][n]` is mode `i` at time level `n`.
#[derive(Debug, Clone)]
pub struct SwitchingSolution {
    pub grid: SpaceTimeGrid,
    pub components: Vec<Vec<GridFunction>>,
}

impl SwitchingSolution {
    pub fn final_levels(&self) -> Vec<&GridFunction> {
        self.components
            .iter()
            .map(|c| c.last().expect("initial level"))
            .collect()
    }

    /// Largest `max_i v_i - min_i v_i` over all nodes and levels.
    pub fn band(&self) -> f64 {
        let levels = self.components[0].len();
        let nodes = self.grid.space.len();
        let mut worst = 0.0f64;
        for n in 0..levels {
            for x in 0..nodes {
                let (lo, hi) = self
                    .components
                    .iter()
                    .map(|c| c[n].get(x))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                worst = worst.max(hi - lo);
            }
        }
        worst
    }
}

/// One theta scheme per mode on a shared grid.
#[derive(Debug, Clone)]
pub struct SwitchingScheme {
    problem: SwitchingProblem,
    grid: SpaceTimeGrid,
    modes: Vec<ThetaScheme>,
}

impl SwitchingScheme {
    pub fn new(
        problem: SwitchingProblem,
        grid: SpaceTimeGrid,
        theta: f64,
        builder: Arc<dyn StencilBuilder>,
        options: SolverOptions,
    ) -> Result<Self> {
        let modes = problem
            .modes
            .iter()
            .map(|m| {
                Ok(
                    ThetaScheme::new(problem.base.restrict(m)?, grid, theta, builder.clone())?
                        .with_options(options),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            problem,
            grid,
            modes,
        })
    }

    pub fn problem(&self) -> &SwitchingProblem {
        &self.problem
    }

    pub fn mode_schemes(&self) -> &[ThetaScheme] {
        &self.modes
    }

    /// Mode steps, then `v_i <- min(v_i, min_{j != i} v_j + k)` in mode order
    /// until a full pass changes nothing.
    pub fn step(&self, prev: &[GridFunction], level: usize) -> Result<Vec<GridFunction>> {
        if prev.len() != self.modes.len() {
            return Err(Error::InvalidInput(format!(
                "{} components for {} modes",
                prev.len(),
                self.modes.len()
            )));
        }
        let mut v: Vec<GridFunction> = self
            .modes
            .par_iter()
            .zip(prev.par_iter())
            .map(|(s, u)| s.step(u, level).map(|(w, _)| w))
            .collect::<Result<_>>()?;
        project(&mut v, self.problem.cost);
        Ok(v)
    }

    pub fn solve(&self) -> Result<SwitchingSolution> {
        for s in &self.modes {
            let r = s.cfl_check()?;
            if !r.ok {
                return Err(Error::Cfl {
                    explicit: r.explicit,
                    implicit: r.implicit,
                    positive: r.positive_type,
                });
            }
        }
        let u0 = self.modes[0].initial();
        u0.check_finite("initial data")?;
        let mut components: Vec<Vec<GridFunction>> = vec![vec![u0]; self.modes.len()];
        for level in 1..=self.grid.nt() {
            let prev: Vec<GridFunction> = components.iter().map(|c| c[level - 1].clone()).collect();
            for (c, v) in components.iter_mut().zip(self.step(&prev, level)?) {
                c.push(v);
            }
        }
        Ok(SwitchingSolution {
            grid: self.grid,
            components,
        })
    }
}

fn project(v: &mut [GridFunction], cost: f64) {
    let modes = v.len();
    let nodes = v[0].values().len();
    loop {
        let mut changed = false;
        for i in 0..modes {
            for x in 0..nodes {
                let obstacle = (0..modes)
                    .filter(|&j| j != i)
                    .map(|j| v[j].get(x) + cost)
                    .fold(f64::INFINITY, f64::min);
                if obstacle < v[i].get(x) {
                    v[i].values_mut()[x] = obstacle;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Outcome of solving the switching system for each cost in a list.
#[derive(Debug, Clone)]
pub struct KRateReport {
    /// `err_plus = max_i sup (v_i - u)^+`, fitted against `k`.
    pub rate: RateReport,
    /// `min_i inf (v_i - u)` per cost, in the order of `rate.levels`.
    pub min_difference: Vec<f64>,
    /// `max_i v_i - min_i v_i - k` per cost, worst over nodes and levels.
    pub band_excess: Vec<f64>,
}

impl KRateReport {
    pub fn min_difference(&self) -> f64 {
        self.min_difference
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_band_excess(&self) -> f64 {
        self.band_excess
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solves the switching system for each `k` and compares every mode with the
/// scalar solve on the full control set over the same grid.
pub fn k_rate_experiment(
    problem: &SwitchingProblem,
    costs: &[f64],
    grid: SpaceTimeGrid,
    theta: f64,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<KRateReport> {
    if costs.is_empty() {
        return Err(Error::InvalidInput("empty cost list".into()));
    }
    let reference = ThetaScheme::new(problem.base.clone(), grid, theta, builder.clone())?
        .with_options(options)
        .solve()?;
    let u = reference.final_level();
    let mut costs = costs.to_vec();
    costs.sort_by(|a, b| b.total_cmp(a));
    let runs: Vec<(RateLevel, f64, f64)> = costs
        .par_iter()
        .map(|&k| -> Result<(RateLevel, f64, f64)> {
            let sp = problem.with_cost(k)?;
            let sol = SwitchingScheme::new(sp, grid, theta, builder.clone(), options)?.solve()?;
            let mut err = SignedError::default();
            let mut min_diff = f64::INFINITY;
            for v in sol.final_levels() {
                // SignedError measures u_ref - u_h; here the deviation of interest is v - u
                err = err.max(SignedError::between(v, u)?);
                min_diff = min_diff.min(v.zip_with(u, |a, b| a - b)?.min_value());
            }
            Ok((
                RateLevel::new(k, grid.space.dx(), grid.dt(), err),
                min_diff,
                sol.band() - k,
            ))
        })
        .collect::<Result<_>>()?;
    let levels = runs.iter().map(|r| r.0.clone()).collect();
    Ok(KRateReport {
        rate: RateReport::new("k", levels, ErrorSide::Plus, Some(1.0 / 3.0)),
        min_difference: runs.iter().map(|r| r.1).collect(),
        band_excess: runs.iter().map(|r| r.2).collect(),
    })
}

/// Two-point slope `log(e1 / e2) / log(k1 / k2)`.
pub fn two_point_slope(k: [f64; 2], e: [f64; 2]) -> Option<f64> {
    fit_order(&k, &e).slope()
}
