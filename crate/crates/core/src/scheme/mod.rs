//! The fully discrete theta-method
//!
//! ```text
//! u(t) = u(t - dt) - (1 - theta) dt H_{t-dt}[u(t - dt)] - theta dt H_t[u(t)]
//! H_t[u](x) = max_a { -L_h^a u(x) - c^a u(x) - f^a(t, x) }
//! ```
//!
//! The explicit part is evaluated pointwise. The implicit part is solved by
//! policy iteration with Gauss-Seidel sweeps for each frozen policy.

mod operator;
mod probes;

use std::io::Write;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid};
use crate::problem::HJBProblem;
use crate::stencil::StencilBuilder;

pub use operator::{LevelMargins, LevelOperator};
pub use probes::{BoundReport, ComparisonReport, ProbeReport, Witness};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm tolerance for the sweeps and for accepting a policy.
    pub tolerance: f64,
    pub max_policy_iterations: usize,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_policy_iterations: 100,
            max_sweeps: 1_000_000,
        }
    }
}

/// Worst step-size margins over every node, control and time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflReport {
    pub explicit: f64,
    pub implicit: f64,
    pub min_weight: f64,
    pub positive_type: bool,
    pub ok: bool,
}

impl CflReport {
    fn from_margins(m: LevelMargins) -> Self {
        let positive_type = m.min_weight >= 0.0;
        Self {
            explicit: m.explicit,
            implicit: m.implicit,
            min_weight: m.min_weight,
            positive_type,
            ok: positive_type && m.explicit <= 1.0 && m.implicit <= 1.0,
        }
    }

    fn merge(self, m: LevelMargins) -> Self {
        Self::from_margins(LevelMargins {
            explicit: self.explicit.max(m.explicit),
            implicit: self.implicit.max(m.implicit),
            min_weight: self.min_weight.min(m.min_weight),
        })
    }

    fn into_error(self) -> Error {
        Error::Cfl {
            explicit: self.explicit,
            implicit: self.implicit,
            positive: self.positive_type,
        }
    }
}

/// `lambda = sup (c^a)^+`, `mu = lambda + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConstants {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub level: usize,
    pub time: f64,
    pub policy_iterations: usize,
    pub sweeps: usize,
    pub residual: f64,
    /// Lowest maximising control per node.
    pub argmax: Vec<usize>,
}

/// All time levels of a solve.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: SpaceTimeGrid,
    pub levels: Vec<GridFunction>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn final_level(&self) -> &GridFunction {
        self.levels
            .last()
            .expect("trajectory holds the initial level")
    }

    pub fn time(&self, level: usize) -> f64 {
        self.grid.time(level)
    }

    /// Columns `t,x_1..x_N,value`, one row per node and level.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let space = &self.grid.space;
        let header: Vec<String> = (1..=space.dim()).map(|d| format!("x_{d}")).collect();
        writeln!(out, "t,{},value", header.join(","))?;
        for (n, level) in self.levels.iter().enumerate() {
            let t = self.time(n);
            for (i, v) in level.values().iter().enumerate() {
                let x: Vec<String> = space.coords(i).iter().map(|c| c.to_string()).collect();
                writeln!(out, "{t},{},{v}", x.join(","))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct ThetaScheme {
    theta: f64,
    grid: SpaceTimeGrid,
    problem: HJBProblem,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
    cached: Arc<OnceLock<Arc<LevelOperator>>>,
}

impl std::fmt::Debug for ThetaScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThetaScheme")
            .field("theta", &self.theta)
            .field("grid", &self.grid)
            .field("stencil", &self.builder.name())
            .field("options", &self.options)
            .finish()
    }
}

impl ThetaScheme {
    pub fn new(
        problem: HJBProblem,
        grid: SpaceTimeGrid,
        theta: f64,
        builder: Arc<dyn StencilBuilder>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if grid.space.dim() != problem.dim() {
            return Err(Error::InvalidInput(format!(
                "grid dimension {} does not match problem dimension {}",
                grid.space.dim(),
                problem.dim()
            )));
        }
        if problem
            .period()
            .iter()
            .any(|p| (p - grid.space.period()).abs() > 1e-12 * p)
        {
            return Err(Error::InvalidInput(format!(
                "grid period {} does not match problem period {:?}",
                grid.space.period(),
                problem.period()
            )));
        }
        Ok(Self {
            theta,
            grid,
            problem,
            builder,
            options: SolverOptions::default(),
            cached: Arc::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn problem(&self) -> &HJBProblem {
        &self.problem
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn stencil_name(&self) -> &str {
        self.builder.name()
    }

    fn is_autonomous(&self) -> bool {
        !self.problem.coefficients().is_time_dependent()
    }

    /// Assembled operator at time `t`; built once when coefficients do not depend on time.
    pub fn operator(&self, t: f64) -> Result<Arc<LevelOperator>> {
        if self.is_autonomous() {
            if let Some(op) = self.cached.get() {
                return Ok(op.clone());
            }
            let op = Arc::new(LevelOperator::assemble(
                &self.problem,
                &self.grid.space,
                self.builder.as_ref(),
                0.0,
            )?);
            return Ok(self.cached.get_or_init(|| op).clone());
        }
        Ok(Arc::new(LevelOperator::assemble(
            &self.problem,
            &self.grid.space,
            self.builder.as_ref(),
            t,
        )?))
    }

    fn level_times(&self) -> Vec<f64> {
        if self.is_autonomous() {
            vec![0.0]
        } else {
            (0..=self.grid.nt()).map(|n| self.grid.time(n)).collect()
        }
    }

    /// Evaluates both step-size conditions and stencil positivity everywhere.
    pub fn cfl_check(&self) -> Result<CflReport> {
        let mut report: Option<CflReport> = None;
        for t in self.level_times() {
            let m = self.operator(t)?.margins(self.grid.dt(), self.theta);
            report = Some(match report {
                None => CflReport::from_margins(m),
                Some(r) => r.merge(m),
            });
        }
        Ok(report.expect("at least one level"))
    }

    pub fn comparison_constants(&self) -> Result<ComparisonConstants> {
        let mut lambda = 0.0f64;
        let space = &self.grid.space;
        for t in self.level_times() {
            for k in 0..self.problem.controls().len() {
                let discount = &self.problem.coefficients().control(k)?.discount;
                for node in 0..space.len() {
                    lambda = lambda.max(discount(t, &space.coords(node)));
                }
            }
        }
        Ok(ComparisonConstants {
            lambda,
            mu: lambda + 1.0,
        })
    }

    pub fn initial(&self) -> GridFunction {
        GridFunction::from_fn(self.grid.space, |x| self.problem.initial(x))
    }

    /// One step from level `level - 1` to `level`.
    pub fn step(&self, u_prev: &GridFunction, level: usize) -> Result<(GridFunction, StepReport)> {
        let t = self.grid.time(level);
        let before = self.operator(t - self.grid.dt())?;
        let after = if self.theta > 0.0 {
            Some(self.operator(t)?)
        } else {
            None
        };
        self.step_with(u_prev, level, &before, after.as_deref())
    }

    /// Pointwise `u_prev - dt H_{t-dt}[u_prev]`; requires `theta = 0`.
    pub fn explicit_step(
        &self,
        u_prev: &GridFunction,
        level: usize,
    ) -> Result<(GridFunction, StepReport)> {
        if self.theta != 0.0 {
            return Err(Error::InvalidInput(format!(
                "explicit step needs theta = 0, scheme has {}",
                self.theta
            )));
        }
        self.step(u_prev, level)
    }

    /// Policy-iteration step; requires `theta > 0`.
    pub fn implicit_step(
        &self,
        u_prev: &GridFunction,
        level: usize,
    ) -> Result<(GridFunction, StepReport)> {
        if self.theta == 0.0 {
            return Err(Error::InvalidInput("implicit step needs theta > 0".into()));
        }
        self.step(u_prev, level)
    }

    fn step_with(
        &self,
        u_prev: &GridFunction,
        level: usize,
        before: &LevelOperator,
        after: Option<&LevelOperator>,
    ) -> Result<(GridFunction, StepReport)> {
        let dt = self.grid.dt();
        let t = self.grid.time(level);
        let prev = u_prev.values();
        let nodes = prev.len();
        let weight = (1.0 - self.theta) * dt;
        let mut argmax = vec![0; nodes];
        let mut rhs = prev.to_vec();
        if weight > 0.0 {
            for node in 0..nodes {
                let (h, k) = before.hamiltonian(node, prev);
                rhs[node] -= weight * h;
                argmax[node] = k;
            }
        }
        let mut report = StepReport {
            level,
            time: t,
            policy_iterations: 0,
            sweeps: 0,
            residual: 0.0,
            argmax,
        };
        let values = match after {
            Some(op) => self.implicit_solve(&rhs, op, &mut report)?,
            None => rhs,
        };
        let out = GridFunction::new(self.grid.space, values)?;
        out.check_finite(&format!("solution at t={t}"))?;
        Ok((out, report))
    }

    fn implicit_solve(
        &self,
        rhs: &[f64],
        op: &LevelOperator,
        report: &mut StepReport,
    ) -> Result<Vec<f64>> {
        let opts = &self.options;
        let td = self.theta * self.grid.dt();
        let nodes = rhs.len();
        let mut u = rhs.to_vec();
        let mut policy: Vec<usize> = (0..nodes).map(|x| op.hamiltonian(x, &u).1).collect();
        let mut diag = vec![0.0; nodes];
        let mut residual = f64::INFINITY;
        for iteration in 1..=opts.max_policy_iterations {
            for x in 0..nodes {
                let k = policy[x];
                let d = 1.0 + td * (op.weight_sum(k, x) - op.discount(k, x));
                if !(d > 0.0) {
                    return Err(Error::SingularDiagonal {
                        node: x,
                        diagonal: d,
                    });
                }
                diag[x] = d;
            }
            let mut last = f64::INFINITY;
            let mut sweeps = 0;
            while last > opts.tolerance {
                if sweeps == opts.max_sweeps {
                    return Err(Error::LinearSolver {
                        sweeps,
                        residual: last,
                    });
                }
                last = 0.0;
                for x in 0..nodes {
                    let k = policy[x];
                    let new =
                        (rhs[x] + td * (op.source(k, x) + op.neighbour_sum(k, x, &u))) / diag[x];
                    last = last.max((new - u[x]).abs());
                    u[x] = new;
                }
                if !last.is_finite() {
                    return Err(Error::NonFinite {
                        what: "policy iterate".into(),
                        location: format!("t={} level {}", op.time(), report.level),
                    });
                }
                sweeps += 1;
            }
            report.sweeps += sweeps;

            let mut changed = false;
            let mut gap = 0.0f64;
            for x in 0..nodes {
                let current = op.hamiltonian_term(policy[x], x, &u);
                let (best, k) = op.hamiltonian(x, &u);
                let scaled = td * (best - current) / diag[x];
                gap = gap.max(scaled);
                if scaled > opts.tolerance {
                    policy[x] = k;
                    changed = true;
                }
            }
            residual = last.max(gap);
            if !changed {
                report.policy_iterations = iteration;
                report.residual = residual;
                report.argmax = (0..nodes).map(|x| op.hamiltonian(x, &u).1).collect();
                return Ok(u);
            }
        }
        Err(Error::PolicyIteration {
            iterations: opts.max_policy_iterations,
            residual,
        })
    }

    /// Marches all levels; fails on the first level violating the step-size conditions.
    pub fn solve(&self) -> Result<Trajectory> {
        self.march(true)
    }

    /// As [`Self::solve`] without the step-size check.
    pub fn solve_unchecked(&self) -> Result<Trajectory> {
        self.march(false)
    }

    fn march(&self, checked: bool) -> Result<Trajectory> {
        let u0 = self.initial();
        u0.check_finite("initial data")?;
        let nt = self.grid.nt();
        let mut levels = Vec::with_capacity(nt + 1);
        let mut reports = Vec::with_capacity(nt);
        let mut before = self.operator(0.0)?;
        if checked {
            let r = CflReport::from_margins(before.margins(self.grid.dt(), self.theta));
            if !r.ok {
                return Err(r.into_error());
            }
        }
        levels.push(u0);
        for level in 1..=nt {
            let after = self.operator(self.grid.time(level))?;
            if checked && !Arc::ptr_eq(&before, &after) {
                let r = CflReport::from_margins(after.margins(self.grid.dt(), self.theta));
                if !r.ok {
                    return Err(r.into_error());
                }
            }
            let implicit = (self.theta > 0.0).then_some(after.as_ref());
            let (u, report) = self.step_with(&levels[level - 1], level, &before, implicit)?;
            levels.push(u);
            reports.push(report);
            before = after;
        }
        Ok(Trajectory {
            grid: self.grid,
            levels,
            reports,
        })
    }
}

#[cfg(test)]
mod tests;
