//! Refinement studies, signed error norms, log-log order fits and verdicts.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid, SpatialGrid};
use crate::problem::HJBProblem;
use crate::scheme::{SolverOptions, ThetaScheme};
use crate::stencil::StencilBuilder;

/// Allowed shortfall of a fitted slope below the expected exponent.
pub const SLOPE_TOLERANCE: f64 = 0.05;

/// `sup (e)^+`, `sup (e)^-` and `sup |e|` of `e = u_ref - u_h`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignedError {
    pub plus: f64,
    pub minus: f64,
    pub total: f64,
}

impl SignedError {
    pub fn between(reference: &GridFunction, approx: &GridFunction) -> Result<Self> {
        let e = reference.zip_with(approx, |r, a| r - a)?;
        let plus = e.max_value().max(0.0);
        let minus = (-e.min_value()).max(0.0);
        Ok(Self {
            plus,
            minus,
            total: plus.max(minus),
        })
    }

    pub fn max(self, other: Self) -> Self {
        Self {
            plus: self.plus.max(other.plus),
            minus: self.minus.max(other.minus),
            total: self.total.max(other.total),
        }
    }

    pub fn side(&self, side: ErrorSide) -> f64 {
        match side {
            ErrorSide::Plus => self.plus,
            ErrorSide::Minus => self.minus,
            ErrorSide::Total => self.total,
        }
    }
}

/// Which error column a fit is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSide {
    Plus,
    Minus,
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelFailure {
    pub message: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateLevel {
    /// Value of the refinement parameter (`h`, `dt` or `k`).
    pub param: f64,
    pub dx: f64,
    pub dt: f64,
    pub error: SignedError,
    pub failure: Option<LevelFailure>,
}

impl RateLevel {
    pub fn new(param: f64, dx: f64, dt: f64, error: SignedError) -> Self {
        Self {
            param,
            dx,
            dt,
            error,
            failure: None,
        }
    }

    /// `sqrt(dx^2 + dt)`.
    pub fn h(&self) -> f64 {
        (self.dx * self.dx + self.dt).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderFit {
    Fitted {
        slope: f64,
        r_squared: f64,
        excluded: usize,
    },
    Degenerate(String),
}

impl OrderFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            OrderFit::Fitted { slope, .. } => Some(*slope),
            OrderFit::Degenerate(_) => None,
        }
    }
}

/// Least-squares slope of `log(error)` against `log(param)`. Zero errors are
/// dropped and counted in `excluded`; fewer than two usable points is degenerate.
pub fn fit_order(params: &[f64], errors: &[f64]) -> OrderFit {
    if params.len() != errors.len() {
        return OrderFit::Degenerate(format!(
            "{} parameters but {} errors",
            params.len(),
            errors.len()
        ));
    }
    let points: Vec<(f64, f64)> = params
        .iter()
        .zip(errors)
        .filter(|(p, e)| **p > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(p, e)| (p.ln(), e.ln()))
        .collect();
    let excluded = params.len() - points.len();
    if points.len() < 2 {
        let reason = if errors.iter().all(|&e| e == 0.0) {
            "zero error"
        } else {
            "fewer than two positive errors"
        };
        return OrderFit::Degenerate(reason.into());
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return OrderFit::Degenerate("all parameters equal".into());
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    OrderFit::Fitted {
        slope,
        r_squared,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(String),
    Degenerate(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Fail(r) => write!(f, "fail: {r}"),
            Verdict::Degenerate(r) => write!(f, "degenerate: {r}"),
        }
    }
}

/// Errors per refinement level, sorted by decreasing parameter, with an order fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Name of the refinement parameter: `h`, `dt` or `k`.
    pub parameter: String,
    pub levels: Vec<RateLevel>,
    pub fitted: ErrorSide,
    pub fit: OrderFit,
    /// Expected decay exponent, if one applies.
    pub exponent: Option<f64>,
}

impl RateReport {
    pub fn new(
        parameter: &str,
        mut levels: Vec<RateLevel>,
        fitted: ErrorSide,
        exponent: Option<f64>,
    ) -> Self {
        levels.sort_by(|a, b| b.param.total_cmp(&a.param));
        let ok: Vec<&RateLevel> = levels.iter().filter(|l| l.failure.is_none()).collect();
        let params: Vec<f64> = ok.iter().map(|l| l.param).collect();
        let errors: Vec<f64> = ok.iter().map(|l| l.error.side(fitted)).collect();
        let fit = fit_order(&params, &errors);
        Self {
            parameter: parameter.to_string(),
            levels,
            fitted,
            fit,
            exponent,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.levels
            .iter()
            .filter(|l| l.failure.is_none())
            .map(|l| l.error.side(self.fitted))
            .collect()
    }

    pub fn first_failure(&self) -> Option<&LevelFailure> {
        self.levels.iter().find_map(|l| l.failure.as_ref())
    }

    /// Verdict against the attached exponent, or `Pass` when there is none.
    pub fn verdict(&self) -> Verdict {
        match self.exponent {
            Some(e) => compare_bounds(self, e),
            None => match &self.fit {
                OrderFit::Fitted { .. } => Verdict::Pass,
                OrderFit::Degenerate(r) => Verdict::Degenerate(r.clone()),
            },
        }
    }

    /// Columns `level,dx,dt,h,[k,]err_plus,err_minus,err_total,slope,verdict`,
    /// with slope and verdict on the last row only.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let extra = self.parameter == "k";
        writeln!(
            out,
            "level,dx,dt,h,{}err_plus,err_minus,err_total,slope,verdict",
            if extra { "k," } else { "" }
        )?;
        let last = self.levels.len().saturating_sub(1);
        for (i, l) in self.levels.iter().enumerate() {
            write!(out, "{i},{},{},{},", l.dx, l.dt, l.h())?;
            if extra {
                write!(out, "{},", l.param)?;
            }
            match &l.failure {
                None => write!(out, "{},{},{}", l.error.plus, l.error.minus, l.error.total)?,
                Some(_) => write!(out, "NaN,NaN,NaN")?,
            }
            if i == last {
                let slope = self.fit.slope().map_or_else(String::new, |s| s.to_string());
                writeln!(out, ",{slope},{}", csv_field(&self.verdict().to_string()))?;
            } else {
                writeln!(out, ",,")?;
            }
        }
        Ok(())
    }

    /// Gnuplot script plotting the three error columns of `csv_name` on log axes.
    pub fn plot_script(&self, csv_name: &str) -> String {
        let (xcol, label) = match self.parameter.as_str() {
            "k" => (5, "k"),
            "dt" => (3, "dt"),
            _ => (4, "|h| = sqrt(dx^2 + dt)"),
        };
        let base = if self.parameter == "k" { 6 } else { 5 };
        format!(
            "set datafile separator ','\n\
             set key autotitle columnhead\n\
             set logscale xy\n\
             set xlabel '{label}'\n\
             set ylabel 'sup-norm error'\n\
             set key left top\n\
             plot '{csv_name}' using {xcol}:{} with linespoints title 'err_plus', \\\n\
             \x20    '' using {xcol}:{} with linespoints title 'err_minus', \\\n\
             \x20    '' using {xcol}:{} with linespoints title 'err_total'\n",
            base,
            base + 1,
            base + 2
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pass iff the slope is at least `exponent_lower - 0.05` and the fitted
/// errors do not increase from one level to the next.
pub fn compare_bounds(report: &RateReport, exponent_lower: f64) -> Verdict {
    let slope = match &report.fit {
        OrderFit::Fitted { slope, .. } => *slope,
        OrderFit::Degenerate(r) => return Verdict::Degenerate(r.clone()),
    };
    let errors = report.errors();
    if let Some(i) = errors.windows(2).position(|w| w[1] > w[0]) {
        return Verdict::Fail(format!("error increases from level {i} to {}", i + 1));
    }
    if slope < exponent_lower - SLOPE_TOLERANCE {
        return Verdict::Fail(format!(
            "slope {slope} below {exponent_lower} - {SLOPE_TOLERANCE}"
        ));
    }
    Verdict::Pass
}

pub type ExactSolution = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Where errors are measured against.
#[derive(Clone)]
pub enum ReferenceSolution {
    Exact(ExactSolution),
    /// Final-time values on a grid that every coarse grid coarsens into.
    FineGrid(GridFunction),
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceSolution::Exact(_) => f.write_str("Exact(..)"),
            ReferenceSolution::FineGrid(g) => write!(f, "FineGrid(nx = {})", g.grid().nx()),
        }
    }
}

impl ReferenceSolution {
    /// Reference values on `grid` at time `t`; fine-grid references only know the final time.
    pub fn on(&self, grid: &SpatialGrid, t: f64) -> Result<GridFunction> {
        match self {
            ReferenceSolution::Exact(u) => Ok(GridFunction::from_fn(*grid, |x| u(t, x))),
            ReferenceSolution::FineGrid(fine) => fine.restrict_to(grid),
        }
    }
}

/// Everything needed to build a scheme for one refinement level.
#[derive(Clone)]
pub struct SchemeTemplate {
    pub theta: f64,
    pub builder: Arc<dyn StencilBuilder>,
    pub options: SolverOptions,
    /// Skip the step-size check.
    pub force: bool,
    /// Measure the maximum error over all time levels instead of at `T` (exact references only).
    pub max_over_time: bool,
}

impl SchemeTemplate {
    pub fn new(theta: f64, builder: Arc<dyn StencilBuilder>) -> Self {
        Self {
            theta,
            builder,
            options: SolverOptions::default(),
            force: false,
            max_over_time: false,
        }
    }

    pub fn build(&self, problem: &HJBProblem, grid: SpaceTimeGrid) -> Result<ThetaScheme> {
        Ok(
            ThetaScheme::new(problem.clone(), grid, self.theta, self.builder.clone())?
                .with_options(self.options),
        )
    }
}

/// Spatial points per axis and number of time steps of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub nx: usize,
    pub nt: usize,
}

pub fn space_time_grid(problem: &HJBProblem, res: Resolution) -> Result<SpaceTimeGrid> {
    let space = SpatialGrid::for_periods(problem.period(), res.nx)?;
    SpaceTimeGrid::new(space, problem.horizon(), res.nt)
}

/// Largest step for which both step-size margins stay at most one, sampled
/// at nine times for time-dependent coefficients. Infinite when no margin binds.
pub fn stable_step(
    problem: &HJBProblem,
    space: SpatialGrid,
    theta: f64,
    builder: Arc<dyn StencilBuilder>,
) -> Result<f64> {
    let grid = SpaceTimeGrid::new(space, problem.horizon(), 1)?;
    let scheme = ThetaScheme::new(problem.clone(), grid, theta, builder)?;
    let samples = if problem.coefficients().is_time_dependent() {
        8
    } else {
        0
    };
    let mut step = f64::INFINITY;
    for i in 0..=samples {
        let t = if samples == 0 {
            0.0
        } else {
            problem.horizon() * i as f64 / samples as f64
        };
        let m = scheme.operator(t)?.margins(1.0, theta);
        for rate in [m.explicit, m.implicit] {
            if rate > 0.0 {
                step = step.min(1.0 / rate);
            }
        }
    }
    Ok(step)
}

/// `dt = factor * min(dx, stable_step)`, rounded down so it divides the horizon.
pub fn resolution_for(
    problem: &HJBProblem,
    nx: usize,
    theta: f64,
    builder: Arc<dyn StencilBuilder>,
    factor: f64,
) -> Result<Resolution> {
    if !(factor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step factor must be positive, got {factor}"
        )));
    }
    let space = SpatialGrid::for_periods(problem.period(), nx)?;
    let dt = factor * space.dx().min(stable_step(problem, space, theta, builder)?);
    Ok(Resolution {
        nx,
        nt: steps_for(problem.horizon(), dt),
    })
}

/// Fewest steps of length at most `dt` covering `horizon`.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Solves every level (concurrently), measures signed errors against the
/// reference and fits the total error against `|h|`.
pub fn run_refinement(
    problem: &HJBProblem,
    template: &SchemeTemplate,
    levels: &[Resolution],
    reference: &ReferenceSolution,
    exponent: Option<f64>,
) -> Result<RateReport> {
    if template.max_over_time && matches!(reference, ReferenceSolution::FineGrid(_)) {
        return Err(Error::InvalidInput(
            "max-over-time errors need an exact reference".into(),
        ));
    }
    let rows: Vec<RateLevel> = levels
        .par_iter()
        .map(|&res| -> Result<RateLevel> {
            let grid = space_time_grid(problem, res)?;
            let (dx, dt) = (grid.space.dx(), grid.dt());
            let h = (dx * dx + dt).sqrt();
            let scheme = template.build(problem, grid)?;
            let solved = if template.force {
                scheme.solve_unchecked()
            } else {
                scheme.solve()
            };
            let traj = match solved {
                Ok(t) => t,
                Err(e) if e.is_numerical() => {
                    return Ok(RateLevel {
                        param: h,
                        dx,
                        dt,
                        error: SignedError::default(),
                        failure: Some(LevelFailure {
                            message: e.to_string(),
                            numerical: true,
                        }),
                    })
                }
                Err(e) => return Err(e),
            };
            let error = if template.max_over_time {
                let mut worst = SignedError::default();
                for (n, u) in traj.levels.iter().enumerate() {
                    worst = worst.max(SignedError::between(
                        &reference.on(&grid.space, traj.time(n))?,
                        u,
                    )?);
                }
                worst
            } else {
                SignedError::between(
                    &reference.on(&grid.space, grid.horizon())?,
                    traj.final_level(),
                )?
            };
            Ok(RateLevel::new(h, dx, dt, error))
        })
        .collect::<Result<_>>()?;
    Ok(RateReport::new("h", rows, ErrorSide::Total, exponent))
}
