//! One-step semigroup approximations
//!
//! * operator splitting `S_h(dt) = S_1(dt) S_2(dt)` for
//!   `u_t + F_1(D^2u) + F_2(D^2u) = 0`, `F_j(X) = sup_a {-tr[a_j^a X] - f_j^a}`
//! * piecewise-constant controls `u^{n+1} = min_i S_i(dt) u^n` for
//!   `u_t + max_i {-L^i u - f^i} = 0`
//!
//! Every exact semigroup is realised by `m` implicit (theta = 1) steps of the
//! finite difference scheme with step `dt / m`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid, SpatialGrid};
use crate::harness::{fit_order, ErrorSide, OrderFit, RateLevel, RateReport, SignedError};
use crate::problem::{CoefficientField, ControlCoefficients, ControlSet, HJBProblem, InitialData};
use crate::scheme::{SolverOptions, ThetaScheme};
use crate::smooth::SmoothFunction;
use crate::stencil::StencilBuilder;

/// One member `(a, f)` of a constant-coefficient diffusion family.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionControl {
    pub a: DMatrix<f64>,
    pub f: f64,
}

/// `u_t + F_1(D^2u) + F_2(D^2u) = 0` on the torus.
#[derive(Clone)]
pub struct SplitProblem {
    dim: usize,
    period: Vec<f64>,
    horizon: f64,
    initial: InitialData,
    families: [Vec<DiffusionControl>; 2],
}

impl fmt::Debug for SplitProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitProblem")
            .field("dim", &self.dim)
            .field("period", &self.period)
            .field("horizon", &self.horizon)
            .field("families", &self.families)
            .finish()
    }
}

/// Symmetric `s` with `s s^T / 2 = a`.
fn sigma_for(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(2.0 * a);
    let roots = DVector::from_iterator(
        a.nrows(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn constant_control(dim: usize, a: &DMatrix<f64>, f: f64) -> ControlCoefficients {
    ControlCoefficients::constant(sigma_for(a), DVector::zeros(dim), 0.0, f)
}

impl SplitProblem {
    pub fn new(
        period: Vec<f64>,
        horizon: f64,
        initial: InitialData,
        first: Vec<DiffusionControl>,
        second: Vec<DiffusionControl>,
    ) -> Result<Self> {
        let dim = period.len();
        for (j, family) in [&first, &second].iter().enumerate() {
            if family.is_empty() {
                return Err(Error::InvalidInput(format!("family {} is empty", j + 1)));
            }
            for m in family.iter() {
                if m.a.nrows() != dim || m.a.ncols() != dim {
                    return Err(Error::InvalidInput(format!(
                        "family {} has a matrix of the wrong size",
                        j + 1
                    )));
                }
                if (&m.a - m.a.transpose()).amax() > 1e-12
                    || SymmetricEigen::new(m.a.clone()).eigenvalues.min() < -1e-12
                {
                    return Err(Error::InvalidInput(format!(
                        "family {} has a matrix that is not symmetric PSD",
                        j + 1
                    )));
                }
                if !m.f.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!("f in family {}", j + 1),
                        location: "config".into(),
                    });
                }
            }
        }
        // validates period and horizon
        let split = Self {
            dim,
            period,
            horizon,
            initial,
            families: [first, second],
        };
        split.family_problem(0)?;
        Ok(split)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn period(&self) -> &[f64] {
        &self.period
    }

    pub fn family(&self, j: usize) -> &[DiffusionControl] {
        &self.families[j]
    }

    /// `u_t + F_j(D^2u) = 0` as a scheme problem.
    pub fn family_problem(&self, j: usize) -> Result<HJBProblem> {
        let controls = self.families[j]
            .iter()
            .map(|m| constant_control(self.dim, &m.a, m.f))
            .collect::<Vec<_>>();
        self.problem(controls)
    }

    /// `u_t + F_1 + F_2 = 0` with the product control set `(a_1 + a_2, f_1 + f_2)`.
    pub fn combined_problem(&self) -> Result<HJBProblem> {
        let mut controls = Vec::new();
        for p in &self.families[0] {
            for q in &self.families[1] {
                controls.push(constant_control(self.dim, &(&p.a + &q.a), p.f + q.f));
            }
        }
        self.problem(controls)
    }

    fn problem(&self, controls: Vec<ControlCoefficients>) -> Result<HJBProblem> {
        HJBProblem::new(
            self.dim,
            ControlSet::numbered(controls.len())?,
            CoefficientField::new(controls, false),
            self.initial.clone(),
            self.horizon,
            self.period.clone(),
        )
    }

    /// `F_j(X) = max_a {-tr[a X] - f}`.
    pub fn hamiltonian(&self, j: usize, hess: &DMatrix<f64>) -> f64 {
        self.families[j]
            .iter()
            .map(|m| -(m.a.component_mul(hess)).sum() - m.f)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Linear modes `u_t = tr[s s^T D^2u] + b . Du + c u + f` combined by
/// `u_t + max_i {-L^i u - f^i} = 0`. Stored in the scheme convention, where
/// the diffusion matrix is `s s^T` and so `sigma = sqrt(2) s`.
#[derive(Debug, Clone)]
pub struct PCControlProblem {
    base: HJBProblem,
}

impl PCControlProblem {
    /// `modes` use the linear-semigroup convention above (`sigma` is `s`).
    pub fn new(
        period: Vec<f64>,
        horizon: f64,
        initial: InitialData,
        modes: Vec<ControlCoefficients>,
    ) -> Result<Self> {
        let converted = modes
            .into_iter()
            .map(|m| {
                let s = m.sigma.clone();
                ControlCoefficients {
                    sigma: Arc::new(move |t, x| std::f64::consts::SQRT_2 * s(t, x)),
                    ..m
                }
            })
            .collect::<Vec<_>>();
        let base = HJBProblem::new(
            period.len(),
            ControlSet::numbered(converted.len())?,
            CoefficientField::new(converted, false),
            initial,
            horizon,
            period,
        )?;
        Ok(Self { base })
    }

    /// Wraps a problem whose controls already use the scheme convention.
    pub fn from_problem(base: HJBProblem) -> Result<Self> {
        if base.coefficients().is_time_dependent() {
            return Err(Error::InvalidInput(
                "piecewise-constant controls need time-independent modes".into(),
            ));
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &HJBProblem {
        &self.base
    }

    pub fn modes(&self) -> usize {
        self.base.controls().len()
    }
}

/// `m` implicit steps of size `dt / m` for a constant-coefficient problem.
pub fn sub_semigroup_apply(
    problem: &HJBProblem,
    phi: &GridFunction,
    dt: f64,
    m: usize,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<GridFunction> {
    let scheme = inner_scheme(problem, *phi.grid(), dt, m, builder, options)?;
    advance(&scheme, phi)
}

fn inner_scheme(
    problem: &HJBProblem,
    space: SpatialGrid,
    dt: f64,
    m: usize,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<ThetaScheme> {
    if m == 0 {
        return Err(Error::InvalidInput("need at least one inner step".into()));
    }
    let grid = SpaceTimeGrid::new(space, dt, m)?;
    Ok(ThetaScheme::new(problem.clone(), grid, 1.0, builder)?.with_options(options))
}

fn advance(scheme: &ThetaScheme, phi: &GridFunction) -> Result<GridFunction> {
    let mut u = phi.clone();
    for level in 1..=scheme.grid().nt() {
        u = scheme.step(&u, level)?.0;
    }
    Ok(u)
}

/// `S_1(dt) S_2(dt) phi`.
pub fn splitting_step(
    split: &SplitProblem,
    phi: &GridFunction,
    dt: f64,
    m: usize,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<GridFunction> {
    let second = sub_semigroup_apply(
        &split.family_problem(1)?,
        phi,
        dt,
        m,
        builder.clone(),
        options,
    )?;
    sub_semigroup_apply(&split.family_problem(0)?, &second, dt, m, builder, options)
}

/// `min_i S_i(dt) u_prev`.
pub fn pc_step(
    pp: &PCControlProblem,
    u_prev: &GridFunction,
    dt: f64,
    m: usize,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<GridFunction> {
    let branches = (0..pp.modes())
        .map(|i| {
            sub_semigroup_apply(
                &pp.base.restrict(&[i])?,
                u_prev,
                dt,
                m,
                builder.clone(),
                options,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    pointwise_min(branches)
}

fn pointwise_min(branches: Vec<GridFunction>) -> Result<GridFunction> {
    let mut it = branches.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidInput("no modes".into()))?;
    it.try_fold(first, |acc, b| acc.zip_with(&b, f64::min))
}

/// Number of steps of length `dt` covering `horizon` exactly.
fn step_count(horizon: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (horizon / dt).round();
    if !(dt > 0.0) || n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidInput(format!(
            "{what} {dt} does not divide the horizon {horizon}"
        )));
    }
    Ok(n as usize)
}

/// Inner steps per macro step so that the inner step does not exceed `inner_dt`.
fn inner_count(dt: f64, inner_dt: f64) -> usize {
    ((dt / inner_dt) - 1e-9).ceil().max(1.0) as usize
}

/// A time-stepping approximation marched to the horizon with a macro step `dt`.
pub trait SemigroupStepper: Send + Sync {
    fn name(&self) -> &str;
    fn space(&self) -> SpatialGrid;
    fn horizon(&self) -> f64;
    fn initial(&self) -> GridFunction;
    fn run(&self, dt: f64) -> Result<GridFunction>;
}

/// One implicit finite difference step per macro step.
pub struct ThetaStepper {
    problem: HJBProblem,
    space: SpatialGrid,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
}

impl ThetaStepper {
    pub fn new(
        problem: HJBProblem,
        nx: usize,
        builder: Arc<dyn StencilBuilder>,
        options: SolverOptions,
    ) -> Result<Self> {
        let space = SpatialGrid::for_periods(problem.period(), nx)?;
        Ok(Self {
            problem,
            space,
            builder,
            options,
        })
    }
}

impl SemigroupStepper for ThetaStepper {
    fn name(&self) -> &str {
        "theta"
    }

    fn space(&self) -> SpatialGrid {
        self.space
    }

    fn horizon(&self) -> f64 {
        self.problem.horizon()
    }

    fn initial(&self) -> GridFunction {
        GridFunction::from_fn(self.space, |x| self.problem.initial(x))
    }

    fn run(&self, dt: f64) -> Result<GridFunction> {
        let nt = step_count(self.horizon(), dt, "time step")?;
        let grid = SpaceTimeGrid::new(self.space, self.horizon(), nt)?;
        let traj = ThetaScheme::new(self.problem.clone(), grid, 1.0, self.builder.clone())?
            .with_options(self.options)
            .solve()?;
        Ok(traj.final_level().clone())
    }
}

/// `S_1(dt) S_2(dt)` with inner steps no longer than `inner_dt`.
pub struct SplittingStepper {
    split: SplitProblem,
    families: [HJBProblem; 2],
    space: SpatialGrid,
    inner_dt: f64,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
}

impl SplittingStepper {
    pub fn new(
        split: SplitProblem,
        nx: usize,
        inner_dt: f64,
        builder: Arc<dyn StencilBuilder>,
        options: SolverOptions,
    ) -> Result<Self> {
        if !(inner_dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "inner step must be positive, got {inner_dt}"
            )));
        }
        let space = SpatialGrid::for_periods(split.period(), nx)?;
        let families = [split.family_problem(0)?, split.family_problem(1)?];
        Ok(Self {
            split,
            families,
            space,
            inner_dt,
            builder,
            options,
        })
    }

    pub fn inner_dt(&self) -> f64 {
        self.inner_dt
    }
}

impl SemigroupStepper for SplittingStepper {
    fn name(&self) -> &str {
        "split"
    }

    fn space(&self) -> SpatialGrid {
        self.space
    }

    fn horizon(&self) -> f64 {
        self.split.horizon()
    }

    fn initial(&self) -> GridFunction {
        GridFunction::from_fn(self.space, |x| (self.split.initial)(x))
    }

    fn run(&self, dt: f64) -> Result<GridFunction> {
        let steps = step_count(self.horizon(), dt, "macro step")?;
        let m = inner_count(dt, self.inner_dt);
        let [s1, s2] = [0, 1].map(|j| {
            inner_scheme(
                &self.families[j],
                self.space,
                dt,
                m,
                self.builder.clone(),
                self.options,
            )
        });
        let (s1, s2) = (s1?, s2?);
        let mut u = self.initial();
        for _ in 0..steps {
            u = advance(&s1, &advance(&s2, &u)?)?;
        }
        Ok(u)
    }
}

/// `min_i S_i(dt)` with inner steps no longer than `inner_dt`.
pub struct PcStepper {
    problem: PCControlProblem,
    modes: Vec<HJBProblem>,
    space: SpatialGrid,
    inner_dt: f64,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
}

impl PcStepper {
    pub fn new(
        problem: PCControlProblem,
        nx: usize,
        inner_dt: f64,
        builder: Arc<dyn StencilBuilder>,
        options: SolverOptions,
    ) -> Result<Self> {
        if !(inner_dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "inner step must be positive, got {inner_dt}"
            )));
        }
        let space = SpatialGrid::for_periods(problem.base.period(), nx)?;
        let modes = (0..problem.modes())
            .map(|i| problem.base.restrict(&[i]))
            .collect::<Result<_>>()?;
        Ok(Self {
            problem,
            modes,
            space,
            inner_dt,
            builder,
            options,
        })
    }
}

impl SemigroupStepper for PcStepper {
    fn name(&self) -> &str {
        "pcc"
    }

    fn space(&self) -> SpatialGrid {
        self.space
    }

    fn horizon(&self) -> f64 {
        self.problem.base.horizon()
    }

    fn initial(&self) -> GridFunction {
        GridFunction::from_fn(self.space, |x| self.problem.base.initial(x))
    }

    fn run(&self, dt: f64) -> Result<GridFunction> {
        let steps = step_count(self.horizon(), dt, "macro step")?;
        let m = inner_count(dt, self.inner_dt);
        let schemes = self
            .modes
            .iter()
            .map(|p| inner_scheme(p, self.space, dt, m, self.builder.clone(), self.options))
            .collect::<Result<Vec<_>>>()?;
        let mut u = self.initial();
        for _ in 0..steps {
            let branches = schemes
                .par_iter()
                .map(|s| advance(s, &u))
                .collect::<Result<Vec<_>>>()?;
            u = pointwise_min(branches)?;
        }
        Ok(u)
    }
}

/// Problem data a stepper is built from.
#[derive(Debug, Clone)]
pub enum SemigroupInput {
    Hjb(HJBProblem),
    Split(SplitProblem),
}

#[derive(Clone)]
pub struct StepperSetup {
    pub input: SemigroupInput,
    pub nx: usize,
    pub inner_dt: f64,
    pub builder: Arc<dyn StencilBuilder>,
    pub options: SolverOptions,
}

type StepperFactory = fn(&StepperSetup) -> Result<Arc<dyn SemigroupStepper>>;

/// Name-indexed table of semigroup steppers.
#[derive(Clone)]
pub struct SemigroupRegistry {
    entries: BTreeMap<String, StepperFactory>,
}

impl fmt::Debug for SemigroupRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

fn hjb(setup: &StepperSetup) -> Result<&HJBProblem> {
    match &setup.input {
        SemigroupInput::Hjb(p) => Ok(p),
        SemigroupInput::Split(_) => Err(Error::Config(
            "this stepper needs an HJB problem, not a split problem".into(),
        )),
    }
}

impl SemigroupRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// `theta`, `split` and `pcc`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("theta", |s| {
            Ok(Arc::new(ThetaStepper::new(
                hjb(s)?.clone(),
                s.nx,
                s.builder.clone(),
                s.options,
            )?))
        });
        r.register("split", |s| match &s.input {
            SemigroupInput::Split(p) => Ok(Arc::new(SplittingStepper::new(
                p.clone(),
                s.nx,
                s.inner_dt,
                s.builder.clone(),
                s.options,
            )?)),
            SemigroupInput::Hjb(_) => Err(Error::Config(
                "split stepper needs two operator families".into(),
            )),
        });
        r.register("pcc", |s| {
            let pp = PCControlProblem::from_problem(hjb(s)?.clone())?;
            Ok(Arc::new(PcStepper::new(
                pp,
                s.nx,
                s.inner_dt,
                s.builder.clone(),
                s.options,
            )?))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: StepperFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str, setup: &StepperSetup) -> Result<Arc<dyn SemigroupStepper>> {
        let factory = self.entries.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown stepper {name:?} (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(setup)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl Default for SemigroupRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Rate report over macro steps plus the one-sided deviation `sup (u_ref - u_h)^+`.
#[derive(Debug, Clone)]
pub struct SemigroupRateReport {
    pub rate: RateReport,
    pub max_excess: f64,
}

/// Runs `stepper` for each macro step and measures signed errors against
/// `reference`, computed on the same spatial grid.
pub fn semigroup_rate_experiment(
    stepper: &dyn SemigroupStepper,
    reference: &GridFunction,
    dt_list: &[f64],
    exponent: Option<f64>,
) -> Result<SemigroupRateReport> {
    if dt_list.is_empty() {
        return Err(Error::InvalidInput("empty time step list".into()));
    }
    let dx = stepper.space().dx();
    let levels: Vec<RateLevel> = dt_list
        .par_iter()
        .map(|&dt| {
            Ok(RateLevel::new(
                dt,
                dx,
                dt,
                SignedError::between(reference, &stepper.run(dt)?)?,
            ))
        })
        .collect::<Result<_>>()?;
    let max_excess = levels.iter().map(|l| l.error.plus).fold(0.0, f64::max);
    Ok(SemigroupRateReport {
        rate: RateReport::new("dt", levels, ErrorSide::Total, exponent),
        max_excess,
    })
}

/// Implicit solve of `problem` on `nx` points with step `dt`, final level only.
pub fn reference_solve(
    problem: &HJBProblem,
    nx: usize,
    dt: f64,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<GridFunction> {
    let space = SpatialGrid::for_periods(problem.period(), nx)?;
    let nt = step_count(problem.horizon(), dt, "reference step")?;
    let grid = SpaceTimeGrid::new(space, problem.horizon(), nt)?;
    let traj = ThetaScheme::new(problem.clone(), grid, 1.0, builder)?
        .with_options(options)
        .solve()?;
    Ok(traj.final_level().clone())
}

/// Inner step chosen so the inner time error is a small fraction of the splitting error.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub inner_dt: f64,
    pub reference: GridFunction,
    /// `2 sup |u_m - u_2m|` at the smallest macro step.
    pub inner_error: f64,
    /// `sup |u_m - u_ref|` at the smallest macro step.
    pub split_error: f64,
    pub converged: bool,
}

/// Fraction of the splitting error the inner error may reach.
pub const INNER_ERROR_FRACTION: f64 = 0.01;
const MAX_HALVINGS: usize = 6;

/// Starts from `dt_min / 16` and halves the inner step until the Richardson
/// estimate of the inner error is at most 1% of the splitting error at `dt_min`.
/// The reference uses the same step, so `dt_ref = min(dt_min / 16, inner_dt)`.
pub fn calibrate_splitting(
    split: &SplitProblem,
    nx: usize,
    dt_min: f64,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<Calibration> {
    let combined = split.combined_problem()?;
    let mut inner_dt = dt_min / 16.0;
    let mut last = None;
    for _ in 0..=MAX_HALVINGS {
        let reference = reference_solve(&combined, nx, inner_dt, builder.clone(), options)?;
        let coarse = SplittingStepper::new(split.clone(), nx, inner_dt, builder.clone(), options)?
            .run(dt_min)?;
        let fine =
            SplittingStepper::new(split.clone(), nx, inner_dt / 2.0, builder.clone(), options)?
                .run(dt_min)?;
        let inner_error = 2.0 * coarse.zip_with(&fine, |a, b| a - b)?.sup_norm();
        let split_error = coarse.zip_with(&reference, |a, b| a - b)?.sup_norm();
        let converged = inner_error <= INNER_ERROR_FRACTION * split_error;
        let c = Calibration {
            inner_dt,
            reference,
            inner_error,
            split_error,
            converged,
        };
        if converged {
            return Ok(c);
        }
        last = Some(c);
        inner_dt /= 2.0;
    }
    Ok(last.expect("at least one attempt"))
}

/// `sup_x |(S_h(dt) phi - phi)/dt + F_1[phi] + F_2[phi]|` for each `dt`, with the
/// fitted slope in `dt`. Reported only; the constants are not known.
pub fn splitting_consistency(
    split: &SplitProblem,
    phi: &dyn SmoothFunction,
    nx: usize,
    dt_list: &[f64],
    inner_dt: f64,
    builder: Arc<dyn StencilBuilder>,
    options: SolverOptions,
) -> Result<(Vec<(f64, f64)>, OrderFit)> {
    let space = SpatialGrid::for_periods(split.period(), nx)?;
    let sampled = GridFunction::from_fn(space, |x| phi.value(0.0, x));
    let operator = GridFunction::from_fn(space, |x| {
        let hess = phi.hessian(0.0, x);
        split.hamiltonian(0, &hess) + split.hamiltonian(1, &hess)
    });
    let rows = dt_list
        .iter()
        .map(|&dt| {
            let m = inner_count(dt, inner_dt);
            let stepped = splitting_step(split, &sampled, dt, m, builder.clone(), options)?;
            let quotient = stepped.zip_with(&sampled, |a, b| (a - b) / dt)?;
            Ok((dt, quotient.zip_with(&operator, |q, f| q + f)?.sup_norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_order(
        &rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.1).collect::<Vec<_>>(),
    );
    Ok((rows, fit))
}
