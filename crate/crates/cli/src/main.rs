//! `hjb`: batch front end for the solvers and rate studies.
//!
//! Exit status: 0 success, 1 configuration error, 2 numerical failure
//! (step-size conditions, divergence), 3 failed probe or rate verdict.
//! Failures print one line `config: ...`, `numerical: ...` or `verdict: ...`
//! on stderr.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use hjb_core::config::{
    load_problem, read_json, LoadedProblem, MatrixConfig, ModesConfig, PcConfig, SplitConfig,
};
use hjb_core::harness::{
    resolution_for, run_refinement, space_time_grid, steps_for, RateReport, ReferenceSolution,
    Resolution, SchemeTemplate, Verdict,
};
use hjb_core::problem::ScalarField;
use hjb_core::scheme::{SolverOptions, ThetaScheme};
use hjb_core::semigroup::{
    calibrate_splitting, reference_solve, semigroup_rate_experiment, SemigroupInput,
    SemigroupRegistry, StepperSetup,
};
use hjb_core::stencil::{bz_decompose, BonnansZidani, StencilBuilder, StencilRegistry};
use hjb_core::switching::{k_rate_experiment, SwitchingProblem};
use hjb_core::{Error, HJBProblem};

const DEFAULT_THETA: f64 = 1.0;
const DEFAULT_NX: usize = 64;
const DEFAULT_CFL_FACTOR: f64 = 0.9;
const DEFAULT_MAX_ORDER: usize = 2;
const ONE_SIDED_TOLERANCE: f64 = 1e-6;
const BAND_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "hjb",
    version,
    about = "Monotone schemes for periodic parabolic HJB equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write the trajectory.
    Solve(SolveArgs),
    /// Refinement study in |h| = sqrt(dx^2 + dt).
    Rates(RatesArgs),
    /// Switching system over a list of switching costs.
    Switching(SwitchingArgs),
    /// Operator splitting over a list of macro steps.
    Split(SemigroupArgs),
    /// Piecewise-constant controls over a list of macro steps.
    Pcc(SemigroupArgs),
    /// Nonnegative directional decomposition of a symmetric matrix.
    Decompose(DecomposeArgs),
    /// Monotonicity, comparison and a-priori bound checks.
    Probe(ProbeArgs),
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Problem JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Implicitness, 0 explicit to 1 fully implicit.
    #[arg(long)]
    theta: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    nx: Option<usize>,
    /// Fraction of min(dx, largest stable step) used when --dt is absent.
    #[arg(long)]
    cfl_factor: Option<f64>,
    /// Fixed time step, rounded down to divide the horizon.
    #[arg(long)]
    dt: Option<f64>,
    /// Stencil name: kushner or bz.
    #[arg(long, default_value = "kushner")]
    stencil: String,
    /// Largest direction component for the bz stencil.
    #[arg(long)]
    max_order: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Run even when the step-size conditions fail.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "traj.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Grid points per axis of each level.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    levels: Vec<usize>,
    /// Time step of each level; overrides --dt and --cfl-factor.
    #[arg(long, value_delimiter = ',')]
    dt_list: Option<Vec<f64>>,
    /// Expected decay exponent; the verdict checks slope >= exponent - 0.05.
    #[arg(long)]
    exponent: Option<f64>,
    /// Run levels that violate the step-size conditions.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "rates.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SwitchingArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// JSON file with the control subset of each mode.
    #[arg(long)]
    modes: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
    k_list: Vec<f64>,
    #[arg(long, default_value = "sw_rates.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SemigroupArgs {
    /// Split or piecewise-constant control JSON file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    dt_list: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_NX)]
    nx: usize,
    /// Inner implicit step; calibrated (split) or smallest macro step / 16 (pcc) when absent.
    #[arg(long)]
    inner_dt: Option<f64>,
    #[arg(long, default_value = "kushner")]
    stencil: String,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// JSON matrix: array of rows or {"matrix", "max_order"}.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    max_order: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Random ordered pairs for the monotonicity probe.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Summary CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Verdict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e if e.is_numerical() => Failure::Numerical(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("io: {e}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Rates(a) => rates(a),
        Command::Switching(a) => switching(a),
        Command::Split(a) => split(a),
        Command::Pcc(a) => pcc(a),
        Command::Decompose(a) => decompose(a),
        Command::Probe(a) => probe(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verdict(m)) => {
            eprintln!("verdict: {m}");
            ExitCode::from(3)
        }
    }
}

fn builder(name: &str, max_order: Option<usize>) -> Result<Arc<dyn StencilBuilder>, Failure> {
    match (name, max_order) {
        ("bz", Some(p)) => Ok(Arc::new(BonnansZidani { max_order: p })),
        _ => Ok(StencilRegistry::builtin().create(name)?),
    }
}

struct Setup {
    loaded: LoadedProblem,
    theta: f64,
    builder: Arc<dyn StencilBuilder>,
    factor: f64,
    dt: Option<f64>,
    nx: usize,
}

impl Setup {
    fn new(a: &SchemeArgs) -> Result<Self, Failure> {
        let loaded = load_problem(&a.config)?;
        let h = loaded.hints;
        Ok(Self {
            theta: a.theta.or(h.theta).unwrap_or(DEFAULT_THETA),
            builder: builder(&a.stencil, a.max_order)?,
            factor: a.cfl_factor.or(h.cfl_factor).unwrap_or(DEFAULT_CFL_FACTOR),
            dt: a.dt.or(h.dt),
            nx: a.nx.or(h.nx).unwrap_or(DEFAULT_NX),
            loaded,
        })
    }

    fn problem(&self) -> &HJBProblem {
        &self.loaded.problem
    }

    fn resolution(&self, nx: usize, dt: Option<f64>) -> Result<Resolution, Failure> {
        match dt {
            Some(dt) if dt > 0.0 => Ok(Resolution {
                nx,
                nt: steps_for(self.problem().horizon(), dt),
            }),
            Some(dt) => Err(Failure::Config(format!(
                "time step must be positive, got {dt}"
            ))),
            None => Ok(resolution_for(
                self.problem(),
                nx,
                self.theta,
                self.builder.clone(),
                self.factor,
            )?),
        }
    }

    fn scheme(&self) -> Result<ThetaScheme, Failure> {
        let grid = space_time_grid(self.problem(), self.resolution(self.nx, self.dt)?)?;
        Ok(ThetaScheme::new(
            self.problem().clone(),
            grid,
            self.theta,
            self.builder.clone(),
        )?)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn write_report(report: &RateReport, out: &Path) -> Outcome {
    let mut w = create(out)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    std::fs::write(
        out.with_extension("gp"),
        report.plot_script(&file_name(out)),
    )?;
    Ok(())
}

fn verdict(v: Verdict) -> Outcome {
    match v {
        Verdict::Fail(m) => Err(Failure::Verdict(format!("fail: {m}"))),
        _ => Ok(()),
    }
}

fn solve(a: SolveArgs) -> Outcome {
    let setup = Setup::new(&a.scheme)?;
    let scheme = setup.scheme()?;
    let traj = if a.force {
        scheme.solve_unchecked()?
    } else {
        scheme.solve()?
    };
    let mut w = create(&a.out)?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let g = scheme.grid();
    let script = format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'x_1'\n\
         set ylabel 'u'\n\
         plot '{}' using 2:(abs($1 - {}) < 1e-12 ? ${} : 1/0) with lines title 't = T'\n",
        file_name(&a.out),
        g.horizon(),
        g.space.dim() + 2
    );
    std::fs::write(a.out.with_extension("gp"), script)?;
    println!(
        "solve: nx={} nt={} dt={} theta={} stencil={} sup={}",
        g.space.nx(),
        g.nt(),
        g.dt(),
        scheme.theta(),
        scheme.stencil_name(),
        traj.final_level().sup_norm()
    );
    Ok(())
}

fn rates(a: RatesArgs) -> Outcome {
    let setup = Setup::new(&a.scheme)?;
    if a.levels.is_empty() {
        return Err(Failure::Config("empty level list".into()));
    }
    let dts: Vec<Option<f64>> = match &a.dt_list {
        Some(list) if list.len() == a.levels.len() => list.iter().map(|&d| Some(d)).collect(),
        Some(list) => {
            return Err(Failure::Config(format!(
                "{} time steps for {} levels",
                list.len(),
                a.levels.len()
            )))
        }
        None => vec![setup.dt; a.levels.len()],
    };
    let levels = a
        .levels
        .iter()
        .zip(&dts)
        .map(|(&nx, &dt)| setup.resolution(nx, dt))
        .collect::<Result<Vec<_>, _>>()?;
    let reference = match &setup.loaded.exact {
        Some(u) => {
            let u = u.clone();
            ReferenceSolution::Exact(Arc::new(move |t, x| u.value(t, x)))
        }
        None => {
            let finest = levels
                .iter()
                .max_by_key(|r| r.nx)
                .copied()
                .expect("nonempty");
            let ratio = levels
                .iter()
                .find(|r| r.nx == finest.nx)
                .map_or(1, |r| r.nt) as f64;
            let fine = Resolution {
                nx: 2 * finest.nx,
                nt: (4.0 * ratio) as usize,
            };
            let grid = space_time_grid(setup.problem(), fine)?;
            let traj = ThetaScheme::new(
                setup.problem().clone(),
                grid,
                setup.theta,
                setup.builder.clone(),
            )?
            .solve()?;
            ReferenceSolution::FineGrid(traj.final_level().clone())
        }
    };
    let mut template = SchemeTemplate::new(setup.theta, setup.builder.clone());
    template.force = a.force;
    let report = run_refinement(setup.problem(), &template, &levels, &reference, a.exponent)?;
    write_report(&report, &a.out)?;
    println!(
        "rates: slope={} verdict={}",
        report.fit.slope().map_or("none".into(), |s| s.to_string()),
        report.verdict()
    );
    if let Some(f) = report.first_failure() {
        return Err(if f.numerical {
            Failure::Numerical(f.message.clone())
        } else {
            Failure::Config(f.message.clone())
        });
    }
    verdict(report.verdict())
}

fn switching(a: SwitchingArgs) -> Outcome {
    let setup = Setup::new(&a.scheme)?;
    let modes: ModesConfig = read_json(&a.modes)?;
    let first = *a
        .k_list
        .first()
        .ok_or_else(|| Failure::Config("empty k list".into()))?;
    let problem = SwitchingProblem::new(
        setup.problem().clone(),
        modes.modes,
        modes.cost.unwrap_or(first),
    )?;
    let grid = space_time_grid(setup.problem(), setup.resolution(setup.nx, setup.dt)?)?;
    let report = k_rate_experiment(
        &problem,
        &a.k_list,
        grid,
        setup.theta,
        setup.builder.clone(),
        SolverOptions::default(),
    )?;
    write_report(&report.rate, &a.out)?;
    let scale = 1.0 + grid_sup(&setup);
    println!(
        "switching: slope={} verdict={} min(v-u)={} band excess={}",
        report
            .rate
            .fit
            .slope()
            .map_or("none".into(), |s| s.to_string()),
        report.rate.verdict(),
        report.min_difference(),
        report.max_band_excess()
    );
    if report.min_difference() < -ONE_SIDED_TOLERANCE * scale {
        return Err(Failure::Verdict(format!(
            "fail: v - u reaches {} below zero",
            report.min_difference()
        )));
    }
    if report.max_band_excess() > BAND_TOLERANCE {
        return Err(Failure::Verdict(format!(
            "fail: coupling band exceeds k by {}",
            report.max_band_excess()
        )));
    }
    verdict(report.rate.verdict())
}

fn grid_sup(setup: &Setup) -> f64 {
    setup
        .scheme()
        .map(|s| s.initial().sup_norm())
        .unwrap_or(0.0)
}

fn semigroup_common(a: &SemigroupArgs) -> Result<(Arc<dyn StencilBuilder>, f64), Failure> {
    if a.dt_list.is_empty() {
        return Err(Failure::Config("empty time step list".into()));
    }
    let dt_min = a.dt_list.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((builder(&a.stencil, a.max_order)?, dt_min))
}

fn split(a: SemigroupArgs) -> Outcome {
    let cfg: SplitConfig = read_json(&a.config)?;
    let problem = cfg.build()?;
    let (builder, dt_min) = semigroup_common(&a)?;
    let options = SolverOptions::default();
    let (inner_dt, reference) = match a.inner_dt {
        Some(d) => (
            d,
            reference_solve(
                &problem.combined_problem()?,
                a.nx,
                d,
                builder.clone(),
                options,
            )?,
        ),
        None => {
            let c = calibrate_splitting(&problem, a.nx, dt_min, builder.clone(), options)?;
            println!(
                "split: inner dt={} inner error={} splitting error={} calibrated={}",
                c.inner_dt, c.inner_error, c.split_error, c.converged
            );
            (c.inner_dt, c.reference)
        }
    };
    let setup = StepperSetup {
        input: SemigroupInput::Split(problem),
        nx: a.nx,
        inner_dt,
        builder,
        options,
    };
    let stepper = SemigroupRegistry::builtin().create("split", &setup)?;
    let report =
        semigroup_rate_experiment(stepper.as_ref(), &reference, &a.dt_list, Some(1.0 / 13.0))?;
    write_report(
        &report.rate,
        &a.out.clone().unwrap_or_else(|| "split_rates.csv".into()),
    )?;
    println!(
        "split: slope={} verdict={}",
        report
            .rate
            .fit
            .slope()
            .map_or("none".into(), |s| s.to_string()),
        report.rate.verdict()
    );
    verdict(report.rate.verdict())
}

fn pcc(a: SemigroupArgs) -> Outcome {
    let cfg: PcConfig = read_json(&a.config)?;
    let problem = cfg.build()?;
    let (builder, dt_min) = semigroup_common(&a)?;
    let options = SolverOptions::default();
    let inner_dt = a.inner_dt.unwrap_or(dt_min / 16.0);
    let reference = reference_solve(problem.base(), a.nx, inner_dt, builder.clone(), options)?;
    let setup = StepperSetup {
        input: SemigroupInput::Hjb(problem.base().clone()),
        nx: a.nx,
        inner_dt,
        builder,
        options,
    };
    let stepper = SemigroupRegistry::builtin().create("pcc", &setup)?;
    let report = semigroup_rate_experiment(stepper.as_ref(), &reference, &a.dt_list, Some(0.1))?;
    write_report(
        &report.rate,
        &a.out.clone().unwrap_or_else(|| "pcc_rates.csv".into()),
    )?;
    println!(
        "pcc: slope={} verdict={} max(u_ref - u_h)={}",
        report
            .rate
            .fit
            .slope()
            .map_or("none".into(), |s| s.to_string()),
        report.rate.verdict(),
        report.max_excess
    );
    let scale = 1.0 + reference.sup_norm();
    if report.max_excess > ONE_SIDED_TOLERANCE * scale {
        return Err(Failure::Verdict(format!(
            "fail: u_h falls {} below the reference",
            report.max_excess
        )));
    }
    verdict(report.rate.verdict())
}

fn decompose(a: DecomposeArgs) -> Outcome {
    let cfg: MatrixConfig = read_json(&a.matrix)?;
    let matrix = cfg.matrix()?;
    let order = a
        .max_order
        .or(cfg.max_order().map(|p| p.max(1) as usize))
        .unwrap_or(DEFAULT_MAX_ORDER);
    let dec = bz_decompose(&matrix, order)?;
    let mut text = String::from("direction,weight\n");
    for (beta, w) in dec.directions.iter().zip(&dec.weights) {
        let b: Vec<String> = beta.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{},{w}\n", b.join(";")));
    }
    text.push_str(&format!("residual,{}\n", dec.max_residual()));
    match &a.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn probe(a: ProbeArgs) -> Outcome {
    let setup = Setup::new(&a.scheme)?;
    let scheme = setup.scheme()?;
    let cfl = scheme.cfl_check()?;
    let mono = scheme.monotonicity_probe(a.trials, a.seed)?;
    let mut rows = vec![
        format!("cfl,{},{}", cfl.ok, cfl.explicit.max(cfl.implicit)),
        format!("monotonicity,{},{}", mono.passed(), mono.trials),
    ];
    let finish = |rows: &[String]| -> Outcome {
        if let Some(path) = &a.out {
            std::fs::write(path, format!("check,passed,value\n{}\n", rows.join("\n")))?;
        }
        Ok(())
    };
    if let Some(w) = &mono.violation {
        finish(&rows)?;
        return Err(Failure::Verdict(format!(
            "monotonicity violated: trial={} node={} x={:?} step(u)={} step(v)={}",
            w.trial, w.node, w.coords, w.lower, w.upper
        )));
    }
    let zero: ScalarField = Arc::new(|_, _| 0.0);
    let one: ScalarField = Arc::new(|_, _| 1.0);
    let u = scheme.solve_unchecked()?;
    let forced = ThetaScheme::new(
        setup.problem().with_forcing(one.clone(), false),
        *scheme.grid(),
        setup.theta,
        setup.builder.clone(),
    )?
    .solve_unchecked()?;
    let comparison = scheme.comparison_bound_check(&forced, &u, &one, &zero)?;
    let bounds = scheme.apriori_bounds_check(&u)?;
    rows.push(format!(
        "comparison,{},{}",
        comparison.passed, comparison.worst_excess
    ));
    rows.push(format!("apriori,{},{}", bounds.passed, bounds.worst_ratio));
    finish(&rows)?;
    println!(
        "probe: cfl={} monotone={} comparison={} apriori={} (ratio {}, lipschitz {}, time holder {})",
        cfl.ok,
        mono.passed(),
        comparison.passed,
        bounds.passed,
        bounds.worst_ratio,
        bounds.lipschitz.last().copied().unwrap_or(0.0),
        bounds.time_holder
    );
    if !comparison.passed {
        return Err(Failure::Verdict(format!(
            "comparison bound exceeded by {} at level {}",
            comparison.worst_excess, comparison.worst_level
        )));
    }
    if !bounds.passed {
        return Err(Failure::Verdict(format!(
            "a-priori bound exceeded, ratio {} at level {}",
            bounds.worst_ratio, bounds.worst_level
        )));
    }
    Ok(())
}
