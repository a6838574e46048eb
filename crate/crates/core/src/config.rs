//! JSON problem descriptions.
//!
//! ```json
//! {
//!   "dim": 1,
//!   "period": 6.283185307179586,
//!   "horizon": 1.0,
//!   "controls": [{ "sigma": 1.0, "b": 0.0, "c": 0.0, "f": 0.0 }],
//!   "u0": { "name": "sin_sum", "params": { "terms": [{ "amp": 1.0, "k": [1.0] }] } },
//!   "exact": { "name": "sin_sum", "params": { "terms": [{ "amp": 1.0, "k": [1.0], "decay": 0.5 }] } }
//! }
//! ```
//!
//! A coefficient is a number or `{"name", "params"}` with one of
//!
//! * `const`: `{"value"}`
//! * `sin_sum`: `{"terms": [{"amp", "k", "phase"?, "decay"?}]}`, the sum of
//!   `amp * exp(-decay t) * sin(k . x + phase)`
//! * `gauss_bump`: `{"amp", "center", "width"}`, see [`PeriodicBump`]
//!
//! `sigma` may also be a matrix (array of rows) and `b` a vector; scalars
//! stand for multiples of the identity and constant vectors.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::manufactured::manufacture;
use crate::problem::{
    CoefficientField, ControlCoefficients, ControlSet, HJBProblem, InitialData, ScalarField,
};
use crate::semigroup::{DiffusionControl, PCControlProblem, SplitProblem};
use crate::smooth::{Constant, PeriodicBump, SineWave, SmoothFunction, Sum};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Number(f64),
    Named {
        name: String,
        #[serde(default)]
        params: serde_json::Value,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SineTerm {
    amp: f64,
    k: Vec<f64>,
    #[serde(default)]
    phase: f64,
    #[serde(default)]
    decay: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SinSumParams {
    terms: Vec<SineTerm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BumpParams {
    amp: f64,
    center: Vec<f64>,
    width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstParams {
    value: f64,
}

fn params<T: DeserializeOwned>(name: &str, value: &serde_json::Value) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("{name} params: {e}")))
}

impl Expr {
    /// The expression as a smooth function on the torus with the given periods.
    pub fn smooth(&self, period: &[f64]) -> Result<Arc<dyn SmoothFunction>> {
        let dim = period.len();
        match self {
            Expr::Number(v) => Ok(Arc::new(Constant { dim, value: *v })),
            Expr::Named { name, params: p } => match name.as_str() {
                "const" => Ok(Arc::new(Constant {
                    dim,
                    value: params::<ConstParams>(name, p)?.value,
                })),
                "sin_sum" => {
                    let terms = params::<SinSumParams>(name, p)?.terms;
                    if terms.is_empty() {
                        return Err(Error::Config("sin_sum needs at least one term".into()));
                    }
                    let mut waves: Vec<Arc<dyn SmoothFunction>> = Vec::new();
                    for t in terms {
                        if t.k.len() != dim {
                            return Err(Error::Config(format!(
                                "sin_sum wavevector has {} entries, dim is {dim}",
                                t.k.len()
                            )));
                        }
                        waves.push(Arc::new(SineWave::new(t.amp, t.decay, t.k, t.phase)));
                    }
                    Ok(Arc::new(Sum(waves)))
                }
                "gauss_bump" => {
                    let b = params::<BumpParams>(name, p)?;
                    if b.center.len() != dim || !(b.width > 0.0) {
                        return Err(Error::Config(format!(
                            "gauss_bump needs {dim} center entries and a positive width"
                        )));
                    }
                    Ok(Arc::new(PeriodicBump {
                        amplitude: b.amp,
                        center: b.center,
                        width: b.width,
                        period: period.to_vec(),
                    }))
                }
                other => Err(Error::Config(format!(
                    "unknown expression {other:?} (known: const, gauss_bump, sin_sum)"
                ))),
            },
        }
    }

    pub fn field(&self, period: &[f64]) -> Result<ScalarField> {
        let f = self.smooth(period)?;
        Ok(Arc::new(move |t, x| f.value(t, x)))
    }

    pub fn initial(&self, period: &[f64]) -> Result<InitialData> {
        let f = self.smooth(period)?;
        Ok(Arc::new(move |x| f.value(0.0, x)))
    }

    fn is_constant(&self) -> bool {
        matches!(self, Expr::Number(_))
    }

    fn is_time_dependent(&self, period: &[f64]) -> Result<bool> {
        Ok(!self.smooth(period)?.is_time_independent())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Matrix(Vec<Vec<f64>>),
    Scalar(Expr),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Vector(Vec<f64>),
    Scalar(Expr),
}

fn zero_vector() -> VectorSpec {
    VectorSpec::Scalar(Expr::Number(0.0))
}

fn zero() -> Expr {
    Expr::Number(0.0)
}

fn matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Config(format!("matrix must be {dim}x{dim}")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub sigma: MatrixSpec,
    #[serde(default = "zero_vector")]
    pub b: VectorSpec,
    #[serde(default = "zero")]
    pub c: Expr,
    #[serde(default = "zero")]
    pub f: Expr,
}

impl ControlSpec {
    pub fn build(&self, period: &[f64]) -> Result<ControlCoefficients> {
        let dim = period.len();
        let sigma: crate::problem::MatrixField = match &self.sigma {
            MatrixSpec::Matrix(rows) => {
                let m = matrix(rows, dim)?;
                Arc::new(move |_, _| m.clone())
            }
            MatrixSpec::Scalar(e) => {
                let s = e.smooth(period)?;
                Arc::new(move |t, x| DMatrix::identity(dim, dim) * s.value(t, x))
            }
        };
        let drift: crate::problem::VectorField = match &self.b {
            VectorSpec::Vector(v) => {
                if v.len() != dim {
                    return Err(Error::Config(format!(
                        "drift has {} entries, dim is {dim}",
                        v.len()
                    )));
                }
                let v = DVector::from_column_slice(v);
                Arc::new(move |_, _| v.clone())
            }
            VectorSpec::Scalar(e) => {
                let s = e.smooth(period)?;
                Arc::new(move |t, x| DVector::from_element(dim, s.value(t, x)))
            }
        };
        Ok(ControlCoefficients::new(
            sigma,
            drift,
            self.c.field(period)?,
            self.f.field(period)?,
        ))
    }

    fn exprs(&self) -> Vec<&Expr> {
        let mut out = vec![&self.c, &self.f];
        if let MatrixSpec::Scalar(e) = &self.sigma {
            out.push(e);
        }
        if let VectorSpec::Scalar(e) = &self.b {
            out.push(e);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PeriodSpec {
    Uniform(f64),
    PerAxis(Vec<f64>),
}

impl PeriodSpec {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        let p = match self {
            PeriodSpec::Uniform(l) => vec![*l; dim],
            PeriodSpec::PerAxis(v) => v.clone(),
        };
        if p.len() != dim {
            return Err(Error::Config(format!(
                "period has {} entries, dim is {dim}",
                p.len()
            )));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedSpec {
    pub exact: Expr,
    /// One nonnegative slack per control, vanishing somewhere for each `(t, x)`.
    pub slack: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub period: PeriodSpec,
    pub horizon: f64,
    pub controls: Vec<ControlSpec>,
    /// Required unless `manufactured` is given, in which case it defaults to `u*(0, .)`.
    #[serde(default)]
    pub u0: Option<Expr>,
    #[serde(default)]
    pub exact: Option<Expr>,
    #[serde(default)]
    pub manufactured: Option<ManufacturedSpec>,
    #[serde(default)]
    pub scheme: SchemeHints,
}

/// Discretization defaults stored with a problem; command-line flags take precedence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeHints {
    pub theta: Option<f64>,
    pub nx: Option<usize>,
    pub dt: Option<f64>,
    pub cfl_factor: Option<f64>,
}

/// A problem together with its exact solution, when one is known.
#[derive(Clone)]
pub struct LoadedProblem {
    pub problem: HJBProblem,
    pub exact: Option<Arc<dyn SmoothFunction>>,
    pub hints: SchemeHints,
}

impl std::fmt::Debug for LoadedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedProblem")
            .field("problem", &self.problem)
            .field("exact", &self.exact.is_some())
            .field("hints", &self.hints)
            .finish()
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<LoadedProblem> {
        let period = self.period.resolve(self.dim)?;
        if self.controls.is_empty() {
            return Err(Error::Config("at least one control is required".into()));
        }
        let coeffs = self
            .controls
            .iter()
            .map(|c| c.build(&period))
            .collect::<Result<Vec<_>>>()?;
        let labels = ControlSet::numbered(coeffs.len())?;
        if let Some(m) = &self.manufactured {
            let exact = m.exact.smooth(&period)?;
            let slack = m
                .slack
                .iter()
                .map(|g| g.field(&period))
                .collect::<Result<Vec<_>>>()?;
            let mut built = manufacture(
                labels,
                coeffs,
                slack,
                exact.clone(),
                self.horizon,
                period.clone(),
            )?;
            if let Some(u0) = &self.u0 {
                built.base = built.base.with_initial(u0.initial(&period)?);
            }
            return Ok(LoadedProblem {
                problem: built.base,
                exact: Some(exact),
                hints: self.scheme,
            });
        }
        let u0 = self
            .u0
            .as_ref()
            .ok_or_else(|| Error::Config("missing u0".into()))?;
        let mut time_dependent = false;
        for e in self.controls.iter().flat_map(|c| c.exprs()) {
            time_dependent |= !e.is_constant() && e.is_time_dependent(&period)?;
        }
        let problem = HJBProblem::new(
            self.dim,
            labels,
            CoefficientField::new(coeffs, time_dependent),
            u0.initial(&period)?,
            self.horizon,
            period.clone(),
        )?;
        let exact = self.exact.as_ref().map(|e| e.smooth(&period)).transpose()?;
        Ok(LoadedProblem {
            problem,
            exact,
            hints: self.scheme,
        })
    }
}

/// Control subsets of a switching system, e.g. `{"modes": [[0], [1]], "cost": 0.1}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    pub modes: Vec<Vec<usize>>,
    #[serde(default)]
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ConstMatrix {
    Matrix(Vec<Vec<f64>>),
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyMember {
    pub a: ConstMatrix,
    #[serde(default)]
    pub f: f64,
}

/// Two families of constant diffusions for the splitting experiment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub dim: usize,
    pub period: PeriodSpec,
    pub horizon: f64,
    pub u0: Expr,
    pub families: [Vec<FamilyMember>; 2],
}

impl SplitConfig {
    pub fn build(&self) -> Result<SplitProblem> {
        let period = self.period.resolve(self.dim)?;
        let family = |j: usize| -> Result<Vec<DiffusionControl>> {
            self.families[j]
                .iter()
                .map(|m| {
                    let a = match &m.a {
                        ConstMatrix::Matrix(rows) => matrix(rows, self.dim)?,
                        ConstMatrix::Scalar(s) => DMatrix::identity(self.dim, self.dim) * *s,
                    };
                    Ok(DiffusionControl { a, f: m.f })
                })
                .collect()
        };
        SplitProblem::new(
            period.clone(),
            self.horizon,
            self.u0.initial(&period)?,
            family(0)?,
            family(1)?,
        )
    }
}

/// Linear modes `u_t = tr[s s^T D^2u] + b . Du + c u + f`; `sigma` is `s`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcConfig {
    pub dim: usize,
    pub period: PeriodSpec,
    pub horizon: f64,
    pub u0: Expr,
    pub modes: Vec<ControlSpec>,
}

impl PcConfig {
    pub fn build(&self) -> Result<PCControlProblem> {
        let period = self.period.resolve(self.dim)?;
        for e in self.modes.iter().flat_map(|c| c.exprs()) {
            if !e.is_constant() && e.is_time_dependent(&period)? {
                return Err(Error::Config(
                    "piecewise-constant control modes must be time independent".into(),
                ));
            }
        }
        let modes = self
            .modes
            .iter()
            .map(|c| c.build(&period))
            .collect::<Result<Vec<_>>>()?;
        PCControlProblem::new(
            period.clone(),
            self.horizon,
            self.u0.initial(&period)?,
            modes,
        )
    }
}

/// A symmetric matrix to decompose: a bare array of rows or `{"matrix", "max_order"}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixConfig {
    Wrapped {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        max_order: Option<i32>,
    },
    Bare(Vec<Vec<f64>>),
}

impl MatrixConfig {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let rows = match self {
            MatrixConfig::Wrapped { matrix, .. } => matrix,
            MatrixConfig::Bare(rows) => rows,
        };
        matrix(rows, rows.len())
    }

    pub fn max_order(&self) -> Option<i32> {
        match self {
            MatrixConfig::Wrapped { max_order, .. } => *max_order,
            MatrixConfig::Bare(_) => None,
        }
    }
}

/// Reads and parses a JSON file. Every failure maps to [`Error::Config`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Config(format!("file not found: {}", path.display()))
        }
        _ => Error::Config(format!("cannot read {}: {e}", path.display())),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    read_json::<ProblemConfig>(path)?.build()
}
