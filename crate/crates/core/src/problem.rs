//! HJB problem data: a finite control set, coefficient evaluators and
//! initial data on the torus `[0, L)^N`.
//!
//! The equation is `u_t + sup_a L^a(t, x, u, Du, D^2u) = 0` with
//!
//! ```text
//! L^a(t, x, r, p, X) = -tr[a^a X] - b^a . p - c^a r - f^a,   a^a = 1/2 sigma^a sigma^a^T.
//! ```
//!
//! Coefficients are plain closures so any grid resolution can sample them.
//! Every type here is immutable once built and can be shared across threads.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64, &[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type InitialData = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Labels of a finite control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    labels: Vec<String>,
}

impl ControlSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("control set must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate control label {l:?}"
                )));
            }
        }
        Ok(Self { labels })
    }

    /// Controls labelled `a0, a1, ...`.
    pub fn numbered(count: usize) -> Result<Self> {
        Self::new((0..count).map(|i| format!("a{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Coefficients of one control evaluated at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub sigma: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub discount: f64,
    pub source: f64,
}

impl Coefficients {
    /// `a = 1/2 sigma sigma^T`.
    pub fn diffusion(&self) -> DMatrix<f64> {
        0.5 * &self.sigma * self.sigma.transpose()
    }
}

/// Evaluators for `sigma, b, c, f` of a single control.
#[derive(Clone)]
pub struct ControlCoefficients {
    pub sigma: MatrixField,
    pub drift: VectorField,
    pub discount: ScalarField,
    pub source: ScalarField,
}

impl ControlCoefficients {
    pub fn new(
        sigma: MatrixField,
        drift: VectorField,
        discount: ScalarField,
        source: ScalarField,
    ) -> Self {
        Self {
            sigma,
            drift,
            discount,
            source,
        }
    }

    pub fn constant(sigma: DMatrix<f64>, drift: DVector<f64>, discount: f64, source: f64) -> Self {
        Self {
            sigma: Arc::new(move |_, _| sigma.clone()),
            drift: Arc::new(move |_, _| drift.clone()),
            discount: Arc::new(move |_, _| discount),
            source: Arc::new(move |_, _| source),
        }
    }

    /// One-dimensional constant coefficients.
    pub fn scalar(sigma: f64, drift: f64, discount: f64, source: f64) -> Self {
        Self::constant(
            DMatrix::from_element(1, 1, sigma),
            DVector::from_element(1, drift),
            discount,
            source,
        )
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Coefficients {
        Coefficients {
            sigma: (self.sigma)(t, x),
            drift: (self.drift)(t, x),
            discount: (self.discount)(t, x),
            source: (self.source)(t, x),
        }
    }
}

impl fmt::Debug for ControlCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ControlCoefficients(..)")
    }
}

/// Coefficient evaluators indexed by control.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    controls: Vec<ControlCoefficients>,
    time_dependent: bool,
}

impl CoefficientField {
    /// `time_dependent = false` promises that no evaluator depends on `t`,
    /// which lets the schemes assemble their operators once.
    pub fn new(controls: Vec<ControlCoefficients>, time_dependent: bool) -> Self {
        Self {
            controls,
            time_dependent,
        }
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn control(&self, index: usize) -> Result<&ControlCoefficients> {
        self.controls.get(index).ok_or(Error::ControlOutOfRange {
            index,
            count: self.controls.len(),
        })
    }

    pub fn eval(&self, index: usize, t: f64, x: &[f64]) -> Result<Coefficients> {
        Ok(self.control(index)?.eval(t, x))
    }
}

/// Parabolic HJB problem `u_t + sup_a L^a[u] = 0`, `u(0) = u0` on the torus.
#[derive(Clone)]
pub struct HJBProblem {
    dim: usize,
    controls: ControlSet,
    coeffs: CoefficientField,
    initial: InitialData,
    horizon: f64,
    period: Vec<f64>,
}

impl fmt::Debug for HJBProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HJBProblem")
            .field("dim", &self.dim)
            .field("controls", &self.controls)
            .field("horizon", &self.horizon)
            .field("period", &self.period)
            .finish()
    }
}

impl HJBProblem {
    pub fn new(
        dim: usize,
        controls: ControlSet,
        coeffs: CoefficientField,
        initial: InitialData,
        horizon: f64,
        period: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if period.len() != dim || period.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "period {period:?} must have {dim} positive entries"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if controls.len() != coeffs.len() {
            return Err(Error::InvalidInput(format!(
                "{} control labels but {} coefficient sets",
                controls.len(),
                coeffs.len()
            )));
        }
        let origin = vec![0.0; dim];
        for (i, label) in controls.labels().iter().enumerate() {
            let c = coeffs.eval(i, 0.0, &origin)?;
            if c.sigma.nrows() != dim || c.drift.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "control {label:?}: sigma is {}x{}, drift has {} entries, dimension is {dim}",
                    c.sigma.nrows(),
                    c.sigma.ncols(),
                    c.drift.len()
                )));
            }
        }
        Ok(Self {
            dim,
            controls,
            coeffs,
            initial,
            horizon,
            period,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn period(&self) -> &[f64] {
        &self.period
    }

    pub fn initial(&self, x: &[f64]) -> f64 {
        (self.initial)(x)
    }

    pub fn initial_data(&self) -> &InitialData {
        &self.initial
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut p = self.clone();
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        p.horizon = horizon;
        Ok(p)
    }

    pub fn with_initial(&self, initial: InitialData) -> Self {
        let mut p = self.clone();
        p.initial = initial;
        p
    }

    /// Problem over the sub-family of controls `subset` (in the given order).
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidInput(
                "control subset must not be empty".into(),
            ));
        }
        let mut labels = Vec::with_capacity(subset.len());
        let mut controls = Vec::with_capacity(subset.len());
        for &i in subset {
            controls.push(self.coeffs.control(i)?.clone());
            labels.push(self.controls.labels()[i].clone());
        }
        Ok(Self {
            controls: ControlSet::new(labels)?,
            coeffs: CoefficientField::new(controls, self.coeffs.time_dependent),
            ..self.clone()
        })
    }

    /// Shifts every source `f^a` by `g`, i.e. solves the scheme with right-hand side `g`.
    pub fn with_forcing(&self, g: ScalarField, time_dependent: bool) -> Self {
        let controls = self
            .coeffs
            .controls
            .iter()
            .map(|c| {
                let f = c.source.clone();
                let g = g.clone();
                ControlCoefficients {
                    source: Arc::new(move |t, x| f(t, x) + g(t, x)),
                    ..c.clone()
                }
            })
            .collect();
        Self {
            coeffs: CoefficientField::new(controls, self.coeffs.time_dependent || time_dependent),
            ..self.clone()
        }
    }

    /// `L^a(t, x, r, p, X) = -tr[a X] - b . p - c r - f`.
    pub fn evaluate_l(
        &self,
        control: usize,
        t: f64,
        x: &[f64],
        r: f64,
        p: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> Result<f64> {
        check_symmetric(hess)?;
        let c = self.coeffs.eval(control, t, x)?;
        Ok(operator_value(&c, r, p, hess))
    }

    /// `F = sup_a L^a`.
    pub fn evaluate_f(
        &self,
        t: f64,
        x: &[f64],
        r: f64,
        p: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> Result<f64> {
        Ok(self.evaluate_f_with_argmax(t, x, r, p, hess)?.0)
    }

    /// `F` together with the lowest maximizing control index.
    pub fn evaluate_f_with_argmax(
        &self,
        t: f64,
        x: &[f64],
        r: f64,
        p: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> Result<(f64, usize)> {
        check_symmetric(hess)?;
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..self.controls.len() {
            let v = operator_value(&self.coeffs.eval(a, t, x)?, r, p, hess);
            if v > best.0 {
                best = (v, a);
            }
        }
        Ok(best)
    }
}

fn operator_value(c: &Coefficients, r: f64, p: &DVector<f64>, hess: &DMatrix<f64>) -> f64 {
    let a = c.diffusion();
    -(a.component_mul(hess)).sum() - c.drift.dot(p) - c.discount * r - c.source
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidInput(
            "Hessian argument must be square".into(),
        ));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidInput(
            "Hessian argument must be symmetric".into(),
        ));
    }
    Ok(())
}

/// Sampled estimate of the constant in the bounded-Lipschitz assumption on the data.
#[derive(Debug, Clone, PartialEq)]
pub struct A1Estimate {
    /// `|u0|_1 + max_a (|sigma^a|_1 + |b^a|_1 + |c^a|_1 + |f^a|_1)`.
    pub k: f64,
    pub initial_norm: f64,
    /// Per-control sum of the coefficient norms.
    pub control_norms: Vec<f64>,
    /// Fields whose difference quotients grow under sample refinement.
    pub flagged: Vec<String>,
}

impl A1Estimate {
    pub fn is_bounded(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Estimates the (A1) constant by sampling `samples` points per dimension
/// (and per unit of time when the coefficients depend on time).
///
/// Norms are sup norms plus neighbour divided differences, wrapping across the
/// period seam; a field whose Lipschitz estimate grows by more than 50% when
/// the sampling is doubled is flagged as unbounded.
pub fn verify_a1(problem: &HJBProblem, samples: usize) -> Result<A1Estimate> {
    if samples < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 samples per dimension".into(),
        ));
    }
    let coarse = sample_norms(problem, samples)?;
    let fine = sample_norms(problem, 2 * samples)?;
    let mut flagged = Vec::new();
    for ((name, c), (_, f)) in coarse.lipschitz.iter().zip(&fine.lipschitz) {
        if *f > 1.5 * c + 1e-9 {
            flagged.push(name.clone());
        }
    }
    let m = problem.controls.len();
    let control_norms: Vec<f64> = (0..m)
        .map(|a| (0..4).map(|k| coarse.norm(1 + 4 * a + k)).sum())
        .collect();
    let initial_norm = coarse.norm(0);
    let k = initial_norm + control_norms.iter().copied().fold(0.0, f64::max);
    Ok(A1Estimate {
        k,
        initial_norm,
        control_norms,
        flagged,
    })
}

struct SampledNorms {
    sup: Vec<f64>,
    lipschitz: Vec<(String, f64)>,
}

impl SampledNorms {
    fn norm(&self, field: usize) -> f64 {
        self.sup[field] + self.lipschitz[field].1
    }
}

fn sample_norms(problem: &HJBProblem, n: usize) -> Result<SampledNorms> {
    let dim = problem.dim;
    let m = problem.controls.len();
    let steps: Vec<f64> = problem.period.iter().map(|p| p / n as f64).collect();
    let times: Vec<f64> = if problem.coeffs.time_dependent {
        (0..=n)
            .map(|k| problem.horizon * k as f64 / n as f64)
            .collect()
    } else {
        vec![0.0]
    };
    let points = n.pow(dim as u32);
    let point = |mut flat: usize| -> Vec<f64> {
        (0..dim)
            .map(|d| {
                let i = flat % n;
                flat /= n;
                i as f64 * steps[d]
            })
            .collect()
    };
    let neighbour = |flat: usize, d: usize| -> usize {
        let stride = n.pow(d as u32);
        let i = (flat / stride) % n;
        if i + 1 == n {
            flat - i * stride
        } else {
            flat + stride
        }
    };

    // field 0 is u0; then (sigma, b, c, f) for each control
    let nfields = 1 + 4 * m;
    let mut names = vec!["u0".to_string()];
    for label in problem.controls.labels() {
        for part in ["sigma", "b", "c", "f"] {
            names.push(format!("{part}[{label}]"));
        }
    }
    let mut sup = vec![0.0f64; nfields];
    let mut lip = vec![0.0f64; nfields];

    // values[t][field][point] as vectors so that differences use the Euclidean norm
    let eval_all = |t: f64| -> Result<Vec<Vec<Vec<f64>>>> {
        let mut out = vec![Vec::with_capacity(points); nfields];
        for p in 0..points {
            let x = point(p);
            let u0 = problem.initial(&x);
            check_sample(u0, "u0", t, &x)?;
            out[0].push(vec![u0]);
            for a in 0..m {
                let c = problem.coeffs.eval(a, t, &x)?;
                let parts = [
                    c.sigma.iter().copied().collect::<Vec<_>>(),
                    c.drift.iter().copied().collect::<Vec<_>>(),
                    vec![c.discount],
                    vec![c.source],
                ];
                for (k, part) in parts.into_iter().enumerate() {
                    for &v in &part {
                        check_sample(v, &names[1 + 4 * a + k], t, &x)?;
                    }
                    out[1 + 4 * a + k].push(part);
                }
            }
        }
        Ok(out)
    };
    let dist = |u: &[f64], v: &[f64]| -> f64 {
        u.iter()
            .zip(v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let euclid = |u: &[f64]| -> f64 { u.iter().map(|a| a * a).sum::<f64>().sqrt() };

    let mut previous: Option<(f64, Vec<Vec<Vec<f64>>>)> = None;
    for &t in &times {
        let vals = eval_all(t)?;
        for field in 0..nfields {
            for p in 0..points {
                sup[field] = sup[field].max(euclid(&vals[field][p]));
                for (d, h) in steps.iter().enumerate() {
                    let q = neighbour(p, d);
                    lip[field] = lip[field].max(dist(&vals[field][p], &vals[field][q]) / h);
                }
                if field > 0 {
                    if let Some((t0, prev)) = &previous {
                        let ht = (t - t0).sqrt();
                        lip[field] = lip[field].max(dist(&vals[field][p], &prev[field][p]) / ht);
                    }
                }
            }
        }
        previous = Some((t, vals));
    }
    Ok(SampledNorms {
        sup,
        lipschitz: names.into_iter().zip(lip).collect(),
    })
}

fn check_sample(v: f64, what: &str, t: f64, x: &[f64]) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            location: format!("t={t} x={x:?}"),
        })
    }
}
