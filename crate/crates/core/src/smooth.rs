//! Smooth test functions with analytic derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// A function of `(t, x)` whose first time derivative, gradient and Hessian
/// are known in closed form.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn time_derivative(&self, t: f64, x: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64>;

    fn is_time_independent(&self) -> bool {
        false
    }
}

/// `amplitude * exp(-decay t) * sin(k . x + phase)`.
#[derive(Debug, Clone)]
pub struct SineWave {
    pub amplitude: f64,
    pub decay: f64,
    pub wavevector: Vec<f64>,
    pub phase: f64,
}

impl SineWave {
    pub fn new(amplitude: f64, decay: f64, wavevector: Vec<f64>, phase: f64) -> Self {
        Self {
            amplitude,
            decay,
            wavevector,
            phase,
        }
    }

    fn arg(&self, x: &[f64]) -> f64 {
        self.wavevector
            .iter()
            .zip(x)
            .map(|(k, xi)| k * xi)
            .sum::<f64>()
            + self.phase
    }

    fn envelope(&self, t: f64) -> f64 {
        self.amplitude * (-self.decay * t).exp()
    }
}

impl SmoothFunction for SineWave {
    fn dim(&self) -> usize {
        self.wavevector.len()
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.envelope(t) * self.arg(x).sin()
    }

    fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        -self.decay * self.value(t, x)
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        let c = self.envelope(t) * self.arg(x).cos();
        DVector::from_iterator(self.dim(), self.wavevector.iter().map(|k| c * k))
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let v = self.value(t, x);
        let k = DVector::from_column_slice(&self.wavevector);
        -v * &k * k.transpose()
    }

    fn is_time_independent(&self) -> bool {
        self.decay == 0.0
    }
}

/// `x^T Q x + l . x + c` with symmetric `Q`; not periodic, used for pointwise checks.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub q: DMatrix<f64>,
    pub l: DVector<f64>,
    pub c: f64,
}

impl SmoothFunction for Quadratic {
    fn dim(&self) -> usize {
        self.l.len()
    }

    fn value(&self, _t: f64, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        (x.transpose() * &self.q * &x)[(0, 0)] + self.l.dot(&x) + self.c
    }

    fn time_derivative(&self, _t: f64, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _t: f64, x: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        2.0 * &self.q * x + &self.l
    }

    fn hessian(&self, _t: f64, _x: &[f64]) -> DMatrix<f64> {
        2.0 * &self.q
    }

    fn is_time_independent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl SmoothFunction for Constant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _t: f64, _x: &[f64]) -> f64 {
        self.value
    }

    fn time_derivative(&self, _t: f64, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _t: f64, _x: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dim)
    }

    fn hessian(&self, _t: f64, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }

    fn is_time_independent(&self) -> bool {
        true
    }
}

/// Periodic bump `amplitude * exp(-sum_i (1 - cos(w_i (x_i - c_i))) / width^2)`
/// with `w_i = 2 pi / L_i`.
#[derive(Debug, Clone)]
pub struct PeriodicBump {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
    pub period: Vec<f64>,
}

impl PeriodicBump {
    fn freq(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.period[i]
    }

    fn angle(&self, i: usize, x: &[f64]) -> f64 {
        self.freq(i) * (x[i] - self.center[i])
    }
}

impl SmoothFunction for PeriodicBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, _t: f64, x: &[f64]) -> f64 {
        let e: f64 = (0..self.dim()).map(|i| 1.0 - self.angle(i, x).cos()).sum();
        self.amplitude * (-e / (self.width * self.width)).exp()
    }

    fn time_derivative(&self, _t: f64, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        let v = self.value(t, x);
        let w2 = self.width * self.width;
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| -v * self.freq(i) * self.angle(i, x).sin() / w2),
        )
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let v = self.value(t, x);
        let w2 = self.width * self.width;
        let n = self.dim();
        let d: Vec<f64> = (0..n)
            .map(|i| self.freq(i) * self.angle(i, x).sin())
            .collect();
        DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j {
                v * self.freq(i).powi(2) * self.angle(i, x).cos() / w2
            } else {
                0.0
            };
            v * d[i] * d[j] / (w2 * w2) - diag
        })
    }

    fn is_time_independent(&self) -> bool {
        true
    }
}

/// Pointwise sum of smooth functions.
#[derive(Clone)]
pub struct Sum(pub Vec<Arc<dyn SmoothFunction>>);

impl SmoothFunction for Sum {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |f| f.dim())
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.0.iter().map(|f| f.value(t, x)).sum()
    }

    fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        self.0.iter().map(|f| f.time_derivative(t, x)).sum()
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        self.0
            .iter()
            .fold(DVector::zeros(self.dim()), |acc, f| acc + f.gradient(t, x))
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        self.0
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, f| acc + f.hessian(t, x))
    }

    fn is_time_independent(&self) -> bool {
        self.0.iter().all(|f| f.is_time_independent())
    }
}
