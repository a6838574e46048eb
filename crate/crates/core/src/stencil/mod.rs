//! Positive-type spatial difference operators
//!
//! ```text
//! L_h phi(x) = sum_beta C(beta) (phi(x + beta dx) - phi(x))
//! ```
//!
//! approximating `tr[a D^2 phi] + b . D phi`. Two constructions are provided,
//! Kushner's (positive type iff `a` is diagonally dominant) and the
//! Bonnans-Zidani directional one (positive type whenever `a` is a
//! nonnegative combination of `beta beta^T` over integer directions). Both
//! sit behind [`StencilBuilder`] and are looked up by name through
//! [`StencilRegistry`].

mod decompose;
mod kushner;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::smooth::SmoothFunction;

pub use decompose::{bz_decompose, bz_stencil, BZDecomposition, DecompositionMethod};
pub use kushner::kushner_stencil;

/// Map from nonzero integer offsets to weights; the centre weight is `-sum C`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStencil {
    dim: usize,
    entries: BTreeMap<Vec<i32>, f64>,
}

impl SpatialStencil {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `weight` to the entry at `offset`, creating it if needed.
    pub fn add(&mut self, offset: Vec<i32>, weight: f64) {
        debug_assert_eq!(offset.len(), self.dim);
        debug_assert!(offset.iter().any(|&o| o != 0), "zero offset in stencil");
        *self.entries.entry(offset).or_insert(0.0) += weight;
    }

    pub fn weight(&self, offset: &[i32]) -> f64 {
        self.entries.get(offset).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<i32>, f64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.entries.values().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive_type(&self) -> bool {
        self.entries.values().all(|&w| w >= 0.0)
    }
}

/// `a_ii - sum_{j != i} |a_ij| >= 0` for every row.
pub fn check_diag_dominant(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| {
        let off: f64 = (0..a.ncols())
            .filter(|&j| j != i)
            .map(|j| a[(i, j)].abs())
            .sum();
        a[(i, i)] - off >= 0.0
    })
}

/// `sum_beta C(beta) (phi(i + beta) - phi(i))` with periodic wrapping.
pub fn apply_stencil(st: &SpatialStencil, phi: &GridFunction, node: usize) -> f64 {
    let grid = phi.grid();
    let centre = phi.get(node);
    st.entries()
        .map(|(beta, c)| c * (phi.get(grid.shifted(node, beta)) - centre))
        .sum()
}

/// `|L phi(x) - L_h phi(x)|` where `L phi = tr[a D^2 phi] + b . D phi` uses the
/// analytic derivatives of `phi` (at `t = 0`) and `L_h` samples `phi` at
/// `x + beta dx`.
pub fn consistency_residual(
    st: &SpatialStencil,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    phi: &dyn SmoothFunction,
    x: &[f64],
    dx: f64,
) -> f64 {
    let exact = a.component_mul(&phi.hessian(0.0, x)).sum() + b.dot(&phi.gradient(0.0, x));
    let centre = phi.value(0.0, x);
    let discrete: f64 = st
        .entries()
        .map(|(beta, c)| {
            let y: Vec<f64> = x
                .iter()
                .zip(beta)
                .map(|(xi, &bi)| xi + bi as f64 * dx)
                .collect();
            c * (phi.value(0.0, &y) - centre)
        })
        .sum();
    (exact - discrete).abs()
}

/// Builds the stencil approximating `tr[a D^2] + b . D` at one node.
pub trait StencilBuilder: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn build(&self, a: &DMatrix<f64>, b: &DVector<f64>, dx: f64) -> Result<SpatialStencil>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Kushner;

impl StencilBuilder for Kushner {
    fn name(&self) -> &str {
        "kushner"
    }

    fn build(&self, a: &DMatrix<f64>, b: &DVector<f64>, dx: f64) -> Result<SpatialStencil> {
        Ok(kushner_stencil(a, b, dx))
    }
}

/// Directional second differences over a nonnegative decomposition of `a`.
#[derive(Debug, Clone, Copy)]
pub struct BonnansZidani {
    pub max_order: usize,
}

impl Default for BonnansZidani {
    fn default() -> Self {
        Self { max_order: 2 }
    }
}

impl StencilBuilder for BonnansZidani {
    fn name(&self) -> &str {
        "bz"
    }

    fn build(&self, a: &DMatrix<f64>, b: &DVector<f64>, dx: f64) -> Result<SpatialStencil> {
        let dec = bz_decompose(a, self.max_order)?;
        bz_stencil(&dec, b, dx)
    }
}

type StencilFactory = fn() -> Arc<dyn StencilBuilder>;

/// Name-indexed table of stencil constructions.
#[derive(Clone)]
pub struct StencilRegistry {
    entries: BTreeMap<String, StencilFactory>,
}

impl StencilRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// `kushner` and `bz`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("kushner", || Arc::new(Kushner));
        r.register("bz", || Arc::new(BonnansZidani::default()));
        r
    }

    pub fn register(&mut self, name: &str, factory: StencilFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn StencilBuilder>> {
        self.entries.get(name).map(|f| f()).ok_or_else(|| {
            Error::Config(format!(
                "unknown stencil {name:?} (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl Default for StencilRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl fmt::Debug for StencilRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}
