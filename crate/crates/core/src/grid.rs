//! Uniform periodic grids, grid functions and discrete norms.
//!
//! Nodes sit at `x_j = j * dx` for `j = 0..nx` in every dimension, and all
//! index arithmetic wraps modulo `nx`.

use std::io::Write;

use crate::error::{Error, Result};

/// Periodic lattice `dx * {0..nx}^dim` on the torus `[0, L)^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    nx: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, nx: usize, period: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "grid dimension must be positive".into(),
            ));
        }
        if nx < 3 {
            return Err(Error::InvalidInput(format!(
                "need at least 3 points per dimension, got {nx}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {period}"
            )));
        }
        Ok(Self {
            dim,
            nx,
            dx: period / nx as f64,
        })
    }

    /// Builds the grid for a per-dimension period vector. All periods must
    /// agree since the spacing is uniform across dimensions.
    pub fn for_periods(periods: &[f64], nx: usize) -> Result<Self> {
        let first = *periods
            .first()
            .ok_or_else(|| Error::InvalidInput("empty period vector".into()))?;
        if periods
            .iter()
            .any(|&p| (p - first).abs() > 1e-12 * first.abs())
        {
            return Err(Error::InvalidInput(format!(
                "anisotropic periods {periods:?} are not supported (uniform dx required)"
            )));
        }
        Self::new(periods.len(), nx, first)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn period(&self) -> f64 {
        self.dx * self.nx as f64
    }

    /// Total number of nodes, `nx^dim`.
    pub fn len(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            idx.push(flat % self.nx);
            flat /= self.nx;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.nx + i)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| i as f64 * self.dx)
            .collect()
    }

    /// Flat index of the node `flat + offset` with periodic wrapping.
    pub fn shifted(&self, flat: usize, offset: &[i32]) -> usize {
        let nx = self.nx as i64;
        let mut rest = flat;
        let mut stride = 1usize;
        let mut out = 0usize;
        for &b in offset.iter().take(self.dim) {
            let i = (rest % self.nx) as i64;
            rest /= self.nx;
            let j = (i + b as i64).rem_euclid(nx) as usize;
            out += j * stride;
            stride *= self.nx;
        }
        out
    }

    /// Node-coincident coarsening factor from `self` down to `coarse`.
    pub fn coarsening_factor(&self, coarse: &SpatialGrid) -> Result<usize> {
        if self.dim != coarse.dim
            || (self.period() - coarse.period()).abs() > 1e-12 * self.period()
            || !self.nx.is_multiple_of(coarse.nx)
        {
            return Err(Error::InvalidInput(format!(
                "grid with nx={} does not refine grid with nx={}",
                self.nx, coarse.nx
            )));
        }
        Ok(self.nx / coarse.nx)
    }
}

/// Componentwise `(i + beta) mod nx`.
pub fn wrap_index(i: &[i64], beta: &[i64], nx: usize) -> Vec<usize> {
    i.iter()
        .zip(beta)
        .map(|(&a, &b)| (a + b).rem_euclid(nx as i64) as usize)
        .collect()
}

/// Uniform space-time grid `dt * {0..nt} x dx * Z^N` restricted to the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    pub space: SpatialGrid,
    dt: f64,
    nt: usize,
}

impl SpaceTimeGrid {
    pub fn new(space: SpatialGrid, horizon: f64, nt: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if nt == 0 {
            return Err(Error::InvalidInput("need at least one time step".into()));
        }
        Ok(Self {
            space,
            dt: horizon / nt as f64,
            nt,
        })
    }

    /// Picks the smallest step count whose step does not exceed `dt_max`.
    pub fn with_max_step(space: SpatialGrid, horizon: f64, dt_max: f64) -> Result<Self> {
        if !(dt_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time step must be positive, got {dt_max}"
            )));
        }
        let nt = ((horizon / dt_max) - 1e-9).ceil().max(1.0) as usize;
        Self::new(space, horizon, nt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.nt as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }
}

/// One time slice of a grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: SpatialGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: SpatialGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest forward difference quotient over all grid edges, wrapping at the seam.
    pub fn lipschitz_seminorm(&self) -> f64 {
        let mut offset = vec![0i32; self.grid.dim()];
        let mut best = 0.0f64;
        for d in 0..self.grid.dim() {
            offset.iter_mut().for_each(|o| *o = 0);
            offset[d] = 1;
            for i in 0..self.values.len() {
                let j = self.grid.shifted(i, &offset);
                best = best.max((self.values[j] - self.values[i]).abs());
            }
        }
        best / self.grid.dx()
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Applies `op` nodewise to `self` and `other`.
    pub fn zip_with(
        &self,
        other: &GridFunction,
        op: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput(
                "grid functions live on different grids".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| op(v)).collect(),
        }
    }

    /// Restriction to a coarser, node-coincident grid.
    pub fn restrict_to(&self, coarse: &SpatialGrid) -> Result<GridFunction> {
        let factor = self.grid.coarsening_factor(coarse)?;
        let values = (0..coarse.len())
            .map(|i| {
                let idx: Vec<usize> = coarse
                    .multi_index(i)
                    .into_iter()
                    .map(|c| c * factor)
                    .collect();
                self.values[self.grid.flat_index(&idx)]
            })
            .collect();
        Ok(GridFunction {
            grid: *coarse,
            values,
        })
    }

    /// Fails on the first NaN or infinite entry, naming its coordinates.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                what: what.to_string(),
                location: format!("node {i} x={:?}", self.grid.coords(i)),
            }),
        }
    }

    /// CSV snapshot with columns `x_1..x_N,value`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let header: Vec<String> = (1..=self.grid.dim()).map(|d| format!("x_{d}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let x: Vec<String> = self.grid.coords(i).iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{}", x.join(","), v)?;
        }
        Ok(())
    }
}
