use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::problem::HJBProblem;
use crate::stencil::StencilBuilder;

/// Every control's stencil, discount and source at every node for one time,
/// flattened into CSR rows indexed by `control * nodes + node`.
#[derive(Debug, Clone)]
pub struct LevelOperator {
    pub(crate) time: f64,
    controls: usize,
    nodes: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    weight_sum: Vec<f64>,
    discount: Vec<f64>,
    source: Vec<f64>,
    min_weight: f64,
}

/// Worst left-hand sides of the two step-size conditions at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelMargins {
    /// `max dt (1 - theta)(sum C - c)`
    pub explicit: f64,
    /// `max dt theta (c - sum C)`
    pub implicit: f64,
    pub min_weight: f64,
}

impl LevelOperator {
    pub fn assemble(
        problem: &HJBProblem,
        grid: &SpatialGrid,
        builder: &dyn StencilBuilder,
        t: f64,
    ) -> Result<Self> {
        let controls = problem.controls().len();
        let nodes = grid.len();
        let mut op = LevelOperator {
            time: t,
            controls,
            nodes,
            row_start: Vec::with_capacity(controls * nodes + 1),
            cols: Vec::new(),
            weights: Vec::new(),
            weight_sum: Vec::with_capacity(controls * nodes),
            discount: Vec::with_capacity(controls * nodes),
            source: Vec::with_capacity(controls * nodes),
            min_weight: f64::INFINITY,
        };
        op.row_start.push(0);
        for k in 0..controls {
            for node in 0..nodes {
                let x = grid.coords(node);
                let c = problem.coefficients().eval(k, t, &x)?;
                let st = builder.build(&c.diffusion(), &c.drift, grid.dx())?;
                let label = &problem.controls().labels()[k];
                let mut sum = 0.0;
                for (beta, w) in st.entries() {
                    if w == 0.0 {
                        continue;
                    }
                    op.cols.push(grid.shifted(node, beta));
                    op.weights.push(w);
                    op.min_weight = op.min_weight.min(w);
                    sum += w;
                }
                for (what, v) in [("stencil weight", sum), ("c", c.discount), ("f", c.source)] {
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            what: format!("{what}[{label}]"),
                            location: format!("t={t} node {node} x={x:?}"),
                        });
                    }
                }
                op.row_start.push(op.cols.len());
                op.weight_sum.push(sum);
                op.discount.push(c.discount);
                op.source.push(c.source);
            }
        }
        if op.min_weight == f64::INFINITY {
            op.min_weight = 0.0;
        }
        Ok(op)
    }

    pub fn controls(&self) -> usize {
        self.controls
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn row(&self, k: usize, node: usize) -> usize {
        k * self.nodes + node
    }

    pub fn weight_sum(&self, k: usize, node: usize) -> f64 {
        self.weight_sum[self.row(k, node)]
    }

    pub fn discount(&self, k: usize, node: usize) -> f64 {
        self.discount[self.row(k, node)]
    }

    pub fn source(&self, k: usize, node: usize) -> f64 {
        self.source[self.row(k, node)]
    }

    pub fn max_discount(&self) -> f64 {
        self.discount
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_source(&self) -> f64 {
        self.source.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum_beta C(beta) u(x + beta)` for control `k`.
    pub fn neighbour_sum(&self, k: usize, node: usize, u: &[f64]) -> f64 {
        let r = self.row(k, node);
        (self.row_start[r]..self.row_start[r + 1])
            .map(|e| self.weights[e] * u[self.cols[e]])
            .sum()
    }

    /// `-L_h u - c u - f` at `node` for control `k`.
    pub fn hamiltonian_term(&self, k: usize, node: usize, u: &[f64]) -> f64 {
        let r = self.row(k, node);
        let centre = u[node];
        -(self.neighbour_sum(k, node, u) - self.weight_sum[r] * centre)
            - self.discount[r] * centre
            - self.source[r]
    }

    /// `max_k` of [`Self::hamiltonian_term`] with the lowest maximising index.
    pub fn hamiltonian(&self, node: usize, u: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..self.controls {
            let v = self.hamiltonian_term(k, node, u);
            if v > best.0 {
                best = (v, k);
            }
        }
        best
    }

    pub fn margins(&self, dt: f64, theta: f64) -> LevelMargins {
        let mut m = LevelMargins {
            explicit: f64::NEG_INFINITY,
            implicit: f64::NEG_INFINITY,
            min_weight: self.min_weight,
        };
        for (s, c) in self.weight_sum.iter().zip(&self.discount) {
            m.explicit = m.explicit.max(dt * (1.0 - theta) * (s - c));
            m.implicit = m.implicit.max(dt * theta * (c - s));
        }
        m
    }
}
