//! Exact discrete optimal transport.
//!
//! A transportation simplex on the bipartite supply/demand graph. The basis is
//! kept as a spanning tree of `n + m - 1` cells (degenerate zero-flow cells
//! included). The entering cell is the most negative reduced cost; after a
//! long run of degenerate pivots the solver switches to Bland's rule, which
//! cannot cycle.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::cost::CostExponent;
use crate::data::{DiscreteMeasure, FeatureTable};
use crate::error::{Error, Result};

/// Default cap on `n * m` for [`solve_discrete_ot`].
pub const DEFAULT_MAX_CELLS: usize = 250_000;

/// Tolerance on the difference between total source and sink mass.
pub const MASS_TOL: f64 = 1e-9;

/// An optimal coupling together with its cost and dual potentials.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    coupling: Array2<f64>,
    cost: f64,
    row_potentials: Vec<f64>,
    col_potentials: Vec<f64>,
}

impl TransportPlan {
    pub fn coupling(&self) -> &Array2<f64> {
        &self.coupling
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Dual potentials `(u, v)` with `u_i + v_j <= C_ij`, tight on the support.
    pub fn potentials(&self) -> (&[f64], &[f64]) {
        (&self.row_potentials, &self.col_potentials)
    }
}

/// Pairwise ground costs between table rows and measure points.
pub fn cost_matrix(sources: &FeatureTable, sinks: &Array2<f64>, p: CostExponent) -> Result<Array2<f64>> {
    if sources.dim() != sinks.ncols() {
        return Err(Error::DimensionMismatch {
            expected: sources.dim(),
            actual: sinks.ncols(),
        });
    }
    let sinks = sinks.as_standard_layout();
    let flat = sinks.as_slice().expect("standard layout");
    let d = sources.dim();
    let m = sinks.nrows();
    let mut out = Array2::zeros((sources.n_samples(), m));
    for (i, x) in sources.rows().enumerate() {
        for (j, y) in flat.chunks_exact(d).enumerate() {
            out[[i, j]] = p.cost(x, y);
        }
    }
    Ok(out)
}

pub fn solve_discrete_ot(costs: &Array2<f64>, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    solve_discrete_ot_capped(costs, a, b, DEFAULT_MAX_CELLS)
}

pub fn solve_discrete_ot_capped(
    costs: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    max_cells: usize,
) -> Result<TransportPlan> {
    let (n, m) = costs.dim();
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.len(),
        });
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: b.len(),
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("empty transport problem"));
    }
    let cells = n.saturating_mul(m);
    if cells > max_cells {
        return Err(Error::TooLarge { cells, cap: max_cells });
    }
    if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::invalid(format!("cost {c} is not finite and non-negative")));
    }
    for (name, w) in [("source", a), ("sink", b)] {
        if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("{name} weight {v} is not finite and non-negative")));
        }
    }
    let source_mass: f64 = a.iter().sum();
    let sink_mass: f64 = b.iter().sum();
    if (source_mass - sink_mass).abs() > MASS_TOL {
        return Err(Error::Infeasible {
            source_mass,
            sink_mass,
        });
    }
    let costs = costs.as_standard_layout();
    let mut simplex = Simplex::new(costs.as_slice().expect("standard layout"), n, m, a, b);
    simplex.run()?;
    Ok(simplex.into_plan())
}

/// `W_p^p` between the uniform empirical measures on the rows of `x` and `y`.
pub fn empirical_wasserstein(x: &FeatureTable, y: &FeatureTable, p: CostExponent) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let costs = cost_matrix(x, y.features(), p)?;
    let a = vec![1.0 / x.n_samples() as f64; x.n_samples()];
    let b = vec![1.0 / y.n_samples() as f64; y.n_samples()];
    Ok(solve_discrete_ot(&costs, &a, &b)?.cost())
}

/// Optimal plan between weighted table rows and a discrete measure.
pub fn transport_to_measure(
    x: &FeatureTable,
    x_weights: &[f64],
    target: &DiscreteMeasure,
    p: CostExponent,
) -> Result<TransportPlan> {
    let costs = cost_matrix(x, target.points(), p)?;
    solve_discrete_ot(&costs, x_weights, target.weights())
}

struct Simplex<'a> {
    costs: &'a [f64],
    n: usize,
    m: usize,
    flow: Vec<f64>,
    basic: Vec<bool>,
    basis: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
    tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(costs: &'a [f64], n: usize, m: usize, a: &[f64], b: &[f64]) -> Self {
        let scale = costs.iter().fold(0.0f64, |acc, c| acc.max(*c));
        let mut s = Simplex {
            costs,
            n,
            m,
            flow: vec![0.0; n * m],
            basic: vec![false; n * m],
            basis: Vec::with_capacity(n + m - 1),
            u: vec![0.0; n],
            v: vec![0.0; m],
            tol: 1e-11 * (1.0 + scale),
        };
        s.initial_basis(a, b);
        s
    }

    /// Least-cost starting basis: allocate to the cheapest open cell and close
    /// exactly one line per allocation, which leaves a spanning tree.
    fn initial_basis(&mut self, a: &[f64], b: &[f64]) {
        let (n, m) = (self.n, self.m);
        let mut supply = a.to_vec();
        let mut demand = b.to_vec();
        let mut row_open = vec![true; n];
        let mut col_open = vec![true; m];
        let (mut rows_left, mut cols_left) = (n, m);
        let mut order: Vec<usize> = (0..n * m).collect();
        order.sort_by(|&x, &y| self.costs[x].total_cmp(&self.costs[y]).then(x.cmp(&y)));
        for cell in order {
            if rows_left == 0 || cols_left == 0 {
                break;
            }
            let (i, j) = (cell / m, cell % m);
            if !(row_open[i] && col_open[j]) {
                continue;
            }
            let x = supply[i].min(demand[j]);
            self.flow[cell] = x;
            self.basic[cell] = true;
            self.basis.push(cell);
            supply[i] -= x;
            demand[j] -= x;
            let close_row = if rows_left == 1 {
                false
            } else if cols_left == 1 {
                true
            } else {
                supply[i] <= demand[j]
            };
            if rows_left == 1 && cols_left == 1 {
                row_open[i] = false;
                col_open[j] = false;
                rows_left = 0;
                cols_left = 0;
            } else if close_row {
                row_open[i] = false;
                rows_left -= 1;
            } else {
                col_open[j] = false;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(self.basis.len(), n + m - 1);
    }

    /// Adjacency of the basis tree; row nodes are `0..n`, column nodes `n..n+m`.
    fn tree(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for &cell in &self.basis {
            let (i, j) = (cell / self.m, cell % self.m);
            adj[i].push((self.n + j, cell));
            adj[self.n + j].push((i, cell));
        }
        adj
    }

    fn update_potentials(&mut self, adj: &[Vec<(usize, usize)>]) {
        let total = self.n + self.m;
        let mut pot = vec![f64::NAN; total];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(next, cell) in &adj[node] {
                if pot[next].is_nan() {
                    // u_i + v_j = c_ij on basic cells
                    pot[next] = self.costs[cell] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        self.u.copy_from_slice(&pot[..self.n]);
        self.v.copy_from_slice(&pot[self.n..]);
    }

    fn reduced_cost(&self, cell: usize) -> f64 {
        let (i, j) = (cell / self.m, cell % self.m);
        self.costs[cell] - self.u[i] - self.v[j]
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for cell in 0..self.n * self.m {
            if self.basic[cell] {
                continue;
            }
            let r = self.reduced_cost(cell);
            if r < -self.tol {
                if bland {
                    return Some(cell);
                }
                if best.is_none_or(|(_, b)| r < b) {
                    best = Some((cell, r));
                }
            }
        }
        best.map(|(c, _)| c)
    }

    /// Basic cells on the tree path from column node of `cell` back to its row node.
    fn cycle(&self, adj: &[Vec<(usize, usize)>], cell: usize) -> Vec<usize> {
        let (i, j) = (cell / self.m, cell % self.m);
        let total = self.n + self.m;
        let start = i;
        let goal = self.n + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == goal {
                break;
            }
            for &(next, c) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, c));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = goal;
        while node != start {
            let (prev, c) = parent[node].expect("basis is a spanning tree");
            path.push(c);
            node = prev;
        }
        path
    }

    fn run(&mut self) -> Result<()> {
        let cells = self.n * self.m;
        let max_pivots = 50 * cells + 1000;
        let degenerate_limit = self.n + self.m;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        for _ in 0..max_pivots {
            let adj = self.tree();
            self.update_potentials(&adj);
            let Some(enter) = self.entering(bland) else {
                return Ok(());
            };
            // path cells alternate -, +, -, ... starting next to the entering cell
            let path = self.cycle(&adj, enter);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &c in path.iter().step_by(2) {
                let f = self.flow[c];
                if f < theta || (f == theta && c < leave) {
                    theta = f;
                    leave = c;
                }
            }
            let theta = theta.max(0.0);
            for (k, &c) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[c] = (self.flow[c] - theta).max(0.0);
                } else {
                    self.flow[c] += theta;
                }
            }
            self.flow[leave] = 0.0;
            self.basic[leave] = false;
            self.flow[enter] = theta;
            self.basic[enter] = true;
            let pos = self.basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
            self.basis[pos] = enter;

            if theta <= self.tol * 1e-3 {
                degenerate_run += 1;
                if degenerate_run > degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
        }
        Err(Error::NotConverged(format!(
            "transportation simplex exceeded {max_pivots} pivots"
        )))
    }

    fn into_plan(self) -> TransportPlan {
        let coupling = Array2::from_shape_vec((self.n, self.m), self.flow).expect("shape");
        let cost = coupling
            .iter()
            .zip(self.costs)
            .map(|(f, c)| f * c)
            .sum();
        TransportPlan {
            coupling,
            cost,
            row_potentials: self.u,
            col_potentials: self.v,
        }
    }
}
