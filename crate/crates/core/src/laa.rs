//! Lie-algebraic averaging.
//!
//! One step linearizes the weighted rotation least squares around the current
//! estimates: every edge contributes a tangent vector `ΔΩ_ij` and the node
//! updates `ΔΩ_i` minimize `Σ w_ij ‖ΔΩ_i − ΔΩ_j − ΔΩ_ij‖²`. That is a weighted
//! graph Laplacian system with three right-hand sides, anchored at node 0.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::graph::{EdgeMap, EdgeScalarMap, ViewGraph};
use crate::so3::{exp_map, log_map, Rotation, TangentVector};
use crate::{Error, Result};

/// Node whose update is pinned to zero.
pub const ANCHOR: usize = 0;
/// Largest reduced system solved with a dense factorization.
pub const DENSE_LIMIT: usize = 2000;
/// Relative residual at which conjugate gradient stops.
pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Dense Cholesky up to [`DENSE_LIMIT`] unknowns, conjugate gradient beyond.
    #[default]
    Auto,
    DenseCholesky,
    /// Jacobi-preconditioned conjugate gradient on the sparse Laplacian.
    ConjugateGradient,
}

/// Node and edge tangent vectors of one averaging step.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentAssignment {
    pub nodes: Vec<TangentVector>,
    pub edges: EdgeMap<TangentVector>,
}

/// `log(R_iᵀ R_ij R_j)`.
pub fn relative_tangent(r_i: &Rotation, r_j: &Rotation, r_ij: &Rotation) -> TangentVector {
    log_map(&(r_i.transpose() * *r_ij * *r_j))
}

pub fn relative_tangents(g: &ViewGraph, rotations: &[Rotation]) -> EdgeMap<TangentVector> {
    g.edges()
        .par_iter()
        .map(|e| relative_tangent(&rotations[e.i], &rotations[e.j], &e.rotation))
        .collect()
}

/// `R_prev exp(ΔΩ)`.
pub fn apply_update(r_prev: &Rotation, update: TangentVector) -> Rotation {
    *r_prev * exp_map(update)
}

/// Weighted tangent least squares with the default solver.
pub fn weighted_tangent_ls(
    g: &ViewGraph,
    weights: &EdgeScalarMap,
    edge_tangents: &EdgeMap<TangentVector>,
) -> Result<Vec<TangentVector>> {
    weighted_tangent_ls_with(g, weights, edge_tangents, LinearSolver::Auto)
}

pub fn weighted_tangent_ls_with(
    g: &ViewGraph,
    weights: &EdgeScalarMap,
    edge_tangents: &EdgeMap<TangentVector>,
    solver: LinearSolver,
) -> Result<Vec<TangentVector>> {
    let n = g.node_count();
    let m = g.edge_count();
    if weights.len() != m || edge_tangents.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} weights and {} tangents for {m} edges",
            weights.len(),
            edge_tangents.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidInput(format!("weight {w} is not positive and finite")));
    }
    if edge_tangents.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("edge tangents"));
    }
    if n <= 1 {
        return Ok(vec![TangentVector::zeros(); n]);
    }
    if !g.is_connected() {
        return Err(Error::IllPosedSolve("graph is disconnected".into()));
    }

    let dense = match solver {
        LinearSolver::Auto => n - 1 <= DENSE_LIMIT,
        LinearSolver::DenseCholesky => true,
        LinearSolver::ConjugateGradient => false,
    };
    let rhs = right_hand_side(g, weights, edge_tangents);
    let solution = if dense {
        solve_dense(g, weights, &rhs)?
    } else {
        solve_cg(g, weights, &rhs)?
    };

    let mut nodes = vec![TangentVector::zeros(); n];
    for (u, x) in nodes.iter_mut().enumerate().skip(1) {
        *x = TangentVector::new(solution[(u - 1, 0)], solution[(u - 1, 1)], solution[(u - 1, 2)]);
        if !x.is_finite() {
            return Err(Error::IllPosedSolve("solution is not finite".into()));
        }
    }
    Ok(nodes)
}

/// Reduced index of a node, `None` for the anchor.
fn reduced(u: usize) -> Option<usize> {
    (u != ANCHOR).then(|| if u > ANCHOR { u - 1 } else { u })
}

fn right_hand_side(g: &ViewGraph, weights: &EdgeScalarMap, tangents: &EdgeMap<TangentVector>) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(g.node_count() - 1, 3);
    for (e, edge) in g.edges().iter().enumerate() {
        let v = tangents[e].0 * weights[e];
        for c in 0..3 {
            if let Some(a) = reduced(edge.i) {
                b[(a, c)] += v[c];
            }
            if let Some(a) = reduced(edge.j) {
                b[(a, c)] -= v[c];
            }
        }
    }
    b
}

fn solve_dense(g: &ViewGraph, weights: &EdgeScalarMap, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let size = g.node_count() - 1;
    let mut lap = DMatrix::<f64>::zeros(size, size);
    for (e, edge) in g.edges().iter().enumerate() {
        let w = weights[e];
        let (a, b) = (reduced(edge.i), reduced(edge.j));
        if let Some(a) = a {
            lap[(a, a)] += w;
        }
        if let Some(b) = b {
            lap[(b, b)] += w;
        }
        if let (Some(a), Some(b)) = (a, b) {
            lap[(a, b)] -= w;
            lap[(b, a)] -= w;
        }
    }
    let chol =
        Cholesky::new(lap.clone()).ok_or_else(|| Error::IllPosedSolve("Laplacian is not positive definite".into()))?;
    let mut x = chol.solve(rhs);
    // One round of iterative refinement; weights span up to 16 decades.
    let r = rhs - &lap * &x;
    x += chol.solve(&r);
    Ok(x)
}

/// Compressed rows of the reduced Laplacian.
struct SparseLaplacian {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseLaplacian {
    fn new(g: &ViewGraph, weights: &EdgeScalarMap) -> Self {
        let size = g.node_count() - 1;
        let mut row_start = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        let mut diag = vec![0.0; size];
        for u in 0..g.node_count() {
            let Some(a) = reduced(u) else { continue };
            for &(v, e) in g.neighbors(u) {
                diag[a] += weights[e];
                if let Some(b) = reduced(v) {
                    cols.push(b);
                    vals.push(-weights[e]);
                }
            }
            row_start.push(cols.len());
        }
        Self {
            row_start,
            cols,
            vals,
            diag,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(a, y)| {
            let mut acc = self.diag[a] * x[a];
            for k in self.row_start[a]..self.row_start[a + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *y = acc;
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_cg(g: &ViewGraph, weights: &EdgeScalarMap, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lap = SparseLaplacian::new(g, weights);
    let size = lap.diag.len();
    let max_iter = (20 * size).max(1000);
    let mut out = DMatrix::zeros(size, 3);

    for c in 0..3 {
        let b: Vec<f64> = rhs.column(c).iter().copied().collect();
        let b_norm = dot(&b, &b).sqrt();
        if b_norm == 0.0 {
            continue;
        }
        let mut x = vec![0.0; size];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&lap.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; size];
        let mut rz = dot(&r, &z);
        let mut converged = false;
        for _ in 0..max_iter {
            lap.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..size {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if dot(&r, &r).sqrt() <= CG_TOLERANCE * b_norm {
                converged = true;
                break;
            }
            for k in 0..size {
                z[k] = r[k] / lap.diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..size {
                p[k] = z[k] + beta * p[k];
            }
        }
        if !converged {
            return Err(Error::IllPosedSolve(format!(
                "conjugate gradient did not reach {CG_TOLERANCE:e} in {max_iter} iterations"
            )));
        }
        out.set_column(c, &nalgebra::DVector::from_vec(x));
    }
    Ok(out)
}

/// `‖ΔΩ_i − ΔΩ_j − ΔΩ_ij‖_F / (√2 π)`, clipped to the metric diameter 1.
pub fn residuals(
    g: &ViewGraph,
    node_updates: &[TangentVector],
    edge_tangents: &EdgeMap<TangentVector>,
) -> EdgeScalarMap {
    // ‖[v]_×‖_F = √2 ‖v‖, so the normalization reduces to ‖v‖ / π.
    g.edges()
        .par_iter()
        .enumerate()
        .map(|(e, edge)| {
            let v = node_updates[edge.i] - node_updates[edge.j] - edge_tangents[e];
            (v.norm() / PI).min(1.0)
        })
        .collect()
}

/// Output of [`laa_step`].
#[derive(Debug, Clone)]
pub struct LaaStep {
    pub tangents: TangentAssignment,
    pub rotations: Vec<Rotation>,
    pub residuals: EdgeScalarMap,
}

impl LaaStep {
    /// `Σ_i ‖ΔΩ_i‖_F / (√2 n)`, the mean node update angle in radians.
    pub fn mean_update(&self) -> f64 {
        let n = self.tangents.nodes.len().max(1) as f64;
        self.tangents.nodes.iter().map(|v| v.norm()).sum::<f64>() / n
    }
}

/// Linearize at `rotations`, solve, update and compute residuals.
pub fn laa_step(
    g: &ViewGraph,
    rotations: &[Rotation],
    weights: &EdgeScalarMap,
    solver: LinearSolver,
) -> Result<LaaStep> {
    let edges = relative_tangents(g, rotations);
    let nodes = weighted_tangent_ls_with(g, weights, &edges, solver)?;
    let updated: Vec<Rotation> = rotations.iter().zip(&nodes).map(|(r, v)| apply_update(r, *v)).collect();
    let residuals = residuals(g, &nodes, &edges);
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("residuals"));
    }
    Ok(LaaStep {
        tangents: TangentAssignment { nodes, edges },
        rotations: updated,
        residuals,
    })
}
