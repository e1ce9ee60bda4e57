//! Iteratively reweighted least squares baselines.
//!
//! Both baselines share the tangent-space step of [`crate::laa`]. They start
//! from an unweighted spanning tree, run a warm start with ℓ₁ weights and then
//! switch to their own loss until the mean node update is small.

use std::fmt;
use std::str::FromStr;

use crate::graph::{EdgeMap, EdgeScalarMap, ViewGraph};
use crate::laa::{laa_step, LaaStep, LinearSolver};
use crate::mpls::{spanning_tree_init, SolveResult};
use crate::so3::Rotation;
use crate::{Error, Result};

/// Cap `A` on reweighting functions that blow up at zero.
pub const WEIGHT_CAP: f64 = 1e8;

/// Robust loss `ρ`, represented by its reweighting function `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `ρ(x) = x²/(x² + 25)`, `F(x) = 25/(x² + 25)²`.
    GemanMcClure,
    /// `ρ(x) = √x`, `F(x) = min(x^{-3/2}, A)`.
    L12,
    /// `ρ(x) = x`, `F(x) = min(1/x, A)`.
    L1,
}

impl Loss {
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Loss::GemanMcClure => 25.0 / (x * x + 25.0).powi(2),
            Loss::L12 => x.powf(-1.5).min(WEIGHT_CAP),
            Loss::L1 => x.recip().min(WEIGHT_CAP),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::GemanMcClure => "gm",
            Loss::L12 => "l12",
            Loss::L1 => "l1",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gm" => Ok(Loss::GemanMcClure),
            "l12" => Ok(Loss::L12),
            "l1" => Ok(Loss::L1),
            _ => Err(Error::InvalidInput(format!("unknown loss `{s}`"))),
        }
    }
}

pub fn irls_weight(x: f64, loss: Loss) -> f64 {
    loss.weight(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsConfig {
    pub loss: Loss,
    /// Iterations with ℓ₁ weights before switching to `loss`.
    pub warm_start_iterations: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub solver: LinearSolver,
}

impl IrlsConfig {
    pub fn new(loss: Loss) -> Self {
        Self {
            loss,
            warm_start_iterations: 10,
            tolerance: 1e-3,
            max_iterations: 100,
            solver: LinearSolver::Auto,
        }
    }
}

/// One tangent solve with `weights`, then new weights from its residuals.
pub fn irls_step(
    g: &ViewGraph,
    rotations: &[Rotation],
    weights: &EdgeScalarMap,
    loss: Loss,
    solver: LinearSolver,
) -> Result<(LaaStep, EdgeScalarMap)> {
    let step = laa_step(g, rotations, weights, solver)?;
    let next = step.residuals.iter().map(|&r| loss.weight(r)).collect();
    Ok((step, next))
}

pub fn irls_solve(g: &ViewGraph, cfg: &IrlsConfig) -> Result<SolveResult> {
    if cfg.max_iterations == 0 || cfg.tolerance.is_nan() || cfg.tolerance <= 0.0 {
        return Err(Error::InvalidInput(format!("invalid IRLS configuration: {cfg:?}")));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let m = g.edge_count();
    let mut rotations = spanning_tree_init(g, &EdgeMap::filled(m, 1.0))?;
    let mut weights = EdgeMap::filled(m, 1.0);
    let mut residuals = EdgeMap::filled(m, 0.0);

    for _ in 0..cfg.warm_start_iterations {
        let (step, next) = irls_step(g, &rotations, &weights, Loss::L1, cfg.solver)?;
        rotations = step.rotations;
        residuals = step.residuals;
        weights = next;
    }
    if cfg.warm_start_iterations > 0 {
        weights = residuals.iter().map(|&r| cfg.loss.weight(r)).collect();
    }

    let mut convergence = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let (step, next) = irls_step(g, &rotations, &weights, cfg.loss, cfg.solver)?;
        let update = step.mean_update();
        if !update.is_finite() {
            return Err(Error::NonFinite("IRLS update"));
        }
        convergence.push(update);
        rotations = step.rotations;
        residuals = step.residuals;
        weights = next;
        if update < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        rotations,
        init_iterations: cfg.warm_start_iterations,
        main_iterations: convergence.len(),
        convergence,
        converged,
        weights,
        residuals,
        corruption: None,
    })
}
