//! Cycle-edge message passing.
//!
//! Each edge's corruption level is estimated as a weighted average of the
//! inconsistencies of its sampled 3-cycles. A cycle's weight is the
//! probability-like score `exp(−β (s_ik + s_jk))` built from the current
//! estimates on its two other legs, with β growing every pass.

use rayon::prelude::*;

use crate::graph::{Cycle, CycleTable, EdgeId, EdgeScalarMap, ViewGraph};
use crate::so3::{geodesic_distance, Rotation};
use crate::{Error, Result};

/// Corruption level assigned to edges that lie on no 3-cycle.
pub const CYCLE_FREE_LEVEL: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CempConfig {
    /// `β_0 .. β_T`; one message passing round per entry.
    betas: Vec<f64>,
}

impl CempConfig {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidInput("CEMP needs at least one β".into()));
        }
        if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidInput(format!("β must be positive: {betas:?}")));
        }
        if betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!("β must be strictly increasing: {betas:?}")));
        }
        Ok(Self { betas })
    }

    /// `β_t = 2^t` for `t = 0..=last`.
    pub fn doubling(last: u32) -> Self {
        Self {
            betas: (0..=last).map(|t| 2f64.powi(t as i32)).collect(),
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Index `T` of the final β.
    pub fn last_step(&self) -> usize {
        self.betas.len() - 1
    }

    /// `β_T`, reused by the cycle re-estimation inside MPLS.
    pub fn final_beta(&self) -> f64 {
        *self.betas.last().unwrap()
    }

    /// Number of message passing rounds, `T + 1`.
    pub fn rounds(&self) -> usize {
        self.betas.len()
    }
}

impl Default for CempConfig {
    fn default() -> Self {
        Self::doubling(5)
    }
}

/// `d(R_ij R_jk R_ki, I)` for edge `e = ij` and the sampled third vertex.
pub fn cycle_inconsistency(g: &ViewGraph, e: EdgeId, cycle: &Cycle) -> f64 {
    let edge = g.edge(e);
    let r_ij = edge.rotation;
    let r_jk = g.oriented(cycle.leg_jk, edge.j);
    let r_ki = g.oriented(cycle.leg_ik, cycle.k);
    geodesic_distance(&(r_ij * r_jk * r_ki), &Rotation::identity())
}

/// Fills the inconsistencies of every sampled cycle.
pub fn cycle_inconsistencies(g: &ViewGraph, mut cycles: CycleTable) -> CycleTable {
    let values = (0..g.edge_count())
        .into_par_iter()
        .map(|e| cycles.samples(e).iter().map(|c| cycle_inconsistency(g, e, c)).collect())
        .collect();
    cycles.set_inconsistencies(values);
    cycles
}

/// `Σ_k exp(−β(x_ik + x_jk)) d_k / Σ_k exp(−β(x_ik + x_jk))`.
///
/// The exponent is shifted by its minimum so the normalizer is at least 1.
pub(crate) fn weighted_cycle_average(
    samples: &[Cycle],
    inconsistencies: &[f64],
    leg_values: &EdgeScalarMap,
    beta: f64,
) -> f64 {
    let legs = |c: &Cycle| leg_values[c.leg_ik] + leg_values[c.leg_jk];
    let shift = samples.iter().map(legs).fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (c, d) in samples.iter().zip(inconsistencies) {
        let p = (-beta * (legs(c) - shift)).exp();
        num += p * d;
        den += p;
    }
    num / den
}

/// Runs `T + 1` message passing rounds and returns the final corruption
/// estimates, each in `[0, 1]`. Cycle-free edges are pinned at 1.
pub fn cemp_run(cycles: &CycleTable, cfg: &CempConfig) -> Result<EdgeScalarMap> {
    if !cycles.has_inconsistencies() {
        return Err(Error::InvalidInput("cycle inconsistencies not computed".into()));
    }
    let m = cycles.edge_count();
    let mut s: EdgeScalarMap = (0..m)
        .map(|e| {
            let d = cycles.inconsistencies(e);
            if d.is_empty() {
                CYCLE_FREE_LEVEL
            } else {
                d.iter().sum::<f64>() / d.len() as f64
            }
        })
        .collect();

    for &beta in cfg.betas() {
        s = (0..m)
            .into_par_iter()
            .map(|e| {
                if cycles.is_cycle_free(e) {
                    CYCLE_FREE_LEVEL
                } else {
                    weighted_cycle_average(cycles.samples(e), cycles.inconsistencies(e), &s, beta)
                }
            })
            .collect();
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("CEMP"));
    }
    Ok(s)
}
