//! Message passing least squares on SO(3).
//!
//! CEMP corruption estimates seed both the initial rotations (propagation
//! along their minimum spanning tree) and the initial weights. Each iteration
//! then solves a weighted tangent least squares and re-estimates every edge's
//! corruption twice: from its residual `r`, and from cycle inconsistencies
//! weighted by the residuals of the two other legs (`h`). The next weights are
//! a truncated reweighting of `α_t h + (1 − α_t) r`, where a growing share of
//! the worst edges is floored at [`WEIGHT_FLOOR`].

use rayon::prelude::*;

use crate::cemp::{cemp_run, cycle_inconsistencies, weighted_cycle_average, CempConfig};
use crate::graph::{prim_mst, sample_cycles, CycleTable, EdgeScalarMap, SpanningTree, ViewGraph};
use crate::irls::Loss;
use crate::laa::{laa_step, LinearSolver};
use crate::so3::{geodesic_distance, Rotation};
use crate::{Error, Result};

/// Weight given to truncated edges; keeps the weighted graph connected.
pub const WEIGHT_FLOOR: f64 = 1e-8;
/// Default number of 3-cycles sampled per edge.
pub const CYCLES_PER_EDGE: usize = 50;

/// Samples up to `per_edge` 3-cycles per edge and evaluates their inconsistencies.
pub fn prepare_cycles(g: &ViewGraph, per_edge: usize, seed: u64) -> CycleTable {
    cycle_inconsistencies(g, sample_cycles(g, per_edge, seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MplsConfig {
    pub cemp: CempConfig,
    /// Reweighting `F` applied below the threshold.
    pub weight_fn: Loss,
    /// Extra share of edges truncated per iteration.
    pub ignore_step: f64,
    /// Largest share of edges truncated.
    pub ignore_max: f64,
    /// Stop once the mean node update angle (radians) is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub solver: LinearSolver,
}

impl Default for MplsConfig {
    fn default() -> Self {
        Self {
            cemp: CempConfig::default(),
            weight_fn: Loss::L12,
            ignore_step: 0.05,
            ignore_max: 0.2,
            tolerance: 1e-3,
            max_iterations: 100,
            solver: LinearSolver::Auto,
        }
    }
}

impl MplsConfig {
    /// Share of cycle estimate in the combined statistic, `1 / (t + 1)`.
    pub fn alpha(&self, t: usize) -> f64 {
        1.0 / (t as f64 + 1.0)
    }

    /// Share of edges kept untruncated at iteration `t`.
    pub fn keep_fraction(&self, t: usize) -> f64 {
        (1.0 - self.ignore_step * t as f64).max(1.0 - self.ignore_max)
    }

    fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.ignore_step)
            && (0.0..=1.0).contains(&self.ignore_max)
            && self.tolerance > 0.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid MPLS configuration: {self:?}")))
        }
    }
}

/// Output of every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub rotations: Vec<Rotation>,
    /// Iterations spent before the main loop: CEMP rounds, or warm-start passes.
    pub init_iterations: usize,
    pub main_iterations: usize,
    /// Mean node update angle after each main iteration.
    pub convergence: Vec<f64>,
    pub converged: bool,
    /// Weights after the last iteration.
    pub weights: EdgeScalarMap,
    /// Residuals of the last iteration.
    pub residuals: EdgeScalarMap,
    /// CEMP estimates, when the solver ran CEMP.
    pub corruption: Option<EdgeScalarMap>,
}

/// Root at node 0 with the identity; every child gets `R_c = R_cp R_p`.
pub fn propagate_tree(g: &ViewGraph, tree: &SpanningTree) -> Vec<Rotation> {
    let mut rotations = vec![Rotation::identity(); g.node_count()];
    for &u in &tree.order {
        if let Some((parent, e)) = tree.parent[u] {
            rotations[u] = g.oriented(e, u) * rotations[parent];
        }
    }
    rotations
}

/// Rotations propagated along the minimum spanning tree of `weights`.
pub fn spanning_tree_init(g: &ViewGraph, weights: &EdgeScalarMap) -> Result<Vec<Rotation>> {
    let tree = prim_mst(g, weights)?;
    Ok(propagate_tree(g, &tree))
}

/// Smallest value `τ` whose empirical CDF reaches `keep_fraction`.
///
/// Exactly the top `(1 − keep_fraction)` share of values (rounded down) lies
/// strictly above `τ` when values are distinct; `keep_fraction = 1` returns
/// the maximum.
pub fn quantile_threshold(values: &[f64], keep_fraction: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    // Tolerance absorbs round-off in e.g. (1 − 0.05·4)·m.
    let rank = ((keep_fraction * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    sorted[rank - 1]
}

/// `F(x)` for `x ≤ τ`, [`WEIGHT_FLOOR`] above.
pub fn truncated_weight(x: f64, tau: f64, f: Loss) -> f64 {
    if x <= tau {
        f.weight(x)
    } else {
        WEIGHT_FLOOR
    }
}

/// Cycle re-estimate of each edge's corruption from the residuals of the
/// other two legs; cycle-free edges fall back to their own residual.
pub fn h_estimate(residuals: &EdgeScalarMap, cycles: &CycleTable, beta: f64) -> EdgeScalarMap {
    (0..cycles.edge_count())
        .into_par_iter()
        .map(|e| {
            if cycles.is_cycle_free(e) {
                residuals[e]
            } else {
                weighted_cycle_average(cycles.samples(e), cycles.inconsistencies(e), residuals, beta)
            }
        })
        .collect()
}

fn check_finite(values: &EdgeScalarMap, stage: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(stage))
    }
}

/// Geodesic residuals `d(R_ij, R_i R_jᵀ)`.
pub fn geodesic_residuals(g: &ViewGraph, rotations: &[Rotation]) -> EdgeScalarMap {
    g.edges()
        .par_iter()
        .map(|e| geodesic_distance(&e.rotation, &(rotations[e.i] * rotations[e.j].transpose())))
        .collect()
}

fn check_inputs(g: &ViewGraph, cycles: &CycleTable) -> Result<()> {
    if cycles.edge_count() != g.edge_count() {
        return Err(Error::InvalidInput(format!(
            "cycle table covers {} edges, graph has {}",
            cycles.edge_count(),
            g.edge_count()
        )));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// CEMP followed by spanning tree propagation, without refinement.
pub fn cemp_mst_solve(g: &ViewGraph, cycles: &CycleTable, cfg: &CempConfig) -> Result<SolveResult> {
    check_inputs(g, cycles)?;
    let s = cemp_run(cycles, cfg)?;
    let rotations = spanning_tree_init(g, &s)?;
    Ok(SolveResult {
        residuals: geodesic_residuals(g, &rotations),
        rotations,
        init_iterations: cfg.rounds(),
        main_iterations: 0,
        convergence: Vec::new(),
        converged: true,
        weights: s.clone(),
        corruption: Some(s),
    })
}

/// Full MPLS. `cycles` must carry inconsistencies.
pub fn mpls_solve(g: &ViewGraph, cycles: &CycleTable, cfg: &MplsConfig) -> Result<SolveResult> {
    cfg.validate()?;
    check_inputs(g, cycles)?;
    let s = cemp_run(cycles, &cfg.cemp)?;
    let mut rotations = spanning_tree_init(g, &s)?;

    let tau = quantile_threshold(s.as_slice(), cfg.keep_fraction(0));
    let mut weights: EdgeScalarMap = s.iter().map(|&x| truncated_weight(x, tau, cfg.weight_fn)).collect();
    let beta = cfg.cemp.final_beta();

    let mut convergence = Vec::new();
    let mut residuals = EdgeScalarMap::filled(g.edge_count(), 0.0);
    let mut converged = false;
    for t in 1..=cfg.max_iterations {
        let step = laa_step(g, &rotations, &weights, cfg.solver)?;
        let update = step.mean_update();
        if !update.is_finite() {
            return Err(Error::NonFinite("MPLS update"));
        }
        convergence.push(update);
        rotations = step.rotations;
        residuals = step.residuals;

        let h = h_estimate(&residuals, cycles, beta);
        let alpha = cfg.alpha(t);
        let combined: EdgeScalarMap = h
            .iter()
            .zip(residuals.iter())
            .map(|(h, r)| alpha * h + (1.0 - alpha) * r)
            .collect();
        check_finite(&combined, "MPLS combined estimate")?;
        let tau = quantile_threshold(combined.as_slice(), cfg.keep_fraction(t));
        weights = combined
            .iter()
            .map(|&x| truncated_weight(x, tau, cfg.weight_fn))
            .collect();

        if update < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        rotations,
        init_iterations: cfg.cemp.rounds(),
        main_iterations: convergence.len(),
        convergence,
        converged,
        weights,
        residuals,
        corruption: Some(s),
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{Cycle, EdgeMap};
    use crate::metrics::error_report;
    use crate::so3::sample_haar;
    use crate::synth::{gen_self_consistent, gen_uniform};

    fn solve(inst: &crate::synth::SyntheticInstance, seed: u64) -> SolveResult {
        let cycles = cycle_inconsistencies(&inst.graph, sample_cycles(&inst.graph, 50, seed));
        mpls_solve(&inst.graph, &cycles, &MplsConfig::default()).unwrap()
    }

    #[test]
    fn schedules() {
        let cfg = MplsConfig::default();
        assert_eq!(cfg.alpha(1), 0.5);
        let keep: Vec<f64> = (0..7).map(|t| cfg.keep_fraction(t)).collect();
        for (k, want) in keep.iter().zip([1.0, 0.95, 0.9, 0.85, 0.8, 0.8, 0.8]) {
            assert!((k - want).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_examples() {
        let values: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        assert_eq!(quantile_threshold(&values, 1.0), 1.0);
        let tau = quantile_threshold(&values, MplsConfig::default().keep_fraction(4));
        assert_eq!(tau, 0.8);
        assert_eq!(values.iter().filter(|v| **v > tau).count(), 2);
    }

    #[test]
    fn quantile_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = rng.random_range(1..300);
            let values: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let t = rng.random_range(0..8);
            let keep = MplsConfig::default().keep_fraction(t);
            let tau = quantile_threshold(&values, keep);
            let ignored = ((1.0 - keep) * m as f64 + 1e-9).floor() as usize;
            assert_eq!(values.iter().filter(|v| **v > tau).count(), ignored);
        }
    }

    #[test]
    fn truncated_weight_examples() {
        assert_eq!(truncated_weight(0.0, 0.0, Loss::L12), 1e8);
        assert_eq!(truncated_weight(0.0, 0.7, Loss::L12), 1e8);
        assert_eq!(truncated_weight(1.0, 0.5, Loss::L12), 1e-8);
        assert_eq!(truncated_weight(0.25, 1.0, Loss::L12), 8.0);
    }

    #[test]
    fn h_with_equal_residuals_is_plain_mean() {
        let inst = gen_uniform(12, 0.8, 0.3, 0.0, 2).unwrap();
        let cycles = cycle_inconsistencies(&inst.graph, sample_cycles(&inst.graph, 20, 2));
        let r = EdgeMap::filled(inst.graph.edge_count(), 0.37);
        let h = h_estimate(&r, &cycles, 32.0);
        for e in 0..inst.graph.edge_count() {
            let d = cycles.inconsistencies(e);
            if d.is_empty() {
                assert_eq!(h[e], 0.37);
            } else {
                let mean = d.iter().sum::<f64>() / d.len() as f64;
                assert!((h[e] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn h_picks_out_the_good_cycle() {
        // Edge 0 has three sampled cycles; only the first has clean legs.
        let samples = vec![
            Cycle {
                k: 2,
                leg_ik: 1,
                leg_jk: 4,
            },
            Cycle {
                k: 3,
                leg_ik: 2,
                leg_jk: 5,
            },
            Cycle {
                k: 4,
                leg_ik: 3,
                leg_jk: 6,
            },
        ];
        let d = [0.42, 0.9, 0.1];
        let mut r = EdgeMap::filled(10, 0.5);
        r[1] = 0.0;
        r[4] = 0.0;
        r[5] = 0.8;
        r[6] = 0.6;
        let h = weighted_cycle_average(&samples, &d, &r, 32.0);
        assert!((h - 0.42).abs() < 1e-6);
    }

    #[test]
    fn h_matches_direct_formula() {
        let inst = gen_uniform(15, 0.7, 0.4, 0.05, 3).unwrap();
        let cycles = cycle_inconsistencies(&inst.graph, sample_cycles(&inst.graph, 30, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: EdgeScalarMap = (0..inst.graph.edge_count()).map(|_| rng.random::<f64>()).collect();
        let h = h_estimate(&r, &cycles, 32.0);
        for e in 0..inst.graph.edge_count() {
            if cycles.is_cycle_free(e) {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (c, d) in cycles.samples(e).iter().zip(cycles.inconsistencies(e)) {
                let q = (-32.0 * (r[c.leg_ik] + r[c.leg_jk])).exp();
                num += q * d;
                den += q;
            }
            assert!((h[e] - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_init_on_clean_data_is_exact() {
        let inst = gen_uniform(30, 0.4, 0.0, 0.0, 5).unwrap();
        let rots = spanning_tree_init(&inst.graph, &EdgeMap::filled(inst.graph.edge_count(), 0.0)).unwrap();
        assert_eq!(rots[0], Rotation::identity());
        assert!(error_report(&rots, &inst.ground_truth).unwrap().mean_deg < 1e-8);
    }

    #[test]
    fn tree_init_propagates_a_corrupted_spoke_locally() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth: Vec<_> = (0..5).map(|_| sample_haar(&mut rng)).collect();
        let bad = sample_haar(&mut rng);
        let spokes = (1..5).map(|j| (0, j, if j == 3 { bad } else { truth[0] * truth[j].transpose() }));
        let g = ViewGraph::new(5, spokes).unwrap();
        let s = EdgeMap::from_vec(vec![0.0, 0.0, 0.9, 0.0]);
        let rots = spanning_tree_init(&g, &s).unwrap();
        // Align on the root, which carries no corruption.
        let a = rots[0].transpose() * truth[0];
        for j in [1, 2, 4] {
            assert!(geodesic_distance(&(rots[j] * a), &truth[j]) < 1e-12);
        }
        assert!(geodesic_distance(&(rots[3] * a), &truth[3]) > 1e-3);
    }

    #[test]
    fn cemp_mst_is_exact_on_noiseless_uniform() {
        for seed in 0..5 {
            let inst = gen_uniform(50, 0.5, 0.3, 0.0, seed).unwrap();
            let cycles = cycle_inconsistencies(&inst.graph, sample_cycles(&inst.graph, 50, seed));
            let res = cemp_mst_solve(&inst.graph, &cycles, &CempConfig::default()).unwrap();
            assert_eq!(res.init_iterations, 6);
            assert!(error_report(&res.rotations, &inst.ground_truth).unwrap().mean_deg < 1e-6);
        }
    }

    #[test]
    fn clean_problem_converges_immediately() {
        let inst = gen_uniform(20, 0.5, 0.0, 0.0, 8).unwrap();
        let res = solve(&inst, 8);
        assert!(res.converged);
        assert!(res.main_iterations <= 2);
        assert_eq!(res.init_iterations, 6);
        assert!(error_report(&res.rotations, &inst.ground_truth).unwrap().mean_deg < 1e-8);
    }

    #[test]
    fn weights_stay_in_range() {
        let inst = gen_uniform(60, 0.4, 0.4, 0.2, 9).unwrap();
        let cycles = cycle_inconsistencies(&inst.graph, sample_cycles(&inst.graph, 50, 9));
        for max_iterations in 1..6 {
            let cfg = MplsConfig {
                max_iterations,
                ..MplsConfig::default()
            };
            let res = mpls_solve(&inst.graph, &cycles, &cfg).unwrap();
            assert!(res.weights.iter().all(|w| (1e-8..=1e8).contains(w)));
        }
    }

    #[test]
    fn deterministic() {
        let inst = gen_uniform(40, 0.5, 0.3, 0.1, 10).unwrap();
        assert_eq!(solve(&inst, 10), solve(&inst, 10));
    }

    #[test]
    fn right_gauge_invariance() {
        let inst = gen_uniform(40, 0.5, 0.3, 0.1, 11).unwrap();
        let q = Rotation::from_axis_angle(Vector3::new(0.3, -1.0, 0.5), 2.0);
        let moved_truth: Vec<_> = inst.ground_truth.iter().map(|r| *r * q).collect();
        // R_i Q (R_j Q)ᵀ = R_i R_jᵀ: measurements are unchanged.
        let a = error_report(&solve(&inst, 11).rotations, &inst.ground_truth).unwrap();
        let b = error_report(&solve(&inst, 11).rotations, &moved_truth).unwrap();
        assert!((a.mean_deg - b.mean_deg).abs() < 1e-9);
    }

    #[test]
    fn recovers_self_consistent_corruption_small() {
        let inst = gen_self_consistent(60, 0.5, 0.3, 0.0, 12).unwrap();
        let res = solve(&inst, 12);
        assert!(error_report(&res.rotations, &inst.ground_truth).unwrap().mean_deg < 1e-3);
    }

    #[test]
    fn rejects_disconnected_graph() {
        let g = ViewGraph::new(4, [(0, 1), (2, 3)].map(|(i, j)| (i, j, Rotation::identity()))).unwrap();
        let cycles = cycle_inconsistencies(&g, sample_cycles(&g, 5, 0));
        assert!(matches!(
            mpls_solve(&g, &cycles, &MplsConfig::default()),
            Err(Error::Disconnected)
        ));
    }
}
