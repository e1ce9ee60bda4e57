//! Synthetic rotation synchronization problems.
//!
//! Both models draw an Erdős–Rényi view graph and Haar ground truth. A good
//! edge measures `Proj(R_i* R_j*ᵀ + σW)` with `W` a standard Gaussian 3×3
//! matrix. A bad edge (probability `q`) measures either an independent Haar
//! rotation (uniform model) or the noisy relative rotation of a second,
//! internally consistent set of rotations (self-consistent model).

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::graph::{erdos_renyi, EdgeMap, EdgeScalarMap, ViewGraph};
use crate::rng::{self, streams};
use crate::so3::{geodesic_distance, project_to_so3, sample_haar, Rotation};
use crate::{Error, Result};

/// Graph draws attempted before giving up on connectivity.
const MAX_GRAPH_DRAWS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorruptionModel {
    Uniform,
    SelfConsistent,
}

impl fmt::Display for CorruptionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::SelfConsistent => "self-consistent",
        })
    }
}

impl FromStr for CorruptionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "self-consistent" => Ok(Self::SelfConsistent),
            _ => Err(Error::InvalidInput(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub graph: ViewGraph,
    pub ground_truth: Vec<Rotation>,
    pub labels: EdgeMap<EdgeLabel>,
    /// `s*_ij = d(R_ij, R_i* R_j*ᵀ)`.
    pub true_corruption: EdgeScalarMap,
    /// Disconnected graph draws discarded before this one.
    pub graph_resamples: u64,
}

impl SyntheticInstance {
    pub fn bad_fraction(&self) -> f64 {
        let bad = self.labels.iter().filter(|l| **l == EdgeLabel::Bad).count();
        bad as f64 / self.labels.len().max(1) as f64
    }
}

/// `Proj(R* + σW)`. The Gaussian matrix is always drawn so that the noise
/// stream advances identically for every σ; `σ = 0` returns `R*` unchanged.
pub fn perturb<R: Rng + ?Sized>(rstar: &Rotation, sigma: f64, rng: &mut R) -> Result<Rotation> {
    let draw = |rng: &mut R| Matrix3::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
    let w = draw(rng);
    if sigma == 0.0 {
        return Ok(*rstar);
    }
    match project_to_so3(&(rstar.matrix() + w * sigma)) {
        Err(Error::DegenerateProjection(_)) => project_to_so3(&(rstar.matrix() + draw(rng) * sigma)),
        other => other,
    }
}

pub fn generate(model: CorruptionModel, params: ModelParams, seed: u64) -> Result<SyntheticInstance> {
    let ModelParams { n, p, q, sigma } = params;
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 nodes, got {n}")));
    }
    for (name, v) in [("p", p), ("q", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} = {v} is not a probability")));
        }
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise level σ = {sigma} must be nonnegative"
        )));
    }

    let (topology, graph_resamples) = connected_graph(n, p, seed)?;

    let mut truth_rng = rng::stream(seed, streams::GROUND_TRUTH);
    let ground_truth: Vec<Rotation> = (0..n).map(|_| sample_haar(&mut truth_rng)).collect();
    let mut corruption_rng = rng::stream(seed, streams::CORRUPTION);
    let second_class: Vec<Rotation> = match model {
        CorruptionModel::SelfConsistent => (0..n).map(|_| sample_haar(&mut corruption_rng)).collect(),
        CorruptionModel::Uniform => Vec::new(),
    };
    let mut label_rng = rng::stream(seed, streams::LABELS);
    let mut noise_rng = rng::stream(seed, streams::NOISE);

    let mut measurements = Vec::with_capacity(topology.len());
    let mut labels = Vec::with_capacity(topology.len());
    let mut corruption = Vec::with_capacity(topology.len());
    for &(i, j) in &topology {
        let bad = label_rng.random::<f64>() < q;
        let relative = ground_truth[i] * ground_truth[j].transpose();
        let measured = match model {
            CorruptionModel::Uniform => {
                let replacement = sample_haar(&mut corruption_rng);
                let noisy = perturb(&relative, sigma, &mut noise_rng)?;
                if bad {
                    replacement
                } else {
                    noisy
                }
            }
            CorruptionModel::SelfConsistent => {
                let base = if bad {
                    second_class[i] * second_class[j].transpose()
                } else {
                    relative
                };
                perturb(&base, sigma, &mut noise_rng)?
            }
        };
        measurements.push((i, j, measured));
        labels.push(if bad { EdgeLabel::Bad } else { EdgeLabel::Good });
        corruption.push(geodesic_distance(&measured, &relative));
    }

    Ok(SyntheticInstance {
        graph: ViewGraph::new(n, measurements)?,
        ground_truth,
        labels: EdgeMap::from_vec(labels),
        true_corruption: EdgeMap::from_vec(corruption),
        graph_resamples,
    })
}

pub fn gen_uniform(n: usize, p: f64, q: f64, sigma: f64, seed: u64) -> Result<SyntheticInstance> {
    generate(CorruptionModel::Uniform, ModelParams { n, p, q, sigma }, seed)
}

pub fn gen_self_consistent(n: usize, p: f64, q: f64, sigma: f64, seed: u64) -> Result<SyntheticInstance> {
    generate(CorruptionModel::SelfConsistent, ModelParams { n, p, q, sigma }, seed)
}

/// Redraws `G(n, p)` from `seed + 1, seed + 2, ...` until it is connected.
fn connected_graph(n: usize, p: f64, seed: u64) -> Result<(Vec<(usize, usize)>, u64)> {
    for attempt in 0..MAX_GRAPH_DRAWS {
        let mut graph_rng = rng::stream(seed.wrapping_add(attempt), streams::GRAPH);
        let pairs = erdos_renyi(n, p, &mut graph_rng);
        let g = ViewGraph::new(n, pairs.iter().map(|&(i, j)| (i, j, Rotation::identity())))?;
        if g.is_connected() {
            return Ok((pairs, attempt));
        }
    }
    Err(Error::Disconnected)
}
