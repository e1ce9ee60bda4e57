//! View graph, per-edge maps, 3-cycle sampling and minimum spanning trees.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::ops::{Index, IndexMut};

use rand::Rng;
use rayon::prelude::*;

use crate::rng;
use crate::so3::Rotation;
use crate::{Error, Result};

/// Index of an edge in [`ViewGraph::edges`].
pub type EdgeId = usize;

/// A value per edge, indexed by [`EdgeId`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap<T>(Vec<T>);

/// Corruption estimates, residuals, cycle estimates and weights.
pub type EdgeScalarMap = EdgeMap<f64>;

impl<T> EdgeMap<T> {
    pub fn from_vec(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn filled(len: usize, value: T) -> Self
    where
        T: Clone,
    {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<T> Index<EdgeId> for EdgeMap<T> {
    type Output = T;
    fn index(&self, e: EdgeId) -> &T {
        &self.0[e]
    }
}

impl<T> IndexMut<EdgeId> for EdgeMap<T> {
    fn index_mut(&mut self, e: EdgeId) -> &mut T {
        &mut self.0[e]
    }
}

impl<T> FromIterator<T> for EdgeMap<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<T: Send> FromParallelIterator<T> for EdgeMap<T> {
    fn from_par_iter<I: IntoParallelIterator<Item = T>>(iter: I) -> Self {
        Self(iter.into_par_iter().collect())
    }
}

/// An undirected measured edge, stored with `i < j`.
///
/// `rotation` measures `R_i R_jᵀ`; the reverse direction is its transpose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub rotation: Rotation,
}

/// Nodes `0..n` plus measured edges.
///
/// Edges are kept sorted by `(i, j)`, so edge ids order edges lexicographically.
#[derive(Debug, Clone)]
pub struct ViewGraph {
    n: usize,
    edges: Vec<Edge>,
    /// Per node, `(neighbor, edge)` sorted by neighbor.
    adjacency: Vec<Vec<(usize, EdgeId)>>,
    lookup: HashMap<(usize, usize), EdgeId>,
}

impl ViewGraph {
    /// Builds a graph from `(i, j, R_ij)` triples with `i < j`.
    pub fn new(n: usize, measurements: impl IntoIterator<Item = (usize, usize, Rotation)>) -> Result<Self> {
        let mut edges: Vec<Edge> = measurements
            .into_iter()
            .map(|(i, j, rotation)| Edge { i, j, rotation })
            .collect();
        for e in &edges {
            if e.i >= e.j {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) must satisfy i < j",
                    e.i, e.j
                )));
            }
            if e.j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for n = {n}",
                    e.i, e.j
                )));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = edges.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", w[0].i, w[0].j)));
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut lookup = HashMap::with_capacity(edges.len());
        for (id, e) in edges.iter().enumerate() {
            adjacency[e.i].push((e.j, id));
            adjacency[e.j].push((e.i, id));
            lookup.insert((e.i, e.j), id);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            adjacency,
            lookup,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, EdgeId)] {
        &self.adjacency[node]
    }

    /// Edge id joining `a` and `b`, in either order.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<EdgeId> {
        self.lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Measurement of `R_from R_toᵀ` on edge `e`.
    pub fn oriented(&self, e: EdgeId, from: usize) -> Rotation {
        let edge = &self.edges[e];
        if edge.i == from {
            edge.rotation
        } else {
            debug_assert_eq!(edge.j, from);
            edge.rotation.transpose()
        }
    }

    /// Replaces every measurement, keeping the topology.
    pub fn with_measurements(&self, rotations: impl IntoIterator<Item = Rotation>) -> Self {
        let mut g = self.clone();
        for (edge, r) in g.edges.iter_mut().zip(rotations) {
            edge.rotation = r;
        }
        g
    }

    /// Breadth-first reachability of every node from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// All third vertices closing a triangle with edge `e`.
    pub fn common_neighbors(&self, e: EdgeId) -> Vec<Cycle> {
        let Edge { i, j, .. } = self.edges[e];
        let (a, b) = (&self.adjacency[i], &self.adjacency[j]);
        let (mut x, mut y) = (0, 0);
        let mut out = Vec::new();
        while x < a.len() && y < b.len() {
            match a[x].0.cmp(&b[y].0) {
                Ordering::Less => x += 1,
                Ordering::Greater => y += 1,
                Ordering::Equal => {
                    out.push(Cycle {
                        k: a[x].0,
                        leg_ik: a[x].1,
                        leg_jk: b[y].1,
                    });
                    x += 1;
                    y += 1;
                }
            }
        }
        out
    }
}

/// Unordered pairs of `G(n, p)`, each drawn independently with probability `p`.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// The 3-cycle `ijk` for an edge `ij`, with the ids of its two other legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cycle {
    pub k: usize,
    pub leg_ik: EdgeId,
    pub leg_jk: EdgeId,
}

/// Sampled 3-cycles per edge and, once computed, their inconsistencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTable {
    samples: Vec<Vec<Cycle>>,
    inconsistencies: Vec<Vec<f64>>,
}

impl CycleTable {
    pub fn edge_count(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self, e: EdgeId) -> &[Cycle] {
        &self.samples[e]
    }

    /// Empty until filled by [`crate::cemp::cycle_inconsistencies`].
    pub fn inconsistencies(&self, e: EdgeId) -> &[f64] {
        &self.inconsistencies[e]
    }

    pub fn has_inconsistencies(&self) -> bool {
        self.samples
            .iter()
            .zip(&self.inconsistencies)
            .all(|(s, d)| s.len() == d.len())
    }

    /// Edges without any triangle.
    pub fn is_cycle_free(&self, e: EdgeId) -> bool {
        self.samples[e].is_empty()
    }

    pub(crate) fn set_inconsistencies(&mut self, values: Vec<Vec<f64>>) {
        debug_assert_eq!(values.len(), self.samples.len());
        self.inconsistencies = values;
    }
}

/// Draws `per_edge` third vertices per edge, uniformly with replacement from
/// the common neighbors of its endpoints.
///
/// Edge `e` uses its own random stream derived from `seed`, so the table does
/// not depend on the order edges are processed in.
pub fn sample_cycles(g: &ViewGraph, per_edge: usize, seed: u64) -> CycleTable {
    let samples: Vec<Vec<Cycle>> = (0..g.edge_count())
        .into_par_iter()
        .map(|e| {
            let candidates = g.common_neighbors(e);
            if candidates.is_empty() {
                return Vec::new();
            }
            let mut rng = rng::stream(seed, rng::streams::CYCLES_BASE + e as u64);
            (0..per_edge)
                .map(|_| candidates[rng.random_range(0..candidates.len())])
                .collect()
        })
        .collect();
    let inconsistencies = vec![Vec::new(); samples.len()];
    CycleTable {
        samples,
        inconsistencies,
    }
}

/// A rooted spanning tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub root: usize,
    /// `(parent, connecting edge)` per node; `None` at the root.
    pub parent: Vec<Option<(usize, EdgeId)>>,
    /// Nodes in discovery order; every parent precedes its children.
    pub order: Vec<usize>,
}

impl SpanningTree {
    pub fn edges(&self) -> Vec<EdgeId> {
        self.parent.iter().flatten().map(|&(_, e)| e).collect()
    }

    pub fn total_weight(&self, weights: &EdgeScalarMap) -> f64 {
        self.edges().iter().map(|&e| weights[e]).sum()
    }
}

#[derive(PartialEq)]
struct Candidate {
    weight: f64,
    edge: EdgeId,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Reversed for a min-heap; equal weights prefer the smaller edge id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.edge.cmp(&self.edge))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Prim's algorithm from node 0 with a binary heap.
///
/// Ties in weight are broken by the lexicographically smaller edge `(i, j)`.
pub fn prim_mst(g: &ViewGraph, weights: &EdgeScalarMap) -> Result<SpanningTree> {
    if weights.len() != g.edge_count() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} edges",
            weights.len(),
            g.edge_count()
        )));
    }
    if let Some(w) = weights.iter().find(|w| w.is_nan() || **w < 0.0) {
        return Err(Error::InvalidInput(format!("MST weight {w} is not nonnegative")));
    }
    let n = g.node_count();
    let root = 0;
    let mut parent = vec![None; n];
    let mut in_tree = vec![false; n];
    let mut order = Vec::with_capacity(n);
    if n == 0 {
        return Ok(SpanningTree { root, parent, order });
    }

    let mut heap = BinaryHeap::new();
    let mut visit = |u: usize, heap: &mut BinaryHeap<Candidate>, in_tree: &mut Vec<bool>| {
        in_tree[u] = true;
        order.push(u);
        for &(v, e) in g.neighbors(u) {
            if !in_tree[v] {
                heap.push(Candidate {
                    weight: weights[e],
                    edge: e,
                    node: v,
                });
            }
        }
    };
    visit(root, &mut heap, &mut in_tree);
    while let Some(Candidate { edge, node, .. }) = heap.pop() {
        if in_tree[node] {
            continue;
        }
        let Edge { i, j, .. } = *g.edge(edge);
        parent[node] = Some((if i == node { j } else { i }, edge));
        visit(node, &mut heap, &mut in_tree);
    }
    if order.len() != n {
        return Err(Error::Disconnected);
    }
    Ok(SpanningTree { root, parent, order })
}
