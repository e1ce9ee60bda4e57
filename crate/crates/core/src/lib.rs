//! Robust rotation synchronization.
//!
//! Given noisy and partially corrupted relative rotations `R_ij ≈ R_i R_jᵀ` on
//! the edges of a view graph, recover the absolute rotations `R_i` up to a
//! global right rotation.
//!
//! The pipeline is:
//!
//! 1. [`cemp`] estimates how corrupted each edge is from the inconsistency of
//!    sampled 3-cycles, passing messages between edges and cycles.
//! 2. [`mpls`] initializes rotations along a minimum spanning tree of those
//!    estimates and then runs a reweighted least squares in the tangent space
//!    ([`laa`]) whose weights mix residuals with cycle-based re-estimates.
//!
//! [`irls`] holds the classic reweighted least squares baselines, [`synth`] the
//! synthetic corruption models, [`metrics`] the aligned error report and
//! [`bench`] the sweep harness behind the `rotsync` binary.

pub mod bench;
pub mod cemp;
mod error;
pub mod graph;
pub mod io;
pub mod irls;
pub mod laa;
pub mod metrics;
pub mod mpls;
pub mod rng;
pub mod so3;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{CycleTable, EdgeId, EdgeMap, EdgeScalarMap, SpanningTree, ViewGraph};
pub use so3::{Rotation, TangentVector};
