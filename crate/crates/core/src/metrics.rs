//! Aligned rotation errors.

use nalgebra::Matrix3;

use crate::so3::{geodesic_distance, project_to_so3, Rotation};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub mean_deg: f64,
    /// Lower-middle order statistic when the node count is even.
    pub median_deg: f64,
    pub per_node_deg: Vec<f64>,
    pub align: Rotation,
    pub runtime_s: f64,
    pub init_iterations: usize,
    pub main_iterations: usize,
}

/// The rotation `A` minimizing `Σ ‖R̂_i A − R_i*‖²_F`, i.e. `Proj(Σ R̂_iᵀ R_i*)`.
pub fn align(estimate: &[Rotation], truth: &[Rotation]) -> Result<Rotation> {
    check_lengths(estimate, truth)?;
    let sum = estimate.iter().zip(truth).fold(Matrix3::zeros(), |acc, (e, t)| {
        acc + e.matrix().transpose() * t.matrix()
    });
    project_to_so3(&sum).map_err(|err| match err {
        Error::DegenerateProjection(_) => Error::InvalidInput(format!("ambiguous alignment: {err}")),
        other => other,
    })
}

/// `180 · d(R̂_i A, R_i*)` per node, in degrees.
pub fn per_node_errors(estimate: &[Rotation], truth: &[Rotation], align: &Rotation) -> Vec<f64> {
    estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| 180.0 * geodesic_distance(&(*e * *align), t))
        .collect()
}

pub fn error_report(estimate: &[Rotation], truth: &[Rotation]) -> Result<ErrorReport> {
    let align = align(estimate, truth)?;
    let per_node_deg = per_node_errors(estimate, truth, &align);
    let mean_deg = per_node_deg.iter().sum::<f64>() / per_node_deg.len() as f64;
    let mut sorted = per_node_deg.clone();
    sorted.sort_by(f64::total_cmp);
    let median_deg = sorted[(sorted.len() - 1) / 2];
    Ok(ErrorReport {
        mean_deg,
        median_deg,
        per_node_deg,
        align,
        runtime_s: 0.0,
        init_iterations: 0,
        main_iterations: 0,
    })
}

fn check_lengths(estimate: &[Rotation], truth: &[Rotation]) -> Result<()> {
    if estimate.is_empty() || estimate.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "cannot compare {} estimates with {} ground-truth rotations",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(())
}
