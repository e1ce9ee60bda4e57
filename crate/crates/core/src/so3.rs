//! Rotations, the Lie algebra so(3) and the normalized geodesic metric.
//!
//! Distances are normalized so that the diameter of SO(3) is 1: the distance
//! between two rotations is their relative rotation angle divided by π.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Below this angle `log_map`/`exp_map` switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-4;
/// Within this distance of π, `log_map` reads the axis off the symmetric part.
const NEAR_PI: f64 = 1e-6;
/// Singular values below this make a projection onto SO(3) ill-defined.
const DEGENERATE_SINGULAR_VALUE: f64 = 1e-12;

/// An element of SO(3), stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    /// Tolerance of [`Rotation::from_matrix`] on ‖mᵀm − I‖_F and |det m − 1|.
    pub const TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and orientation within [`Rotation::TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if is_rotation(&m, Self::TOLERANCE) {
            Ok(Self(m))
        } else {
            Err(Error::InvalidInput(format!("matrix is not a rotation: {m}")))
        }
    }

    /// Wraps `m` without checks. The caller guarantees `m ∈ SO(3)`.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        exp_map(TangentVector(axis.normalize() * angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix3<f64> {
        self.0
    }

    /// The inverse rotation.
    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        angle_and_axis_sin(&self.0).0
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;

    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// `mᵀm = I` and `det m = 1` within `tol`.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    m.iter().all(|x| x.is_finite())
        && (m.transpose() * m - Matrix3::identity()).norm() <= tol
        && (m.determinant() - 1.0).abs() <= tol
}

/// A vector ω ∈ ℝ³ standing for the skew matrix `[ω]_×` ∈ so(3).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentVector(pub Vector3<f64>);

impl TangentVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zeros() -> Self {
        Self(Vector3::zeros())
    }

    /// Euclidean norm, i.e. the rotation angle of `exp_map(self)` when ≤ π.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Add for TangentVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Sub for TangentVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl Neg for TangentVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl Mul<f64> for TangentVector {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self(self.0 * rhs)
    }
}

/// The cross-product matrix `[ω]_×`, so that `hat(ω) v = ω × v`.
pub fn hat(w: TangentVector) -> Matrix3<f64> {
    let [x, y, z] = [w.0.x, w.0.y, w.0.z];
    Matrix3::new(
        0.0, -z, y, //
        z, 0.0, -x, //
        -y, x, 0.0,
    )
}

/// Inverse of [`hat`] on skew matrices. Reads only the strictly lower triangle.
pub fn vee(m: &Matrix3<f64>) -> TangentVector {
    TangentVector::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Matrix exponential of `[ω]_×` via Rodrigues' formula.
pub fn exp_map(w: TangentVector) -> Rotation {
    let theta2 = w.0.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(w);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Rotation angle θ ∈ [0, π] of `m` together with `vee(m − mᵀ) = 2 sin θ · axis`.
fn angle_and_axis_sin(m: &Matrix3<f64>) -> (f64, Vector3<f64>) {
    let w = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let cos = 0.5 * (m.trace() - 1.0);
    let sin = 0.5 * w.norm();
    (sin.atan2(cos), w)
}

/// Principal matrix logarithm, returned as ω with ‖ω‖ ≤ π.
///
/// At an angle of exactly π both `±ω` are logarithms. The sign is taken from
/// the antisymmetric part whenever that part is numerically nonzero, and
/// otherwise the first nonzero axis component is made positive.
pub fn log_map(r: &Rotation) -> TangentVector {
    let m = &r.0;
    let (theta, w) = angle_and_axis_sin(m);
    if theta < SMALL_ANGLE {
        // θ / (2 sin θ) ≈ 1/2 + θ²/12
        return TangentVector(w * (0.5 + theta * theta / 12.0));
    }
    if theta < std::f64::consts::PI - NEAR_PI {
        return TangentVector(w * (theta / (2.0 * theta.sin())));
    }

    // Near π: (R + Rᵀ)/2 = cos θ I + (1 − cos θ) a aᵀ.
    let cos = theta.cos();
    let outer = ((m + m.transpose()) * 0.5 - Matrix3::identity() * cos) / (1.0 - cos);
    let k = (0..3).max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)])).unwrap();
    let mut axis = outer.column(k).into_owned() / outer[(k, k)].max(0.0).sqrt();
    axis.normalize_mut();

    let alignment = w.dot(&axis);
    let flip = if alignment.abs() > 1e-14 {
        alignment < 0.0
    } else {
        axis.iter().find(|c| c.abs() > 1e-12).is_some_and(|&c| c < 0.0)
    };
    if flip {
        axis = -axis;
    }
    TangentVector(axis * theta)
}

/// Normalized geodesic distance `‖log(R1 R2ᵀ)‖_F / (√2 π)`, in `[0, 1]`.
pub fn geodesic_distance(r1: &Rotation, r2: &Rotation) -> f64 {
    let rel = r1.0 * r2.0.transpose();
    (angle_and_axis_sin(&rel).0 / std::f64::consts::PI).clamp(0.0, 1.0)
}

/// Nearest rotation in Frobenius norm, `U diag(1, 1, det(UVᵀ)) Vᵀ`.
pub fn project_to_so3(a: &Matrix3<f64>) -> Result<Rotation> {
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("project_to_so3"));
    }
    let svd = a.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = svd.singular_values;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    if s[order[1]] < DEGENERATE_SINGULAR_VALUE {
        return Err(Error::DegenerateProjection(s[order[1]]));
    }

    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[order[2]] = -1.0;
    }
    Ok(Rotation(u * Matrix3::from_diagonal(&d) * v_t))
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn sample_haar<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-12 {
            let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
            return Rotation(rot.into_inner());
        }
    }
}
