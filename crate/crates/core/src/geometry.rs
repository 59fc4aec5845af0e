//! Rotations, rigid transforms and two-view epipolar utilities.
//!
//! Conventions: a [`RigidTransform`] maps points from a source frame into a
//! target frame, `x_target = R * x_source + t`. For two views this is the
//! pose of camera 2 relative to camera 1, and the matching essential matrix
//! is `E = [t]x R`, so that `x2^T E x1 = 0` for normalized image points.

use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A proper rotation of 3-space, stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    /// Rotation about `axis` (need not be normalized) by `angle` radians.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Rotation(UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle))
    }

    /// Rotation from a matrix assumed orthonormal with determinant +1.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Rotation(UnitQuaternion::from_rotation_matrix(
            &Rotation3::from_matrix_unchecked(*m),
        ))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        *self.0.to_rotation_matrix().matrix()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul<&Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Angle of `a * b^-1` in degrees, in `[0, 180]`.
///
/// Evaluated from the relative quaternion with `atan2`, which stays accurate
/// near zero where `acos` of a matrix trace does not.
pub fn rotation_distance_deg(a: &Rotation, b: &Rotation) -> f64 {
    // conj(a) * b, written out so that swapping the arguments negates the
    // vector part exactly and the result is bit-for-bit symmetric.
    let (qa, qb) = (a.0.quaternion(), b.0.quaternion());
    let w = qa.w * qb.w + qa.imag().dot(&qb.imag());
    let v = (qb.imag() * qa.w - qa.imag() * qb.w) - qa.imag().cross(&qb.imag());
    (2.0 * v.norm().atan2(w.abs())).to_degrees()
}

/// Uniformly distributed rotation (normalized 4D Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let v = nalgebra::Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-12 {
            let q = nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]) / norm;
            return Rotation(UnitQuaternion::new_unchecked(q));
        }
    }
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        &self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self::new(inv, -(&inv * &self.translation))
    }

    /// `self` after `other`: `x -> self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            &self.rotation * &other.translation + self.translation,
        )
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Essential matrix in canonical form: unit Frobenius norm, first entry with
/// magnitude above 1e-12 (row-major order) positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Normalizes `m`; returns `None` for a (numerically) zero matrix.
    pub fn new(m: Matrix3<f64>) -> Option<Self> {
        let norm = m.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return None;
        }
        let mut m = m / norm;
        let first = m.transpose().iter().copied().find(|v| v.abs() > 1e-12);
        if matches!(first, Some(v) if v < 0.0) {
            m = -m;
        }
        Some(EssentialMatrix(m))
    }

    /// `[t]x R` for the pose of camera 2 relative to camera 1.
    pub fn from_pose(pose: &RigidTransform) -> Option<Self> {
        Self::new(skew(&pose.translation) * pose.rotation.matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        EssentialMatrix(self.0.transpose())
    }

    /// Distance between two canonical essential matrices, up to sign.
    pub fn distance(&self, other: &EssentialMatrix) -> f64 {
        (self.0 - other.0).norm().min((self.0 + other.0).norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampsonError {
    pub value: f64,
    /// Denominator fell below 1e-15; `value` is the squared algebraic error.
    pub degenerate: bool,
}

const SAMPSON_DENOMINATOR_FLOOR: f64 = 1e-15;

pub fn sampson_error_checked(
    x1: &Vector2<f64>,
    x2: &Vector2<f64>,
    e: &EssentialMatrix,
) -> SampsonError {
    let e = e.matrix();
    let h1 = Vector3::new(x1.x, x1.y, 1.0);
    let h2 = Vector3::new(x2.x, x2.y, 1.0);
    let l2 = e * h1;
    let l1 = e.transpose() * h2;
    let algebraic = h2.dot(&l2);
    let denom = l2.x * l2.x + l2.y * l2.y + l1.x * l1.x + l1.y * l1.y;
    if denom < SAMPSON_DENOMINATOR_FLOOR {
        SampsonError {
            value: algebraic * algebraic,
            degenerate: true,
        }
    } else {
        SampsonError {
            value: algebraic * algebraic / denom,
            degenerate: false,
        }
    }
}

/// First-order geometric epipolar error, in squared normalized-image units.
pub fn sampson_error(x1: &Vector2<f64>, x2: &Vector2<f64>, e: &EssentialMatrix) -> f64 {
    sampson_error_checked(x1, x2, e).value
}

/// Depths `(d1, d2)` of the point seen at `x1` and `x2` under `pose`, from
/// the least-squares solution of `d2 * x2 = d1 * R x1 + t`.
pub fn triangulate_depths(
    pose: &RigidTransform,
    x1: &Vector2<f64>,
    x2: &Vector2<f64>,
) -> Option<(f64, f64)> {
    let a = &pose.rotation * &Vector3::new(x1.x, x1.y, 1.0);
    let b = Vector3::new(x2.x, x2.y, 1.0);
    let t = pose.translation;
    // [a, -b] [d1, d2]^T = -t
    let aa = a.dot(&a);
    let bb = b.dot(&b);
    let ab = a.dot(&b);
    let det = aa * bb - ab * ab;
    if det.abs() < 1e-14 * aa * bb {
        return None;
    }
    let at = a.dot(&t);
    let bt = b.dot(&t);
    let d1 = (-at * bb + ab * bt) / det;
    let d2 = (aa * bt - ab * at) / det;
    Some((d1, d2))
}

/// The four `(R, t)` factorizations of an essential matrix; `t` has unit norm.
pub fn essential_candidates(e: &EssentialMatrix) -> Option<[RigidTransform; 4]> {
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u?;
    let mut v_t = svd.v_t?;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = Rotation::from_matrix(&(u * w * v_t));
    let r2 = Rotation::from_matrix(&(u * w.transpose() * v_t));
    let t: Vector3<f64> = u.column(2).into_owned();
    Some([
        RigidTransform::new(r1, t),
        RigidTransform::new(r1, -t),
        RigidTransform::new(r2, t),
        RigidTransform::new(r2, -t),
    ])
}

/// Pose selected by cheirality from the four factorizations of `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub pose: RigidTransform,
    /// Number of pairs triangulated in front of both cameras.
    pub support: usize,
}

/// Picks the factorization of `e` that puts the most `pairs` in front of
/// both cameras.
pub fn decompose_essential(
    e: &EssentialMatrix,
    pairs: &[(Vector2<f64>, Vector2<f64>)],
) -> Result<Decomposition> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "decomposition needs at least one pair".into(),
        ));
    }
    let singular = e.matrix().singular_values();
    let mut sv: Vec<f64> = singular.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    // A rank-one or zero matrix has no baseline to recover.
    if sv[1] < 1e-9 * sv[0].max(1e-300) {
        return Err(Error::DegenerateDecomposition);
    }
    let candidates = essential_candidates(e).ok_or(Error::DegenerateDecomposition)?;
    let mut best: Option<Decomposition> = None;
    for pose in candidates {
        let support = pairs
            .iter()
            .filter(|(x1, x2)| {
                matches!(triangulate_depths(&pose, x1, x2), Some((d1, d2)) if d1 > 0.0 && d2 > 0.0)
            })
            .count();
        if best.map_or(true, |b| support > b.support) {
            best = Some(Decomposition { pose, support });
        }
    }
    match best {
        Some(d) if d.support > 0 => Ok(d),
        _ => Err(Error::DegenerateDecomposition),
    }
}

/// Least-squares rigid alignment of `source` onto `target` (Kabsch with a
/// reflection guard). Requires at least three non-collinear source points.
pub fn procrustes(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<RigidTransform> {
    if source.len() != target.len() || source.len() < 3 {
        return Err(Error::DegenerateTriplet);
    }
    let n = source.len() as f64;
    let cs = source.iter().sum::<Vector3<f64>>() / n;
    let ct = target.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    let mut spread = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s - cs;
        h += (t - ct) * ds.transpose();
        spread += ds.norm_squared();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateTriplet),
    };
    let sv = svd.singular_values;
    // The second largest singular value vanishes for collinear sources.
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if spread <= 1e-300 || sorted[1] <= 1e-10 * spread.max(sorted[0]) {
        return Err(Error::DegenerateTriplet);
    }
    let d = (u * v_t).determinant();
    let mut fix = Matrix3::identity();
    if d < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = u * fix * v_t;
    let rotation = Rotation::from_matrix(&r);
    let translation = ct - &rotation * &cs;
    Ok(RigidTransform::new(rotation, translation))
}
