//! Geometric primitives and the UWB ranging model.
//!
//! A tag rigidly mounted at `body_offset` on a vehicle with pose `(p, R)`
//! measures a range to an anchor at `a` of
//!
//! ```text
//! d = scale * |p + R * body_offset - a| + bias
//! ```
//!
//! where `scale` and `bias` are per-anchor calibration unknowns.

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position or offset in meters.
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite vector component in {0}")]
    NonFinite(&'static str),
    #[error("pose stamp must be finite and non-negative, got {0}")]
    BadStamp(f64),
    #[error("anchor {anchor_id}: scale must be positive, got {scale}")]
    BadScale { anchor_id: u32, scale: f64 },
    #[error("rotation axis must be non-zero")]
    ZeroAxis,
}

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Unit quaternion rotation, normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: f64) -> Self {
        Self(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self, GeometryError> {
        if !is_finite(axis) {
            return Err(GeometryError::NonFinite("axis"));
        }
        let axis = Unit::try_new(*axis, 1e-12).ok_or(GeometryError::ZeroAxis)?;
        Ok(Self(UnitQuaternion::from_axis_angle(&axis, angle)))
    }

    /// Builds from raw quaternion components `(w, x, y, z)`, renormalizing.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self(UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            w, x, y, z,
        )))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.inverse())
    }

    /// Spherical interpolation, `t` in `[0, 1]`.
    pub fn slerp(&self, other: &Rotation, t: f64) -> Rotation {
        // try_slerp fails only for antipodal quaternions; fall back to nlerp.
        match self.0.try_slerp(&other.0, t, 1e-12) {
            Some(q) => Rotation(q),
            None => Rotation(self.0.nlerp(&other.0, t)),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.0.euler_angles().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
    /// Seconds.
    pub stamp: f64,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation, stamp: f64) -> Result<Self, GeometryError> {
        if !is_finite(&position) {
            return Err(GeometryError::NonFinite("pose position"));
        }
        if !stamp.is_finite() || stamp < 0.0 {
            return Err(GeometryError::BadStamp(stamp));
        }
        Ok(Self {
            position,
            orientation,
            stamp,
        })
    }

    /// Applies the rigid transform `x -> R x + t` to the pose.
    pub fn transformed(&self, rotation: &Rotation, translation: &Vec3) -> Pose {
        Pose {
            position: rotation.rotate(&self.position) + translation,
            orientation: rotation.compose(&self.orientation),
            stamp: self.stamp,
        }
    }
}

/// A UWB tag rigidly attached to the vehicle body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagMount {
    pub tag_id: u32,
    /// Offset in the body frame, meters.
    pub body_offset: Vec3,
}

impl TagMount {
    pub fn new(tag_id: u32, body_offset: Vec3) -> Self {
        Self {
            tag_id,
            body_offset,
        }
    }
}

/// A fixed anchor with its per-anchor ranging calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorParams {
    pub anchor_id: u32,
    pub position: Vec3,
    /// Dimensionless multiplicative range scale.
    pub scale: f64,
    /// Additive range bias, meters.
    pub bias: f64,
}

impl AnchorParams {
    pub fn new(anchor_id: u32, position: Vec3, scale: f64, bias: f64) -> Result<Self, GeometryError> {
        let anchor = Self {
            anchor_id,
            position,
            scale,
            bias,
        };
        anchor.validate()?;
        Ok(anchor)
    }

    /// Ideal anchor: unit scale, zero bias.
    pub fn ideal(anchor_id: u32, position: Vec3) -> Self {
        Self {
            anchor_id,
            position,
            scale: 1.0,
            bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !is_finite(&self.position) || !self.bias.is_finite() {
            return Err(GeometryError::NonFinite("anchor"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(GeometryError::BadScale {
                anchor_id: self.anchor_id,
                scale: self.scale,
            });
        }
        Ok(())
    }

    /// `scale * |position - anchor| + bias` for a point already in the world frame.
    pub fn range_from(&self, point: &Vec3) -> f64 {
        self.scale * (point - self.position).norm() + self.bias
    }
}

/// World position of a tag: `p + R * body_offset`.
pub fn tag_world_position(pose: &Pose, mount: &TagMount) -> Vec3 {
    pose.position + pose.orientation.rotate(&mount.body_offset)
}

/// Modeled range between a mounted tag and an anchor. May be negative when the
/// bias is negative and the geometric distance is tiny; callers that need a
/// physical range clamp it.
pub fn range_model(pose: &Pose, mount: &TagMount, anchor: &AnchorParams) -> f64 {
    anchor.range_from(&tag_world_position(pose, mount))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pose(p: [f64; 3], r: Rotation) -> Pose {
        Pose::new(Vec3::new(p[0], p[1], p[2]), r, 0.0).unwrap()
    }

    #[test]
    fn tag_position_identity_and_quarter_turn() {
        let m = TagMount::new(0, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(
            tag_world_position(&pose([0.0; 3], Rotation::identity()), &m),
            Vec3::new(1.0, 0.0, 0.0)
        );
        let q = tag_world_position(&pose([0.0; 3], Rotation::from_yaw(FRAC_PI_2)), &m);
        assert_abs_diff_eq!(q, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        let zero = TagMount::new(1, Vec3::zeros());
        assert_eq!(
            tag_world_position(&pose([2.0, 3.0, 4.0], Rotation::identity()), &zero),
            Vec3::new(2.0, 3.0, 4.0)
        );
    }

    #[test]
    fn range_model_examples() {
        let m = TagMount::new(0, Vec3::zeros());
        let p = pose([0.0; 3], Rotation::identity());
        let a = AnchorParams::ideal(0, Vec3::new(3.0, 4.0, 0.0));
        assert_eq!(range_model(&p, &m, &a), 5.0);
        let a = AnchorParams::new(0, Vec3::new(3.0, 4.0, 0.0), 1.1, 0.2).unwrap();
        assert_abs_diff_eq!(range_model(&p, &m, &a), 5.7, epsilon = 1e-12);

        let m = TagMount::new(0, Vec3::new(1.0, 0.0, 0.0));
        let p = pose([0.0; 3], Rotation::from_yaw(FRAC_PI_2));
        let a = AnchorParams::ideal(0, Vec3::new(0.0, 5.0, 0.0));
        assert_abs_diff_eq!(range_model(&p, &m, &a), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(
            AnchorParams::new(3, Vec3::zeros(), 0.0, 0.0),
            Err(GeometryError::BadScale { anchor_id: 3, .. })
        ));
        assert!(Pose::new(Vec3::zeros(), Rotation::identity(), -1.0).is_err());
        assert!(Pose::new(Vec3::new(f64::NAN, 0.0, 0.0), Rotation::identity(), 0.0).is_err());
        assert_eq!(
            Rotation::from_axis_angle(&Vec3::zeros(), 1.0),
            Err(GeometryError::ZeroAxis)
        );
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = Rotation::from_axis_angle(&Vec3::new(0.3, -1.0, 2.0), 1.234).unwrap();
        let m = r.matrix();
        assert_abs_diff_eq!(m * m.transpose(), Matrix3::identity(), epsilon = 1e-9);
        assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-9);
        let [w, x, y, z] = Rotation::from_wxyz(2.0, 0.0, 0.0, 2.0).wxyz();
        assert_abs_diff_eq!((w * w + x * x + y * y + z * z).sqrt(), 1.0, epsilon = 1e-9);
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn rotation() -> impl Strategy<Value = Rotation> {
        (vec3(), -3.14..3.14f64).prop_filter_map("zero axis", |(axis, angle)| {
            Rotation::from_axis_angle(&axis, angle).ok()
        })
    }

    proptest! {
        #[test]
        fn ideal_range_is_euclidean(p in vec3(), a in vec3()) {
            let pose = Pose::new(p, Rotation::identity(), 0.0).unwrap();
            let r = range_model(&pose, &TagMount::new(0, Vec3::zeros()), &AnchorParams::ideal(0, a));
            prop_assert!((r - (p - a).norm()).abs() < 1e-12);
        }

        #[test]
        fn range_invariant_under_rigid_transform(
            p in vec3(), a in vec3(), off in vec3(), r0 in rotation(), rt in rotation(), t in vec3(),
            scale in 0.5..1.5f64, bias in -1.0..1.0f64,
        ) {
            let pose = Pose::new(p, r0, 0.0).unwrap();
            let mount = TagMount::new(0, off * 0.01);
            let anchor = AnchorParams::new(0, a, scale, bias).unwrap();
            let before = range_model(&pose, &mount, &anchor);
            let moved_anchor = AnchorParams { position: rt.rotate(&a) + t, ..anchor };
            let after = range_model(&pose.transformed(&rt, &t), &mount, &moved_anchor);
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn two_tag_range_difference_bounded(
            p in vec3(), a in vec3(), o0 in vec3(), o1 in vec3(), r in rotation(), scale in 0.5..1.5f64,
        ) {
            let pose = Pose::new(p, r, 0.0).unwrap();
            let (m0, m1) = (TagMount::new(0, o0 * 0.02), TagMount::new(1, o1 * 0.02));
            let anchor = AnchorParams::new(0, a, scale, 0.3).unwrap();
            let diff = (range_model(&pose, &m0, &anchor) - range_model(&pose, &m1, &anchor)).abs();
            prop_assert!(diff <= scale * (m0.body_offset - m1.body_offset).norm() + 1e-9);
        }
    }
}
