// SPDX-License-Identifier: Apache-2.0

use nalgebra::{Quaternion, UnitQuaternion};

use super::AlignError;
use crate::{Point3, Vec3};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Scale, then rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub scale: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
            scale: Vec3::repeat(1.0),
        }
    }

    pub fn translation(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// `rotation` is `[w, x, y, z]` and must have unit length (±1e-6).
    pub fn new(translation: Vec3, rotation: [f64; 4], scale: Vec3) -> Result<Self, AlignError> {
        if translation.iter().any(|c| !c.is_finite()) {
            return Err(AlignError::InvalidTransform("translation must be finite".into()));
        }
        let [w, x, y, z] = rotation;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(AlignError::InvalidTransform(format!(
                "rotation quaternion has length {norm}"
            )));
        }
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(AlignError::InvalidTransform("scale must be positive".into()));
        }
        Ok(Self {
            translation,
            rotation: UnitQuaternion::from_quaternion(q),
            scale,
        })
    }

    /// Rotation as `[w, x, y, z]`.
    pub fn rotation_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let scaled = p.coords.component_mul(&self.scale);
        Point3::from(self.rotation * scaled + self.translation)
    }

    /// Exact inverse mapping, valid for any positive per-axis scale.
    pub fn apply_inverse(&self, q: &Point3) -> Point3 {
        let unrotated = self.rotation.inverse_transform_vector(&(q.coords - self.translation));
        Point3::from(unrotated.component_div(&self.scale))
    }

    pub fn is_uniform_scale(&self) -> bool {
        self.scale.x == self.scale.y && self.scale.y == self.scale.z
    }

    /// The inverse expressed in the same scale-rotate-translate form. Only
    /// uniform scales have one.
    pub fn inverse(&self) -> Option<Self> {
        if !self.is_uniform_scale() {
            return None;
        }
        let inv_rot = self.rotation.inverse();
        let s = 1.0 / self.scale.x;
        Some(Self {
            translation: -(inv_rot * self.translation) * s,
            rotation: inv_rot,
            scale: Vec3::repeat(s),
        })
    }
}

pub fn apply_rigid(t: &RigidTransform, p: &Point3) -> Point3 {
    t.apply(p)
}
