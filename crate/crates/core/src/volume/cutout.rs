// SPDX-License-Identifier: Apache-2.0

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::VolumeError;
use crate::{Point3, Vec3};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Inclusive keeps the inside visible; exclusive hides it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoutMode {
    Inclusive,
    Exclusive,
}

impl CutoutMode {
    pub fn toggled(self) -> Self {
        match self {
            CutoutMode::Inclusive => CutoutMode::Exclusive,
            CutoutMode::Exclusive => CutoutMode::Inclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeGeometry {
    /// Inside is the closed half-space behind the normal.
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Oriented box; `rotation` is a unit quaternion `[w, x, y, z]` taking
    /// box-local axes to world axes.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        rotation: [f64; 4],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CutoutFields")]
pub struct CutoutShape {
    #[serde(flatten)]
    pub geometry: ShapeGeometry,
    pub mode: CutoutMode,
}

#[derive(Deserialize)]
struct CutoutFields {
    #[serde(flatten)]
    geometry: ShapeGeometry,
    mode: CutoutMode,
}

impl TryFrom<CutoutFields> for CutoutShape {
    type Error = VolumeError;

    fn try_from(f: CutoutFields) -> Result<Self, Self::Error> {
        CutoutShape::new(f.geometry, f.mode)
    }
}

impl CutoutShape {
    pub fn new(geometry: ShapeGeometry, mode: CutoutMode) -> Result<Self, VolumeError> {
        let shape = Self { geometry, mode };
        shape.validate()?;
        Ok(shape)
    }

    pub fn sphere(center: Point3, radius: f64, mode: CutoutMode) -> Result<Self, VolumeError> {
        Self::new(
            ShapeGeometry::Sphere {
                center: center.into(),
                radius,
            },
            mode,
        )
    }

    pub fn plane(point: Point3, normal: Vec3, mode: CutoutMode) -> Result<Self, VolumeError> {
        Self::new(
            ShapeGeometry::Plane {
                point: point.into(),
                normal: normal.into(),
            },
            mode,
        )
    }

    pub fn oriented_box(
        center: Point3,
        half_extents: Vec3,
        rotation: UnitQuaternion<f64>,
        mode: CutoutMode,
    ) -> Result<Self, VolumeError> {
        let q = rotation.quaternion();
        Self::new(
            ShapeGeometry::Box {
                center: center.into(),
                half_extents: half_extents.into(),
                rotation: [q.w, q.i, q.j, q.k],
            },
            mode,
        )
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        match &self.geometry {
            ShapeGeometry::Plane { point, normal } => {
                if !finite(point) || !finite(normal) {
                    return Err(VolumeError::invalid("plane", "non-finite component"));
                }
                let len = Vec3::from(*normal).norm();
                if (len - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(VolumeError::invalid("normal", format!("length {len} is not 1")));
                }
            }
            ShapeGeometry::Sphere { center, radius } => {
                if !finite(center) {
                    return Err(VolumeError::invalid("center", "non-finite component"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(VolumeError::invalid("radius", "must be positive"));
                }
            }
            ShapeGeometry::Box {
                center,
                half_extents,
                rotation,
            } => {
                if !finite(center) {
                    return Err(VolumeError::invalid("center", "non-finite component"));
                }
                if !half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
                    return Err(VolumeError::invalid("half_extents", "must be positive"));
                }
                let len = rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
                if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
                    return Err(VolumeError::invalid(
                        "rotation",
                        format!("quaternion length {len} is not 1"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3) -> bool {
        match &self.geometry {
            ShapeGeometry::Plane { point, normal } => (p - Point3::from(*point)).dot(&Vec3::from(*normal)) <= 0.0,
            ShapeGeometry::Sphere { center, radius } => (p - Point3::from(*center)).norm() <= *radius,
            ShapeGeometry::Box {
                center,
                half_extents,
                rotation,
            } => {
                let [w, x, y, z] = *rotation;
                let q = UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z));
                let local = q.inverse_transform_vector(&(p - Point3::from(*center)));
                (0..3).all(|a| local[a].abs() <= half_extents[a])
            }
        }
    }
}

/// Whether `p` stays visible under `shape`.
pub fn cutout_visible(shape: &CutoutShape, p: &Point3) -> bool {
    let inside = shape.contains(p);
    match shape.mode {
        CutoutMode::Inclusive => inside,
        CutoutMode::Exclusive => !inside,
    }
}
