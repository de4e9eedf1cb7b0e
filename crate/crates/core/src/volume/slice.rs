// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::cutout::{cutout_visible, CutoutShape};
use super::pyramid::VolumeHierarchy;
use super::VolumeError;
use crate::Point3;

/// Level-0 grid placement in world space. `origin` is the centre of voxel
/// (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeGeometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: Point3,
}

impl VolumeGeometry {
    pub fn level_count(&self) -> usize {
        let max = *self.dims.iter().max().unwrap_or(&1);
        // ceil(log2(max)) halvings reach a single voxel.
        1 + (usize::BITS - (max.max(1) - 1).leading_zeros()) as usize
    }

    pub fn level_dims(&self, level: usize) -> [usize; 3] {
        self.dims.map(|d| d.div_ceil(1 << level))
    }
}

/// World position of the centre of a voxel at `level`: the centre of its
/// nominal `2^level` footprint at full resolution.
pub fn voxel_center(geometry: &VolumeGeometry, level: usize, voxel: [usize; 3]) -> Point3 {
    let step = (1usize << level) as f64;
    let offset = (step - 1.0) / 2.0;
    Point3::new(
        geometry.origin.x + geometry.spacing[0] * (voxel[0] as f64 * step + offset),
        geometry.origin.y + geometry.spacing[1] * (voxel[1] as f64 * step + offset),
        geometry.origin.z + geometry.spacing[2] * (voxel[2] as f64 * step + offset),
    )
}

/// Slice orientation. Axial fixes z, coronal fixes y, sagittal fixes x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Axial,
    Coronal,
    Sagittal,
}

impl Axis {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "axial" => Some(Axis::Axial),
            "coronal" => Some(Axis::Coronal),
            "sagittal" => Some(Axis::Sagittal),
            _ => None,
        }
    }

    /// Volume axis held fixed by this orientation.
    pub fn fixed_axis(self) -> usize {
        match self {
            Axis::Axial => 2,
            Axis::Coronal => 1,
            Axis::Sagittal => 0,
        }
    }

    /// (column axis, row axis) of the resulting image.
    pub fn image_axes(self) -> (usize, usize) {
        match self {
            Axis::Axial => (0, 1),
            Axis::Coronal => (0, 2),
            Axis::Sagittal => (1, 2),
        }
    }

    fn plane_box(self, dims: [usize; 3], index: usize) -> ([usize; 3], [usize; 3]) {
        let fixed = self.fixed_axis();
        let mut min = [0; 3];
        let mut max = dims.map(|d| d - 1);
        min[fixed] = index;
        max[fixed] = index;
        (min, max)
    }
}

/// A 2D scalar image, row-major. Columns and rows follow
/// [`Axis::image_axes`] in increasing voxel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSlice {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraySlice {
    pub width: usize,
    pub height: usize,
    /// Display intensities in [0, 1].
    pub values: Vec<f64>,
}

impl GraySlice {
    /// 8-bit quantisation, rounding half up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.values.iter().map(|g| (g * 255.0 + 0.5).floor() as u8).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceMask {
    pub width: usize,
    pub height: usize,
    pub visible: Vec<bool>,
}

/// CT display window in dataset units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowLevelFields")]
pub struct WindowLevel {
    pub center: f64,
    pub width: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowLevelFields {
    center: f64,
    width: f64,
}

impl TryFrom<WindowLevelFields> for WindowLevel {
    type Error = VolumeError;

    fn try_from(f: WindowLevelFields) -> Result<Self, Self::Error> {
        WindowLevel::new(f.center, f.width)
    }
}

impl WindowLevel {
    pub fn new(center: f64, width: f64) -> Result<Self, VolumeError> {
        if !center.is_finite() {
            return Err(VolumeError::invalid("window_center", "must be finite"));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(VolumeError::invalid("window_width", "must be positive"));
        }
        Ok(Self { center, width })
    }

    /// Window spanning `[lo, hi]`.
    pub fn from_bounds(lo: f64, hi: f64) -> Result<Self, VolumeError> {
        Self::new(lo + (hi - lo) / 2.0, hi - lo)
    }

    pub fn lower(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn map(&self, v: f64) -> f64 {
        let g = (v - self.lower()) / self.width;
        if g.is_nan() {
            0.0
        } else {
            g.clamp(0.0, 1.0)
        }
    }
}

pub fn extract_slice(h: &VolumeHierarchy, axis: Axis, index: usize, level: usize) -> Result<ScalarSlice, VolumeError> {
    let dims = h.level_dims(level)?;
    let extent = dims[axis.fixed_axis()];
    if index >= extent {
        return Err(VolumeError::IndexOutOfRange { index, extent });
    }
    let (min, max) = axis.plane_box(dims, index);
    let (cols, rows) = axis.image_axes();
    Ok(ScalarSlice {
        width: dims[cols],
        height: dims[rows],
        values: h.read_level_box_f64(level, min, max),
    })
}

pub fn apply_window(slice: &ScalarSlice, wl: &WindowLevel) -> GraySlice {
    GraySlice {
        width: slice.width,
        height: slice.height,
        values: slice.values.iter().map(|&v| wl.map(v)).collect(),
    }
}

/// Visibility of every pixel of a slice under a set of cutouts. A pixel is
/// visible only if every shape leaves it visible.
pub fn mask_slice(
    geometry: &VolumeGeometry,
    axis: Axis,
    index: usize,
    level: usize,
    shapes: &[CutoutShape],
) -> Result<SliceMask, VolumeError> {
    let levels = geometry.level_count();
    if level >= levels {
        return Err(VolumeError::LevelOutOfRange { level, levels });
    }
    let dims = geometry.level_dims(level);
    let fixed = axis.fixed_axis();
    if index >= dims[fixed] {
        return Err(VolumeError::IndexOutOfRange {
            index,
            extent: dims[fixed],
        });
    }
    let (cols, rows) = axis.image_axes();
    let mut visible = Vec::with_capacity(dims[cols] * dims[rows]);
    let mut voxel = [0; 3];
    voxel[fixed] = index;
    for r in 0..dims[rows] {
        voxel[rows] = r;
        for c in 0..dims[cols] {
            voxel[cols] = c;
            let p = voxel_center(geometry, level, voxel);
            visible.push(shapes.iter().all(|s| cutout_visible(s, &p)));
        }
    }
    Ok(SliceMask {
        width: dims[cols],
        height: dims[rows],
        visible,
    })
}
