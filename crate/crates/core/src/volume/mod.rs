// SPDX-License-Identifier: Apache-2.0

//! Multi-resolution volume engine.
//!
//! [`VolumeHierarchy`] is a mean pyramid stored as cubic bricks per level.
//! Level `r` has `ceil(dims / 2^r)` voxels per axis and each voxel is the
//! mean of its (edge-clamped) 2×2×2 children. Integer volumes carry the
//! unrounded mean between levels and round half-up once when storing, so a
//! stored voxel is the correctly rounded mean of its full-resolution
//! footprint. `float32` volumes are pooled in `f32`, summing the eight
//! children in x, y, z order and then dividing by eight.

mod cutout;
mod grid;
mod pyramid;
mod slice;
mod transfer;

pub use cutout::{cutout_visible, CutoutMode, CutoutShape, ShapeGeometry};
pub use grid::{LevelGrid, Voxel};
pub use pyramid::{build_hierarchy, query_region, RegionQuery, SubVolume, VolumeHierarchy, DEFAULT_BRICK_SIZE};
pub use slice::{
    apply_window, extract_slice, mask_slice, voxel_center, Axis, GraySlice, ScalarSlice, SliceMask, VolumeGeometry,
    WindowLevel,
};
pub use transfer::{apply_transfer_function, ControlPoint, Rgba, TransferFunction};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("brick size must be a power of two >= 8, got {0}")]
    BrickSizeInvalid(usize),
    #[error("region out of bounds: {0}")]
    RegionOutOfBounds(String),
    #[error("level {level} out of range (hierarchy has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("slice index {index} out of range (extent {extent})")]
    IndexOutOfRange { index: usize, extent: usize },
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

impl VolumeError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        VolumeError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
