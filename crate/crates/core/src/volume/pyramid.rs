// SPDX-License-Identifier: Apache-2.0

use super::grid::{pool_dense, LevelGrid, Voxel};
use super::slice::VolumeGeometry;
use super::VolumeError;
use crate::ingest::{Dtype, VolumeData, VolumeDataset};

pub const DEFAULT_BRICK_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
enum Levels {
    U8(Vec<LevelGrid<u8>>),
    U16(Vec<LevelGrid<u16>>),
    F32(Vec<LevelGrid<f32>>),
}

macro_rules! dispatch {
    ($levels:expr, $l:ident => $body:expr) => {
        match $levels {
            Levels::U8($l) => $body,
            Levels::U16($l) => $body,
            Levels::F32($l) => $body,
        }
    };
}

/// Brick-based mean pyramid over one volume. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHierarchy {
    dataset_id: String,
    brick_size: usize,
    geometry: VolumeGeometry,
    levels: Levels,
}

/// Axis-aligned crop in level-0 voxel coordinates (inclusive), fetched at
/// `level`. With `filter_min`, output values below the threshold become 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionQuery {
    pub min: [usize; 3],
    pub max: [usize; 3],
    pub level: usize,
    pub filter_min: Option<f64>,
}

impl RegionQuery {
    pub fn full(dims: [usize; 3], level: usize) -> Self {
        Self {
            min: [0; 3],
            max: dims.map(|d| d - 1),
            level,
            filter_min: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubVolume {
    pub dims: [usize; 3],
    pub level: usize,
    pub data: VolumeData,
}

impl SubVolume {
    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.to_le_bytes()
    }
}

pub fn build_hierarchy(volume: &VolumeDataset, brick_size: usize) -> Result<VolumeHierarchy, VolumeError> {
    if brick_size < 8 || !brick_size.is_power_of_two() {
        return Err(VolumeError::BrickSizeInvalid(brick_size));
    }
    let dims = volume.dims;
    let levels = match &volume.values {
        VolumeData::U8(v) => Levels::U8(build_levels(dims, v, brick_size)),
        VolumeData::U16(v) => Levels::U16(build_levels(dims, v, brick_size)),
        VolumeData::F32(v) => Levels::F32(build_levels(dims, v, brick_size)),
    };
    Ok(VolumeHierarchy {
        dataset_id: volume.dataset_id.clone(),
        brick_size,
        geometry: VolumeGeometry {
            dims,
            spacing: volume.spacing,
            origin: volume.origin,
        },
        levels,
    })
}

/// Levels continue until every axis has a single voxel.
fn build_levels<T: Voxel>(dims: [usize; 3], data: &[T], brick_size: usize) -> Vec<LevelGrid<T>> {
    let mut levels = vec![LevelGrid::from_dense(dims, brick_size, data)];
    let mut carried: Vec<T::Acc> = data.iter().map(|v| v.to_acc()).collect();
    let mut current = dims;
    while current.iter().any(|&d| d > 1) {
        let (next_dims, next) = pool_dense::<T>(current, &carried);
        let stored: Vec<T> = next.iter().map(|&a| T::store(a)).collect();
        levels.push(LevelGrid::from_dense(next_dims, brick_size, &stored));
        carried = next;
        current = next_dims;
    }
    levels
}

impl VolumeHierarchy {
    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn brick_size(&self) -> usize {
        self.brick_size
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn dtype(&self) -> Dtype {
        match self.levels {
            Levels::U8(_) => Dtype::Uint8,
            Levels::U16(_) => Dtype::Uint16,
            Levels::F32(_) => Dtype::Float32,
        }
    }

    pub fn level_count(&self) -> usize {
        dispatch!(&self.levels, l => l.len())
    }

    pub fn level_dims(&self, level: usize) -> Result<[usize; 3], VolumeError> {
        self.check_level(level)?;
        Ok(dispatch!(&self.levels, l => l[level].dims()))
    }

    pub fn brick_count(&self, level: usize) -> Result<usize, VolumeError> {
        self.check_level(level)?;
        Ok(dispatch!(&self.levels, l => l[level].brick_count()))
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<(), VolumeError> {
        let levels = self.level_count();
        if level >= levels {
            return Err(VolumeError::LevelOutOfRange { level, levels });
        }
        Ok(())
    }

    /// Stored value of a voxel at `level`, as `f64`.
    pub fn voxel(&self, level: usize, p: [usize; 3]) -> f64 {
        dispatch!(&self.levels, l => l[level].get(p).to_f64())
    }

    /// Inclusive box read at `level` coordinates, converted to `f64`.
    pub fn read_level_box_f64(&self, level: usize, min: [usize; 3], max: [usize; 3]) -> Vec<f64> {
        dispatch!(&self.levels, l => l[level]
            .read_box(min, max)
            .into_iter()
            .map(Voxel::to_f64)
            .collect())
    }

    /// The whole of one level, in its native dtype.
    pub fn level_data(&self, level: usize) -> Result<VolumeData, VolumeError> {
        self.check_level(level)?;
        Ok(match &self.levels {
            Levels::U8(l) => VolumeData::U8(l[level].to_dense()),
            Levels::U16(l) => VolumeData::U16(l[level].to_dense()),
            Levels::F32(l) => VolumeData::F32(l[level].to_dense()),
        })
    }

    pub fn validate(&self, q: &RegionQuery) -> Result<(), VolumeError> {
        let dims = self.geometry.dims;
        #[allow(clippy::needless_range_loop)]
        for a in 0..3 {
            if q.min[a] > q.max[a] {
                return Err(VolumeError::RegionOutOfBounds(format!(
                    "min[{a}] = {} exceeds max[{a}] = {}",
                    q.min[a], q.max[a]
                )));
            }
            if q.max[a] >= dims[a] {
                return Err(VolumeError::RegionOutOfBounds(format!(
                    "max[{a}] = {} outside extent {}",
                    q.max[a], dims[a]
                )));
            }
        }
        self.check_level(q.level)?;
        if q.filter_min.is_some_and(f64::is_nan) {
            return Err(VolumeError::invalid("filter_min", "must be a number"));
        }
        Ok(())
    }
}

/// Crops `[min, max]` and returns it at `q.level`.
///
/// Boxes whose lower corner lies on a `2^level` boundary and whose upper
/// corner ends on one (or at the volume edge) are served straight from the
/// stored level. Any other box is cropped at full resolution and pooled from
/// its own lower corner, so the answer is always the downsampled crop.
pub fn query_region(h: &VolumeHierarchy, q: &RegionQuery) -> Result<SubVolume, VolumeError> {
    h.validate(q)?;
    let (dims, data) = match &h.levels {
        Levels::U8(l) => {
            let (d, v) = query_typed(l, q);
            (d, VolumeData::U8(v))
        }
        Levels::U16(l) => {
            let (d, v) = query_typed(l, q);
            (d, VolumeData::U16(v))
        }
        Levels::F32(l) => {
            let (d, v) = query_typed(l, q);
            (d, VolumeData::F32(v))
        }
    };
    Ok(SubVolume {
        dims,
        level: q.level,
        data,
    })
}

fn query_typed<T: Voxel>(levels: &[LevelGrid<T>], q: &RegionQuery) -> ([usize; 3], Vec<T>) {
    let step = 1usize << q.level;
    let full = levels[0].dims();
    let aligned = (0..3)
        .all(|a| q.min[a].is_multiple_of(step) && ((q.max[a] + 1).is_multiple_of(step) || q.max[a] + 1 == full[a]));

    let (dims, mut values) = if aligned {
        let lo = q.min.map(|c| c / step);
        let hi = q.max.map(|c| c / step);
        let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
        (dims, levels[q.level].read_box(lo, hi))
    } else {
        let mut dims = [0, 1, 2].map(|a| q.max[a] - q.min[a] + 1);
        let mut carried: Vec<T::Acc> = levels[0]
            .read_box(q.min, q.max)
            .into_iter()
            .map(Voxel::to_acc)
            .collect();
        for _ in 0..q.level {
            let (d, next) = pool_dense::<T>(dims, &carried);
            dims = d;
            carried = next;
        }
        (dims, carried.into_iter().map(T::store).collect())
    };

    if let Some(threshold) = q.filter_min {
        for v in values.iter_mut() {
            if v.to_f64() < threshold {
                *v = T::ZERO;
            }
        }
    }
    (dims, values)
}
