// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Uint8,
    Uint16,
    Float32,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::Uint8 => 1,
            Dtype::Uint16 => 2,
            Dtype::Float32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::Uint8 => "uint8",
            Dtype::Uint16 => "uint16",
            Dtype::Float32 => "float32",
        }
    }

    pub fn parse(name: &str) -> Result<Self, IngestError> {
        match name {
            "uint8" => Ok(Dtype::Uint8),
            "uint16" => Ok(Dtype::Uint16),
            "float32" => Ok(Dtype::Float32),
            other => Err(IngestError::UnknownDtype(other.to_string())),
        }
    }

    /// Representable range for integer types; floats have no fixed range.
    pub fn value_range(self) -> Option<(f64, f64)> {
        match self {
            Dtype::Uint8 => Some((0.0, u8::MAX as f64)),
            Dtype::Uint16 => Some((0.0, u16::MAX as f64)),
            Dtype::Float32 => None,
        }
    }
}

/// Volume metadata document (`dims`, `spacing`, `origin`, `dtype`, `id`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub dtype: String,
    pub id: String,
}

/// Dense scalar storage, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl VolumeData {
    pub fn dtype(&self) -> Dtype {
        match self {
            VolumeData::U8(_) => Dtype::Uint8,
            VolumeData::U16(_) => Dtype::Uint16,
            VolumeData::F32(_) => Dtype::Float32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VolumeData::U8(v) => v.len(),
            VolumeData::U16(v) => v.len(),
            VolumeData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_f64(&self, index: usize) -> f64 {
        match self {
            VolumeData::U8(v) => v[index] as f64,
            VolumeData::U16(v) => v[index] as f64,
            VolumeData::F32(v) => v[index] as f64,
        }
    }

    /// Little-endian byte image of the values.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            VolumeData::U8(v) => v.clone(),
            VolumeData::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            VolumeData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(dtype: Dtype, raw: &[u8]) -> Self {
        match dtype {
            Dtype::Uint8 => VolumeData::U8(raw.to_vec()),
            Dtype::Uint16 => VolumeData::U16(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()),
            Dtype::Float32 => VolumeData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeDataset {
    pub dataset_id: String,
    pub dims: [usize; 3],
    /// mm per voxel
    pub spacing: [f64; 3],
    /// World position of the centre of voxel (0, 0, 0), in mm.
    pub origin: Point3,
    pub values: VolumeData,
}

impl VolumeDataset {
    pub fn new(
        dataset_id: impl Into<String>,
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Point3,
        values: VolumeData,
    ) -> Result<Self, IngestError> {
        if dims.contains(&0) {
            return Err(IngestError::meta("dims", "all dimensions must be positive"));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(IngestError::meta("spacing", "components must be positive"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(IngestError::meta("origin", "components must be finite"));
        }
        let expected = voxel_count(dims)?;
        if values.len() != expected {
            return Err(IngestError::SizeMismatch {
                expected: expected * values.dtype().size_bytes(),
                actual: values.len() * values.dtype().size_bytes(),
            });
        }
        Ok(Self {
            dataset_id: dataset_id.into(),
            dims,
            spacing,
            origin,
            values,
        })
    }

    pub fn dtype(&self) -> Dtype {
        self.values.dtype()
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get_f64(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values.get_f64(self.index(x, y, z))
    }

    pub fn meta(&self) -> VolumeMeta {
        VolumeMeta {
            dims: self.dims,
            spacing: self.spacing,
            origin: [self.origin.x, self.origin.y, self.origin.z],
            dtype: self.dtype().name().to_string(),
            id: self.dataset_id.clone(),
        }
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        self.values.to_le_bytes()
    }

    /// (min, max) over all values, ignoring NaN.
    pub fn value_extent(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.values.len() {
            let v = self.values.get_f64(i);
            if v.is_nan() {
                continue;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

fn voxel_count(dims: [usize; 3]) -> Result<usize, IngestError> {
    dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| IngestError::meta("dims", "voxel count overflows"))
}

/// Loads a raw little-endian volume described by a JSON metadata document.
pub fn load_volume(meta: &str, raw: &[u8]) -> Result<VolumeDataset, IngestError> {
    let meta: VolumeMeta = serde_json::from_str(meta).map_err(|e| {
        let field = missing_field(&e.to_string()).unwrap_or("meta");
        IngestError::meta(field, e.to_string())
    })?;
    let dtype = Dtype::parse(&meta.dtype)?;
    if meta.dims.contains(&0) {
        return Err(IngestError::meta("dims", "all dimensions must be positive"));
    }
    let expected = voxel_count(meta.dims)?
        .checked_mul(dtype.size_bytes())
        .ok_or_else(|| IngestError::meta("dims", "byte count overflows"))?;
    if raw.len() != expected {
        return Err(IngestError::SizeMismatch {
            expected,
            actual: raw.len(),
        });
    }
    VolumeDataset::new(
        meta.id,
        meta.dims,
        meta.spacing,
        Point3::from(meta.origin),
        VolumeData::from_le_bytes(dtype, raw),
    )
}

fn missing_field(message: &str) -> Option<&'static str> {
    ["dims", "spacing", "origin", "dtype", "id"]
        .into_iter()
        .find(|f| message.contains(&format!("`{f}`")))
}
