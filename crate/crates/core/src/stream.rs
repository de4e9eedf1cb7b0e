// SPDX-License-Identifier: Apache-2.0

//! Wire payloads for the streaming API: bounded chunk plans, the sub-volume
//! header line and slice images.

use serde::{Deserialize, Serialize};

use crate::ingest::{Dtype, GrayImage};
use crate::volume::{apply_window, extract_slice, Axis, SubVolume, VolumeError, VolumeHierarchy, WindowLevel};

pub const DEFAULT_MAX_CHUNK_BYTES: usize = 1 << 20;

/// Splits a payload of `total_bytes` into chunks of at most `chunk_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    pub total_bytes: usize,
    pub chunk_size: usize,
}

impl ChunkPlan {
    pub fn new(total_bytes: usize, max_chunk: usize) -> Option<Self> {
        (max_chunk > 0).then_some(Self {
            total_bytes,
            chunk_size: max_chunk,
        })
    }

    pub fn chunk_count(&self) -> usize {
        self.total_bytes.div_ceil(self.chunk_size)
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.chunk_count()).map(|i| {
            let start = i * self.chunk_size;
            start..(start + self.chunk_size).min(self.total_bytes)
        })
    }

    /// Panics if `payload.len() != total_bytes`.
    pub fn split<'a>(&self, payload: &'a [u8]) -> impl Iterator<Item = &'a [u8]> + 'a {
        assert_eq!(payload.len(), self.total_bytes, "payload length");
        payload.chunks(self.chunk_size)
    }
}

/// First line of a volume response; the raw little-endian payload follows
/// after the newline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubVolumeHeader {
    pub dims: [usize; 3],
    pub level: usize,
    pub dtype: String,
    pub total_bytes: usize,
}

impl SubVolumeHeader {
    pub fn of(sub: &SubVolume) -> Self {
        let dtype = sub.dtype();
        Self {
            dims: sub.dims,
            level: sub.level,
            dtype: dtype.name().to_string(),
            total_bytes: sub.dims.iter().product::<usize>() * dtype.size_bytes(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("header serialises");
        line.push('\n');
        line
    }
}

/// Header line followed by payload.
pub fn encode_subvolume(sub: &SubVolume) -> Vec<u8> {
    let mut out = SubVolumeHeader::of(sub).to_line().into_bytes();
    out.extend_from_slice(&sub.to_le_bytes());
    out
}

/// Inverse of [`encode_subvolume`]: the header and the payload bytes.
pub fn decode_subvolume(body: &[u8]) -> Option<(SubVolumeHeader, &[u8])> {
    let nl = body.iter().position(|&b| b == b'\n')?;
    let header: SubVolumeHeader = serde_json::from_slice(&body[..nl]).ok()?;
    let payload = &body[nl + 1..];
    (payload.len() == header.total_bytes).then_some((header, payload))
}

/// Window used when the caller gives none: the dtype's full range for
/// integer volumes, the data range for `float32`.
pub fn default_window(h: &VolumeHierarchy) -> WindowLevel {
    let (lo, hi) = match h.dtype().value_range() {
        Some(range) => range,
        None => {
            let data = h.level_data(0).expect("level 0 exists");
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..data.len() {
                let v = data.get_f64(i);
                if v.is_finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > hi {
                (0.0, 1.0)
            } else {
                (lo, hi)
            }
        }
    };
    if hi > lo {
        WindowLevel::from_bounds(lo, hi).expect("finite bounds")
    } else {
        WindowLevel::new(lo, 1.0).expect("finite centre")
    }
}

/// Windowed 8-bit slice image.
pub fn render_slice(
    h: &VolumeHierarchy,
    axis: Axis,
    index: usize,
    level: usize,
    window: Option<WindowLevel>,
) -> Result<GrayImage, VolumeError> {
    let slice = extract_slice(h, axis, index, level)?;
    let wl = window.unwrap_or_else(|| default_window(h));
    let gray = apply_window(&slice, &wl);
    Ok(GrayImage::new(gray.width, gray.height, gray.to_u8()))
}

pub fn dtype_of_header(header: &SubVolumeHeader) -> Option<Dtype> {
    Dtype::parse(&header.dtype).ok()
}
