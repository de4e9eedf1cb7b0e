// SPDX-License-Identifier: Apache-2.0

//! Brute-force pyramid oracles, written independently of the engine.

#![allow(dead_code)]

use amdt_core::ingest::{VolumeData, VolumeDataset};
use amdt_core::volume::RegionQuery;

/// 1D weights of level-0 samples contributing to sample `i` of an axis of
/// length `d` after `r` clamped halvings.
pub fn axis_weights(d: usize, r: usize, i: usize) -> Vec<(usize, f64)> {
    if r == 0 {
        return vec![(i, 1.0)];
    }
    let d_prev = d.div_ceil(1 << (r - 1));
    let mut out: Vec<(usize, f64)> = Vec::new();
    for child in [2 * i, (2 * i + 1).min(d_prev - 1)] {
        for (j, w) in axis_weights(d, r - 1, child) {
            match out.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += w / 2.0,
                None => out.push((j, w / 2.0)),
            }
        }
    }
    out
}

/// Exact weighted footprint mean of level-`r` voxel `v` of a dense grid.
pub fn footprint_mean(dims: [usize; 3], data: &[f64], r: usize, v: [usize; 3]) -> f64 {
    let (wx, wy, wz) = (
        axis_weights(dims[0], r, v[0]),
        axis_weights(dims[1], r, v[1]),
        axis_weights(dims[2], r, v[2]),
    );
    let mut sum = 0.0;
    for &(z, a) in &wz {
        for &(y, b) in &wy {
            for &(x, c) in &wx {
                sum += a * b * c * data[x + dims[0] * (y + dims[1] * z)];
            }
        }
    }
    sum
}

pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Crop then downsample, computed from scratch.
pub fn crop_then_downsample(src: &VolumeDataset, q: &RegionQuery) -> Vec<f64> {
    let ext = [0, 1, 2].map(|a| q.max[a] - q.min[a] + 1);
    let mut crop = Vec::with_capacity(ext.iter().product());
    for z in q.min[2]..=q.max[2] {
        for y in q.min[1]..=q.max[1] {
            for x in q.min[0]..=q.max[0] {
                crop.push(src.get_f64(x, y, z));
            }
        }
    }
    let out_dims = ext.map(|e| e.div_ceil(1 << q.level));
    let mut out = Vec::new();
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                let m = footprint_mean(ext, &crop, q.level, [x, y, z]);
                let v = if matches!(src.values, VolumeData::F32(_)) {
                    m
                } else {
                    round_half_up(m)
                };
                out.push(match q.filter_min {
                    Some(t) if v < t => 0.0,
                    _ => v,
                });
            }
        }
    }
    out
}

/// Level chain in f32 with the engine's summation order (x fastest, the
/// first child seeds the sum), so results compare exactly.
pub fn f32_levels(dims: [usize; 3], data: &[f32], levels: usize) -> Vec<([usize; 3], Vec<f32>)> {
    let mut out = vec![(dims, data.to_vec())];
    for _ in 1..levels {
        let (d, v) = out.last().unwrap();
        let nd = d.map(|e| e.div_ceil(2));
        let at = |x: usize, y: usize, z: usize| v[x.min(d[0] - 1) + d[0] * (y.min(d[1] - 1) + d[1] * z.min(d[2] - 1))];
        let mut next = Vec::new();
        for z in 0..nd[2] {
            for y in 0..nd[1] {
                for x in 0..nd[0] {
                    let mut sum = 0.0f32;
                    let mut first = true;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let c = at(2 * x + dx, 2 * y + dy, 2 * z + dz);
                                if first {
                                    sum = c;
                                    first = false;
                                } else {
                                    sum += c;
                                }
                            }
                        }
                    }
                    next.push(sum / 8.0);
                }
            }
        }
        out.push((nd, next));
    }
    out
}
