// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::CompareError;
use crate::ingest::{LayerImageStack, MachineToolpath, PrescribedToolpath};
use crate::Point3;

/// Slack for points that sit on a layer boundary within rounding error.
pub const LAYER_EPSILON_MM: f64 = 1e-9;

/// Layer `n` spans `[z0 + n·h, z0 + (n+1)·h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerParams {
    pub layer_height_mm: f64,
    pub z0_mm: f64,
}

impl LayerParams {
    pub fn new(layer_height_mm: f64, z0_mm: f64) -> Result<Self, CompareError> {
        if !(layer_height_mm.is_finite() && layer_height_mm > 0.0) {
            return Err(CompareError::InvalidParameter("layer_height_mm"));
        }
        if !z0_mm.is_finite() {
            return Err(CompareError::InvalidParameter("z0_mm"));
        }
        Ok(Self { layer_height_mm, z0_mm })
    }

    pub fn layer_of(&self, z: f64) -> Result<u32, CompareError> {
        if !(z >= self.z0_mm - LAYER_EPSILON_MM) {
            return Err(CompareError::NegativeLayerIndex { z });
        }
        let layer = ((z - self.z0_mm + LAYER_EPSILON_MM) / self.layer_height_mm).floor();
        Ok(layer.max(0.0) as u32)
    }

    pub fn boundary(&self, layer: u32) -> f64 {
        self.z0_mm + layer as f64 * self.layer_height_mm
    }
}

/// Part of a prescribed segment lying inside one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerPiece {
    pub start: Point3,
    pub end: Point3,
    /// Index of the source segment.
    pub segment: usize,
}

impl LayerPiece {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerEntry {
    pub pieces: Vec<LayerPiece>,
    /// Indices into the machine samples.
    pub samples: Vec<usize>,
    pub has_image: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRegistry {
    params: LayerParams,
    layers: BTreeMap<u32, LayerEntry>,
}

/// Splits a segment where it crosses layer boundaries and tags each piece
/// with the layer containing its z midpoint. Zero-length pieces are dropped.
pub fn split_at_layers(
    start: Point3,
    end: Point3,
    params: &LayerParams,
) -> Result<Vec<(u32, Point3, Point3)>, CompareError> {
    let la = params.layer_of(start.z)?;
    let lb = params.layer_of(end.z)?;
    let mut cuts = Vec::new();
    let dz = end.z - start.z;
    for k in la.min(lb) + 1..=la.max(lb) {
        let zk = params.boundary(k);
        let t = (zk - start.z) / dz;
        if t > 0.0 && t < 1.0 {
            cuts.push(t);
        }
    }
    if dz < 0.0 {
        cuts.reverse();
    }
    let mut pieces = Vec::with_capacity(cuts.len() + 1);
    let mut from = start;
    for t in cuts.into_iter().chain(std::iter::once(1.0)) {
        let to = if t == 1.0 { end } else { start + (end - start) * t };
        if to != from {
            let mid_z = 0.5 * (from.z + to.z);
            pieces.push((params.layer_of(mid_z)?, from, to));
        }
        from = to;
    }
    if pieces.is_empty() {
        pieces.push((params.layer_of(start.z)?, start, end));
    }
    Ok(pieces)
}

impl LayerRegistry {
    /// Registers already world-mapped data.
    pub fn build(
        segments: impl IntoIterator<Item = (Point3, Point3)>,
        samples: impl IntoIterator<Item = Point3>,
        image_layers: impl IntoIterator<Item = u32>,
        params: LayerParams,
    ) -> Result<Self, CompareError> {
        let mut layers: BTreeMap<u32, LayerEntry> = BTreeMap::new();
        for (segment, (start, end)) in segments.into_iter().enumerate() {
            for (layer, a, b) in split_at_layers(start, end, &params)? {
                layers.entry(layer).or_default().pieces.push(LayerPiece {
                    start: a,
                    end: b,
                    segment,
                });
            }
        }
        for (i, p) in samples.into_iter().enumerate() {
            layers.entry(params.layer_of(p.z)?).or_default().samples.push(i);
        }
        for layer in image_layers {
            layers.entry(layer).or_default().has_image = true;
        }
        Ok(Self { params, layers })
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn layer(&self, index: u32) -> Option<&LayerEntry> {
        self.layers.get(&index)
    }

    pub fn layers(&self) -> impl Iterator<Item = (u32, &LayerEntry)> {
        self.layers.iter().map(|(k, v)| (*k, v))
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn total_piece_length(&self) -> f64 {
        self.layers
            .values()
            .flat_map(|l| &l.pieces)
            .map(LayerPiece::length)
            .sum()
    }
}

pub fn build_layer_registry(
    prescribed: &PrescribedToolpath,
    machine: &MachineToolpath,
    stack: Option<&LayerImageStack>,
    params: LayerParams,
) -> Result<LayerRegistry, CompareError> {
    LayerRegistry::build(
        prescribed.segments.iter().map(|s| (s.start, s.end)),
        machine.samples.iter().map(|s| s.position),
        stack.into_iter().flat_map(|s| s.layers.keys().copied()),
        params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_toolpath_program;

    #[test]
    fn floor_arithmetic() {
        let p = LayerParams::new(0.25, 0.0).unwrap();
        assert_eq!(p.layer_of(0.6).unwrap(), 2);
        assert_eq!(p.layer_of(0.0).unwrap(), 0);
        assert_eq!(p.layer_of(-5e-10).unwrap(), 0);
        assert_eq!(p.layer_of(0.5).unwrap(), 2);
        let p = LayerParams::new(0.1, 0.0).unwrap();
        // 0.3 / 0.1 is 2.9999999999999996 in binary floating point.
        assert_eq!(p.layer_of(0.3).unwrap(), 3);
        assert_eq!(
            LayerParams::new(0.25, 0.0).unwrap().layer_of(-0.01),
            Err(CompareError::NegativeLayerIndex { z: -0.01 })
        );
        assert!(LayerParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn everything_at_z0_is_layer_zero() {
        let prog = parse_toolpath_program("G1 X10\nG1 Y10\nG1 X0").unwrap().toolpath;
        let reg = build_layer_registry(&prog, &Default::default(), None, LayerParams::new(0.25, 0.0).unwrap()).unwrap();
        assert_eq!(reg.layer_count(), 1);
        assert_eq!(reg.layer(0).unwrap().pieces.len(), 3);
    }

    #[test]
    fn crossing_segment_is_split() {
        let params = LayerParams::new(0.25, 0.0).unwrap();
        let pieces = split_at_layers(Point3::new(0.0, 0.0, 0.1), Point3::new(1.0, 0.0, 0.6), &params).unwrap();
        let layers: Vec<u32> = pieces.iter().map(|p| p.0).collect();
        assert_eq!(layers, vec![0, 1, 2]);
        assert!((pieces[0].2.z - 0.25).abs() < 1e-12);
        assert!((pieces[1].2.z - 0.5).abs() < 1e-12);
        let down = split_at_layers(Point3::new(0.0, 0.0, 0.6), Point3::new(0.0, 0.0, 0.1), &params).unwrap();
        let layers: Vec<u32> = down.iter().map(|p| p.0).collect();
        assert_eq!(layers, vec![2, 1, 0]);
        let total: f64 = down.iter().map(|(_, a, b)| (b - a).norm()).sum();
        assert!((total - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segment_ending_on_boundary_is_not_split() {
        let params = LayerParams::new(0.25, 0.0).unwrap();
        let pieces = split_at_layers(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 0.25), &params).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].0, 0);
    }
}
