// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::layers::{LayerParams, LayerRegistry};
use super::CompareError;
use crate::align::TransformSet;
use crate::ingest::{MachineToolpath, PrescribedToolpath};
use crate::Point3;

pub const DEFAULT_TOLERANCE_MM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationConfig {
    pub tolerance_mm: f64,
    pub layers: LayerParams,
    /// Modality ids looked up in the transform set. Modalities without an
    /// entry are taken to be in the world frame already.
    pub prescribed_modality: String,
    pub machine_modality: String,
}

impl DeviationConfig {
    pub fn new(layers: LayerParams) -> Self {
        Self {
            tolerance_mm: DEFAULT_TOLERANCE_MM,
            layers,
            prescribed_modality: "prescribed".into(),
            machine_modality: "machine".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDeviation {
    pub t: f64,
    /// World-frame position.
    pub position: Point3,
    pub layer: u32,
    /// Distance to the nearest prescribed piece in the same layer; `None`
    /// when that layer has no prescribed path.
    pub distance: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub tolerance_mm: f64,
    pub sample_count: usize,
    /// Samples with a defined distance.
    pub measured_count: usize,
    pub flagged_count: usize,
    /// `flagged_count / measured_count`, 0 with nothing measured.
    pub flagged_fraction: f64,
    pub max_mm: f64,
    pub mean_mm: f64,
    /// Layers that hold machine samples but no prescribed path.
    pub empty_layers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub samples: Vec<SampleDeviation>,
    pub summary: DeviationSummary,
}

/// A maximal run of consecutive flagged samples within one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedRegion {
    pub layer: u32,
    pub first_sample: usize,
    pub last_sample: usize,
    pub count: usize,
    pub max_distance_mm: f64,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

pub fn point_segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Per-sample nearest distance from the machine path to the prescribed path,
/// restricted to the sample's own layer, after mapping both into the world
/// frame.
///
/// Segment endpoints are mapped individually, so under a deformation each
/// prescribed segment stays straight between its mapped endpoints.
pub fn compute_deviation(
    prescribed: &PrescribedToolpath,
    machine: &MachineToolpath,
    config: &DeviationConfig,
    transforms: &TransformSet,
) -> Result<DeviationReport, CompareError> {
    let tol = config.tolerance_mm;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CompareError::InvalidParameter("tolerance_mm"));
    }
    let to_prescribed = |p: &Point3| transforms.to_world(&config.prescribed_modality, p);
    let to_machine = |p: &Point3| transforms.to_world(&config.machine_modality, p);

    let positions: Vec<Point3> = machine.samples.iter().map(|s| to_machine(&s.position)).collect();
    let registry = LayerRegistry::build(
        prescribed
            .segments
            .iter()
            .map(|s| (to_prescribed(&s.start), to_prescribed(&s.end))),
        positions.iter().copied(),
        std::iter::empty(),
        config.layers,
    )?;

    let mut samples: Vec<SampleDeviation> = machine
        .samples
        .iter()
        .zip(&positions)
        .map(|(s, p)| SampleDeviation {
            t: s.t,
            position: *p,
            layer: 0,
            distance: None,
            flagged: false,
        })
        .collect();
    let mut empty_layers = Vec::new();
    for (layer, entry) in registry.layers() {
        if entry.samples.is_empty() {
            continue;
        }
        if entry.pieces.is_empty() {
            empty_layers.push(layer);
        }
        for &i in &entry.samples {
            let sample = &mut samples[i];
            sample.layer = layer;
            sample.distance = entry
                .pieces
                .iter()
                .map(|piece| point_segment_distance(&sample.position, &piece.start, &piece.end))
                .reduce(f64::min);
            sample.flagged = sample.distance.is_some_and(|d| d > tol);
        }
    }

    let measured: Vec<f64> = samples.iter().filter_map(|s| s.distance).collect();
    let flagged_count = samples.iter().filter(|s| s.flagged).count();
    let summary = DeviationSummary {
        tolerance_mm: tol,
        sample_count: samples.len(),
        measured_count: measured.len(),
        flagged_count,
        flagged_fraction: if measured.is_empty() {
            0.0
        } else {
            flagged_count as f64 / measured.len() as f64
        },
        max_mm: measured.iter().copied().fold(0.0, f64::max),
        mean_mm: if measured.is_empty() {
            0.0
        } else {
            measured.iter().sum::<f64>() / measured.len() as f64
        },
        empty_layers,
    };
    Ok(DeviationReport { samples, summary })
}

impl DeviationReport {
    /// Flagged runs, largest first (ties broken by peak distance).
    pub fn flagged_regions(&self) -> Vec<FlaggedRegion> {
        let mut regions: Vec<FlaggedRegion> = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            if !s.flagged {
                continue;
            }
            let d = s.distance.unwrap_or(0.0);
            let p: [f64; 3] = s.position.into();
            match regions.last_mut() {
                Some(r) if r.last_sample + 1 == i && r.layer == s.layer => {
                    r.last_sample = i;
                    r.count += 1;
                    r.max_distance_mm = r.max_distance_mm.max(d);
                    #[allow(clippy::needless_range_loop)]
                    for a in 0..3 {
                        r.bbox_min[a] = r.bbox_min[a].min(p[a]);
                        r.bbox_max[a] = r.bbox_max[a].max(p[a]);
                    }
                }
                _ => regions.push(FlaggedRegion {
                    layer: s.layer,
                    first_sample: i,
                    last_sample: i,
                    count: 1,
                    max_distance_mm: d,
                    bbox_min: p,
                    bbox_max: p,
                }),
            }
        }
        regions.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then(b.max_distance_mm.total_cmp(&a.max_distance_mm))
        });
        regions
    }

    /// `t,x,y,z,distance,flagged`; distance is empty where undefined and
    /// flagged is 0 or 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * (self.samples.len() + 1));
        out.push_str("t,x,y,z,distance,flagged\n");
        for s in &self.samples {
            let _ = write!(out, "{},{},{},{},", s.t, s.position.x, s.position.y, s.position.z);
            if let Some(d) = s.distance {
                let _ = write!(out, "{d}");
            }
            let _ = writeln!(out, ",{}", u8::from(s.flagged));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serialises")
    }
}
