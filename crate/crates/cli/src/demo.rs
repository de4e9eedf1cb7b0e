// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic build: a woodpile lattice with two planted defects.
//!
//! The part is 32 layers of ten parallel struts, alternating between x- and
//! y-oriented layers. One pass is printed 0.5 mm off its nominal line (the
//! machine log and the CT volume both show it) and one layer contains a
//! spherical void (the CT volume and the layer images show it). Every byte of
//! the output is a function of the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use amdt_core::ingest::{GrayImage, ImageStackManifest, ManifestLayer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const GRID: usize = 128;
pub const EXTENT_MM: f64 = 25.0;
pub const VOXEL_MM: f64 = EXTENT_MM / GRID as f64;
pub const LAYERS: u32 = 32;
/// Four voxels per layer.
pub const LAYER_HEIGHT_MM: f64 = 4.0 * VOXEL_MM;
pub const STRUTS: u32 = 10;
pub const STRUT_PITCH_MM: f64 = 2.5;
pub const STRUT_START_MM: f64 = 2.0;
pub const STRUT_END_MM: f64 = 23.0;
pub const STRUT_RADIUS_MM: f64 = 0.39;
pub const FEED_MM_S: f64 = 30.0;
pub const SAMPLE_HZ: f64 = 100.0;
/// Per-axis bound of the lateral machine jitter.
pub const JITTER_MM: f64 = 0.02;
pub const TOLERANCE_MM: f64 = 0.1;

pub const DISPLACED_LAYER: u32 = 9;
pub const DISPLACED_STRUT: u32 = 4;
pub const DISPLACEMENT_MM: f64 = 0.5;
pub const VOID_LAYER: u32 = 20;
pub const VOID_STRUT: u32 = 6;
pub const VOID_RADIUS_MM: f64 = 0.75;

const MATERIAL: i32 = 200;
const BACKGROUND: i32 = 20;
const VOXEL_NOISE: i32 = 8;

/// File names inside a bundle directory.
pub const BUNDLE_FILE: &str = "bundle.json";
pub const VOLUME_META: &str = "volume.json";
pub const VOLUME_RAW: &str = "volume.raw";
pub const PROGRAM: &str = "program.gcode";
pub const MACHINE_LOG: &str = "machine.csv";
pub const IMAGE_MANIFEST: &str = "images/manifest.json";

fn layer_center_z(layer: u32) -> f64 {
    (layer as f64 + 0.5) * LAYER_HEIGHT_MM
}

/// Perpendicular coordinate of strut `j`.
fn strut_offset(j: u32) -> f64 {
    1.25 + STRUT_PITCH_MM * j as f64
}

/// Even layers run along x, odd layers along y.
fn along_x(layer: u32) -> bool {
    layer.is_multiple_of(2)
}

/// Maps (along, across) strut coordinates to (x, y) for a layer.
fn plane_xy(layer: u32, along: f64, across: f64) -> (f64, f64) {
    if along_x(layer) {
        (along, across)
    } else {
        (across, along)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacedPass {
    pub layer: u32,
    pub strut: u32,
    /// `"x"` or `"y"`: the direction the strut runs in.
    pub axis: char,
    pub offset_mm: f64,
    /// Box around the displaced pass as printed, in mm.
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedVoid {
    pub layer: u32,
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
}

/// Known answers for the planted defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tolerance_mm: f64,
    pub machine_samples: usize,
    pub flagged_samples: usize,
    pub flagged_fraction: f64,
    pub displaced_pass: DisplacedPass,
    pub void: PlantedVoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFiles {
    pub volume: String,
    pub prescribed: String,
    pub machine: String,
    pub images: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleLayers {
    pub layer_height_mm: f64,
    pub z0_mm: f64,
    pub count: u32,
}

/// Contents of `bundle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub seed: u64,
    pub files: BundleFiles,
    pub layers: BundleLayers,
    pub ground_truth: GroundTruth,
}

/// A generated bundle held in memory: relative path → bytes.
#[derive(Debug, Clone)]
pub struct DemoBundle {
    pub manifest: BundleManifest,
    pub files: BTreeMap<String, Vec<u8>>,
}

impl DemoBundle {
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

/// One vertex of the nominal path, with whether it belongs to the displaced
/// pass.
#[derive(Debug, Clone, Copy)]
struct Vertex {
    p: [f64; 3],
    rapid: bool,
    displaced: bool,
}

fn nominal_path() -> Vec<Vertex> {
    let mut path = Vec::new();
    for layer in 0..LAYERS {
        let z = layer_center_z(layer);
        for j in 0..STRUTS {
            let (a, b) = if j % 2 == 0 {
                (STRUT_START_MM, STRUT_END_MM)
            } else {
                (STRUT_END_MM, STRUT_START_MM)
            };
            let across = strut_offset(j);
            let displaced = layer == DISPLACED_LAYER && j == DISPLACED_STRUT;
            let (x0, y0) = plane_xy(layer, a, across);
            let (x1, y1) = plane_xy(layer, b, across);
            if j == 0 {
                if let Some(last) = path.last().copied() {
                    let Vertex { p: [lx, ly, _], .. } = last;
                    // Vertical climb, then travel in the new layer.
                    path.push(Vertex {
                        p: [lx, ly, z],
                        rapid: true,
                        displaced: false,
                    });
                }
                path.push(Vertex {
                    p: [x0, y0, z],
                    rapid: true,
                    displaced,
                });
            } else {
                // Step across at the end of the previous strut.
                path.push(Vertex {
                    p: [x0, y0, z],
                    rapid: false,
                    displaced,
                });
            }
            path.push(Vertex {
                p: [x1, y1, z],
                rapid: false,
                displaced,
            });
        }
    }
    path
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn program_text(path: &[Vertex]) -> String {
    let mut out = String::from("; woodpile demo part\nG90\n");
    let mut layer = None;
    for v in path {
        let l = (v.p[2] / LAYER_HEIGHT_MM).floor() as u32;
        if layer != Some(l) && (v.p[2] - layer_center_z(l)).abs() < 1e-12 {
            let _ = writeln!(out, ";LAYER:{l}");
            layer = Some(l);
        }
        let cmd = if v.rapid { "G0" } else { "G1" };
        let _ = writeln!(
            out,
            "{cmd} X{} Y{} Z{} F{}",
            fmt_num(v.p[0]),
            fmt_num(v.p[1]),
            fmt_num(v.p[2]),
            FEED_MM_S
        );
    }
    out
}

/// Samples the as-printed path at a fixed arc-length step. Returns the
/// positions exactly as written to the log.
fn machine_samples(path: &[Vertex], rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let printed: Vec<[f64; 3]> = path
        .iter()
        .map(|v| {
            let mut p = v.p;
            if v.displaced {
                // The pass is pushed across its own direction.
                let axis = if along_x(DISPLACED_LAYER) { 1 } else { 0 };
                p[axis] += DISPLACEMENT_MM;
            }
            p
        })
        .collect();
    let step = FEED_MM_S / SAMPLE_HZ;
    let mut out = Vec::new();
    let mut carry = 0.0;
    for w in printed.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
        let mut s = carry;
        while s < len {
            let f = s / len;
            let jx = rng.random_range(-JITTER_MM..=JITTER_MM);
            let jy = rng.random_range(-JITTER_MM..=JITTER_MM);
            let p = [
                a[0] + (b[0] - a[0]) * f + jx,
                a[1] + (b[1] - a[1]) * f + jy,
                a[2] + (b[2] - a[2]) * f,
            ];
            // Round-trip through the log's text form.
            out.push(p.map(|c| fmt_num(c).parse::<f64>().expect("formatted number parses")));
            s += step;
        }
        carry = s - len;
    }
    if let Some(last) = printed.last() {
        out.push(*last);
    }
    out
}

fn machine_csv(samples: &[[f64; 3]]) -> String {
    let mut out = String::with_capacity(40 * samples.len() + 8);
    out.push_str("t,x,y,z\n");
    for (i, p) in samples.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.2},{},{},{}",
            i as f64 / SAMPLE_HZ,
            fmt_num(p[0]),
            fmt_num(p[1]),
            fmt_num(p[2])
        );
    }
    out
}

fn seg_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    };
    let d = [ap[0] - ab[0] * t, ap[1] - ab[1] * t, ap[2] - ab[2] * t];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

type Span = ([f64; 3], [f64; 3]);

/// Counts samples farther than the tolerance from the nominal path of their
/// own layer. Only horizontal moves at the layer height and the clipped
/// vertical climbs occupy a layer, so the nearest nominal geometry is found
/// by checking each of them directly.
fn count_flagged(path: &[Vertex], samples: &[[f64; 3]]) -> usize {
    let mut by_layer: BTreeMap<u32, Vec<Span>> = BTreeMap::new();
    for w in path.windows(2) {
        let (a, b) = (w[0].p, w[1].p);
        if a[2] == b[2] {
            let l = (a[2] / LAYER_HEIGHT_MM).floor() as u32;
            by_layer.entry(l).or_default().push((a, b));
        } else {
            // Climb from one layer centre to the next: half in each.
            let lo = (a[2] / LAYER_HEIGHT_MM).floor() as u32;
            let boundary = (lo + 1) as f64 * LAYER_HEIGHT_MM;
            let mid = [a[0], a[1], boundary];
            by_layer.entry(lo).or_default().push((a, mid));
            by_layer.entry(lo + 1).or_default().push((mid, b));
        }
    }
    samples
        .iter()
        .filter(|p| {
            let l = (p[2] / LAYER_HEIGHT_MM).floor() as u32;
            let d = by_layer[&l]
                .iter()
                .map(|&(a, b)| seg_distance(**p, a, b))
                .fold(f64::INFINITY, f64::min);
            d > TOLERANCE_MM
        })
        .count()
}

fn void_center() -> [f64; 3] {
    let (x, y) = plane_xy(VOID_LAYER, 12.5, strut_offset(VOID_STRUT));
    [x, y, layer_center_z(VOID_LAYER)]
}

fn displaced_bbox() -> ([f64; 3], [f64; 3]) {
    let across = strut_offset(DISPLACED_STRUT) + DISPLACEMENT_MM;
    // The strut as a capsule of the strut radius around its centre line.
    let (x0, y0) = plane_xy(
        DISPLACED_LAYER,
        STRUT_START_MM - STRUT_RADIUS_MM,
        across - STRUT_RADIUS_MM,
    );
    let (x1, y1) = plane_xy(
        DISPLACED_LAYER,
        STRUT_END_MM + STRUT_RADIUS_MM,
        across + STRUT_RADIUS_MM,
    );
    let z = layer_center_z(DISPLACED_LAYER);
    (
        [x0.min(x1), y0.min(y1), z - 0.5 * LAYER_HEIGHT_MM],
        [x0.max(x1), y0.max(y1), z + 0.5 * LAYER_HEIGHT_MM],
    )
}

/// Noise-free voxel value at a voxel centre.
fn phantom(x: f64, y: f64, z: f64) -> i32 {
    let layer = (z / LAYER_HEIGHT_MM).floor() as u32;
    if layer >= LAYERS {
        return BACKGROUND;
    }
    let vc = void_center();
    let dv = ((x - vc[0]).powi(2) + (y - vc[1]).powi(2) + (z - vc[2]).powi(2)).sqrt();
    if dv <= VOID_RADIUS_MM {
        return BACKGROUND;
    }
    let (along, across) = if along_x(layer) { (x, y) } else { (y, x) };
    if !(STRUT_START_MM..=STRUT_END_MM).contains(&along) {
        return BACKGROUND;
    }
    let dz = z - layer_center_z(layer);
    let inside = (0..STRUTS).any(|j| {
        let mut c = strut_offset(j);
        if layer == DISPLACED_LAYER && j == DISPLACED_STRUT {
            c += DISPLACEMENT_MM;
        }
        (across - c).powi(2) + dz * dz <= STRUT_RADIUS_MM * STRUT_RADIUS_MM
    });
    if inside {
        MATERIAL
    } else {
        BACKGROUND
    }
}

fn volume_voxels(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(GRID * GRID * GRID);
    for k in 0..GRID {
        for j in 0..GRID {
            for i in 0..GRID {
                let v = phantom(i as f64 * VOXEL_MM, j as f64 * VOXEL_MM, k as f64 * VOXEL_MM)
                    + rng.random_range(-VOXEL_NOISE..=VOXEL_NOISE);
                out.push(v.clamp(0, 255) as u8);
            }
        }
    }
    out
}

/// Voxel slice index through the centre of a layer.
pub fn layer_slice_index(layer: u32) -> usize {
    4 * layer as usize + 2
}

/// Generates the bundle for `seed`.
pub fn generate(seed: u64) -> DemoBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files = BTreeMap::new();

    let voxels = volume_voxels(&mut rng);
    let meta = serde_json::json!({
        "dims": [GRID, GRID, GRID],
        "spacing": [VOXEL_MM, VOXEL_MM, VOXEL_MM],
        "origin": [0.0, 0.0, 0.0],
        "dtype": "uint8",
        "id": format!("woodpile-{seed}"),
    });
    files.insert(VOLUME_META.to_string(), serde_json::to_vec_pretty(&meta).expect("json"));

    // Layer images are the axial CT slices through each layer centre.
    let mut layers = Vec::new();
    for layer in 0..LAYERS {
        let z = layer_slice_index(layer);
        let start = z * GRID * GRID;
        let img = GrayImage::new(GRID, GRID, voxels[start..start + GRID * GRID].to_vec());
        let name = format!("layer_{layer:03}.pgm");
        files.insert(format!("images/{name}"), img.encode());
        layers.push(ManifestLayer {
            index: layer,
            path: name,
        });
    }
    let manifest = ImageStackManifest {
        layer_height_mm: LAYER_HEIGHT_MM,
        pixel_pitch_mm: VOXEL_MM,
        origin_mm: [0.0, 0.0],
        layers,
    };
    files.insert(
        IMAGE_MANIFEST.to_string(),
        serde_json::to_vec_pretty(&manifest).expect("json"),
    );
    files.insert(VOLUME_RAW.to_string(), voxels);

    let path = nominal_path();
    files.insert(PROGRAM.to_string(), program_text(&path).into_bytes());
    let samples = machine_samples(&path, &mut rng);
    files.insert(MACHINE_LOG.to_string(), machine_csv(&samples).into_bytes());

    let flagged = count_flagged(&path, &samples);
    let (bbox_min, bbox_max) = displaced_bbox();
    let manifest = BundleManifest {
        seed,
        files: BundleFiles {
            volume: VOLUME_META.into(),
            prescribed: PROGRAM.into(),
            machine: MACHINE_LOG.into(),
            images: IMAGE_MANIFEST.into(),
        },
        layers: BundleLayers {
            layer_height_mm: LAYER_HEIGHT_MM,
            z0_mm: 0.0,
            count: LAYERS,
        },
        ground_truth: GroundTruth {
            tolerance_mm: TOLERANCE_MM,
            machine_samples: samples.len(),
            flagged_samples: flagged,
            flagged_fraction: flagged as f64 / samples.len() as f64,
            displaced_pass: DisplacedPass {
                layer: DISPLACED_LAYER,
                strut: DISPLACED_STRUT,
                axis: if along_x(DISPLACED_LAYER) { 'x' } else { 'y' },
                offset_mm: DISPLACEMENT_MM,
                bbox_min,
                bbox_max,
            },
            void: PlantedVoid {
                layer: VOID_LAYER,
                center_mm: void_center(),
                radius_mm: VOID_RADIUS_MM,
            },
        },
    };
    files.insert(
        BUNDLE_FILE.to_string(),
        serde_json::to_vec_pretty(&manifest).expect("json"),
    );
    DemoBundle { manifest, files }
}
