// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::GrayImage;
use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLayer {
    pub index: u32,
    pub path: String,
}

/// Image-stack manifest document. Layer paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStackManifest {
    pub layer_height_mm: f64,
    pub pixel_pitch_mm: f64,
    pub origin_mm: [f64; 2],
    pub layers: Vec<ManifestLayer>,
}

/// In-process layer images, all with identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerImageStack {
    pub layers: BTreeMap<u32, GrayImage>,
    pub layer_height_mm: f64,
    /// World (x, y) of the top-left pixel centre.
    pub image_origin_mm: [f64; 2],
    pub pixel_pitch_mm: f64,
}

impl LayerImageStack {
    pub fn dimensions(&self) -> Option<(usize, usize)> {
        self.layers.values().next().map(|img| (img.width, img.height))
    }
}

pub fn load_image_stack(manifest: &str, base_dir: &Path) -> Result<LayerImageStack, IngestError> {
    let manifest: ImageStackManifest =
        serde_json::from_str(manifest).map_err(|e| IngestError::meta("manifest", e.to_string()))?;
    if !(manifest.layer_height_mm.is_finite() && manifest.layer_height_mm > 0.0) {
        return Err(IngestError::meta("layer_height_mm", "must be positive"));
    }
    if !(manifest.pixel_pitch_mm.is_finite() && manifest.pixel_pitch_mm > 0.0) {
        return Err(IngestError::meta("pixel_pitch_mm", "must be positive"));
    }

    let mut layers = BTreeMap::new();
    let mut dims = None;
    for entry in &manifest.layers {
        if layers.contains_key(&entry.index) {
            return Err(IngestError::DuplicateLayer(entry.index));
        }
        let path: PathBuf = base_dir.join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|_| IngestError::MissingFile(path.clone()))?;
        let image = GrayImage::decode(&bytes).map_err(|reason| IngestError::BadImage {
            path: path.clone(),
            reason,
        })?;
        match dims {
            None => dims = Some((image.width, image.height)),
            Some(d) if d != (image.width, image.height) => return Err(IngestError::DimensionMismatch(entry.index)),
            Some(_) => {}
        }
        layers.insert(entry.index, image);
    }

    Ok(LayerImageStack {
        layers,
        layer_height_mm: manifest.layer_height_mm,
        image_origin_mm: manifest.origin_mm,
        pixel_pitch_mm: manifest.pixel_pitch_mm,
    })
}
