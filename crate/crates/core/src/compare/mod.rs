// SPDX-License-Identifier: Apache-2.0

//! Cross-modality comparison: layer registration, prescribed-vs-machine
//! deviation and point mapping between modalities.

mod deviation;
mod layers;

pub use deviation::{
    compute_deviation, point_segment_distance, DeviationConfig, DeviationReport, DeviationSummary, FlaggedRegion,
    SampleDeviation, DEFAULT_TOLERANCE_MM,
};
pub use layers::{
    build_layer_registry, split_at_layers, LayerEntry, LayerParams, LayerPiece, LayerRegistry, LAYER_EPSILON_MM,
};

use thiserror::Error;

use crate::align::{AlignError, TransformSet};
use crate::Point3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("z = {z} mm lies below the first layer")]
    NegativeLayerIndex { z: f64 },
    #[error("invalid {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Maps a point from one modality's frame into another's, through the world
/// frame.
pub fn map_point(
    ts: &TransformSet,
    from_modality: &str,
    to_modality: &str,
    p: &Point3,
) -> Result<Point3, CompareError> {
    let from = ts.require(from_modality)?;
    let to = ts.require(to_modality)?;
    let world = from.forward(p);
    Ok(to.inverse(&world)?)
}
