// SPDX-License-Identifier: Apache-2.0

//! Parsers for every input modality.
//!
//! Each parser is a pure function over bytes or text and returns an immutable
//! value. File-system access is limited to [`load_image_stack`], which has to
//! follow the paths listed in its manifest.

mod image_stack;
mod machine_log;
pub mod pgm;
mod toolpath;
mod volume;

pub use image_stack::{load_image_stack, ImageStackManifest, LayerImageStack, ManifestLayer};
pub use machine_log::{parse_machine_log, MachineSample, MachineToolpath};
pub use pgm::GrayImage;
pub use toolpath::{
    parse_toolpath_program, write_toolpath_program, Motion, PrescribedToolpath, ProgramParse, Segment, SkipReason,
    SkipRecord, DEFAULT_FEED_MM_S,
};
pub use volume::{load_volume, Dtype, VolumeData, VolumeDataset, VolumeMeta};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {0}: malformed word")]
    MalformedLine(usize),
    #[error("line {0}: non-finite coordinate")]
    NonFiniteCoordinate(usize),
    #[error("machine log header must be exactly \"t,x,y,z\"")]
    BadHeader,
    #[error("row {0}: timestamp does not increase")]
    NonMonotoneTime(usize),
    #[error("row {0}: expected 4 fields")]
    BadFieldCount(usize),
    #[error("row {0}: field is not a number")]
    MalformedField(usize),
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("raw size mismatch: expected {expected} bytes, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),
    #[error("invalid metadata field {field}: {reason}")]
    InvalidMeta { field: String, reason: String },
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("layer {0}: image dimensions differ from the first layer")]
    DimensionMismatch(u32),
    #[error("duplicate layer index {0}")]
    DuplicateLayer(u32),
    #[error("bad image {}: {reason}", path.display())]
    BadImage { path: PathBuf, reason: String },
}

impl IngestError {
    pub(crate) fn meta(field: &str, reason: impl Into<String>) -> Self {
        IngestError::InvalidMeta {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
