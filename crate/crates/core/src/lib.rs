// SPDX-License-Identifier: Apache-2.0

//! Core algorithms for a collaborative additive-manufacturing inspection
//! backend.
//!
//! The crate is organised by subsystem:
//!
//! * [`ingest`] parses toolpath programs, machine logs, raw CT volumes and
//!   in-process layer image stacks into canonical in-memory values.
//! * [`volume`] builds the multi-resolution mean pyramid and answers region,
//!   slice, window/level, transfer-function and cutout queries.
//! * [`align`] holds rigid transforms, the acceleration-adaptive gain law,
//!   trivariate Bernstein free-form deformation and alignment documents.
//! * [`compare`] assigns data to printed layers, measures machine-vs-prescribed
//!   deviations and maps points between modalities.
//! * [`stream`] plans bounded-size response chunks and encodes wire payloads.
//! * [`sync`] is the session protocol: message vocabulary, the authoritative
//!   fold, late-join snapshots and update coalescing.
//!
//! All coordinates are millimetres in a right-handed frame.

// `!(x > 0.0)` is written on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod compare;
pub mod ingest;
pub mod stream;
pub mod sync;
pub mod volume;

/// A position in millimetres.
pub type Point3 = nalgebra::Point3<f64>;
/// A displacement in millimetres.
pub type Vec3 = nalgebra::Vector3<f64>;

pub use align::{FfdLattice, GainProfile, RigidTransform, TransformSet};
pub use compare::{DeviationReport, LayerParams, LayerRegistry};
pub use ingest::{LayerImageStack, MachineToolpath, PrescribedToolpath, VolumeDataset};
pub use stream::ChunkPlan;
pub use sync::{Session, SessionState, Snapshot, SyncMessage};
pub use volume::{CutoutShape, RegionQuery, SubVolume, TransferFunction, VolumeHierarchy, WindowLevel};
