// SPDX-License-Identifier: Apache-2.0

//! Registration of every modality into a shared world frame.
//!
//! A modality's model point reaches the world frame by free-form deformation
//! in its own frame first, then the rigid transform:
//! `world = rigid(ffd(model))`.

mod document;
mod ffd;
mod gain;
mod rigid;

pub use document::{load_alignment, save_alignment};
pub use ffd::{bernstein, FfdLattice, INVERSE_MAX_ITERATIONS, INVERSE_TOLERANCE_MM};
pub use gain::{adaptive_delta, GainProfile};
pub use rigid::{apply_rigid, RigidTransform};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::Point3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("control point {index:?} outside lattice of degree {degree:?}")]
    IndexOutOfRange { index: [usize; 3], degree: [usize; 3] },
    #[error("alignment document violates schema at {0:?}")]
    SchemaViolation(String),
    #[error("no such modality {0:?}")]
    NoSuchModality(String),
    #[error("deformation inverse did not converge (residual {residual} mm)")]
    InverseDidNotConverge { residual: f64 },
}

/// Placement of one modality: optional deformation in its own frame followed
/// by a rigid transform.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalityTransform {
    pub rigid: RigidTransform,
    pub ffd: Option<FfdLattice>,
}

impl ModalityTransform {
    pub fn rigid(rigid: RigidTransform) -> Self {
        Self { rigid, ffd: None }
    }

    pub fn forward(&self, p: &Point3) -> Point3 {
        let local = match &self.ffd {
            Some(lattice) => lattice.deform(p),
            None => *p,
        };
        self.rigid.apply(&local)
    }

    pub fn inverse(&self, world: &Point3) -> Result<Point3, AlignError> {
        let local = self.rigid.apply_inverse(world);
        match &self.ffd {
            Some(lattice) => lattice.invert(&local),
            None => Ok(local),
        }
    }
}

/// Versioned per-modality transforms. Every edit bumps the version.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransformSet {
    entries: BTreeMap<String, ModalityTransform>,
    version: u64,
}

impl TransformSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_parts(entries: BTreeMap<String, ModalityTransform>, version: u64) -> Self {
        Self { entries, version }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, modality: &str) -> Option<&ModalityTransform> {
        self.entries.get(modality)
    }

    pub fn require(&self, modality: &str) -> Result<&ModalityTransform, AlignError> {
        self.get(modality)
            .ok_or_else(|| AlignError::NoSuchModality(modality.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ModalityTransform)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, modality: impl Into<String>, transform: ModalityTransform) {
        self.entries.insert(modality.into(), transform);
        self.version += 1;
    }

    pub fn set_rigid(&mut self, modality: &str, rigid: RigidTransform) {
        self.entries.entry(modality.to_string()).or_default().rigid = rigid;
        self.version += 1;
    }

    pub fn set_ffd(&mut self, modality: &str, ffd: Option<FfdLattice>) -> Result<(), AlignError> {
        let entry = self
            .entries
            .get_mut(modality)
            .ok_or_else(|| AlignError::NoSuchModality(modality.to_string()))?;
        entry.ffd = ffd;
        self.version += 1;
        Ok(())
    }

    pub fn move_control_point(
        &mut self,
        modality: &str,
        index: [usize; 3],
        position: Point3,
    ) -> Result<(), AlignError> {
        let entry = self
            .entries
            .get_mut(modality)
            .ok_or_else(|| AlignError::NoSuchModality(modality.to_string()))?;
        let lattice = entry
            .ffd
            .as_ref()
            .ok_or_else(|| AlignError::InvalidLattice(format!("{modality} has no lattice")))?;
        entry.ffd = Some(lattice.move_control_point(index, position)?);
        self.version += 1;
        Ok(())
    }

    pub fn remove(&mut self, modality: &str) -> Option<ModalityTransform> {
        let removed = self.entries.remove(modality);
        if removed.is_some() {
            self.version += 1;
        }
        removed
    }

    /// World position of a model point; modalities without an entry are
    /// treated as already in the world frame.
    pub fn to_world(&self, modality: &str, p: &Point3) -> Point3 {
        match self.get(modality) {
            Some(t) => t.forward(p),
            None => *p,
        }
    }
}
