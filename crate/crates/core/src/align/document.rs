// SPDX-License-Identifier: Apache-2.0

//! Alignment document:
//!
//! ```json
//! {
//!   "version": 3,
//!   "modalities": [
//!     {
//!       "modality_id": "ct",
//!       "rigid": {"translation": [0, 0, 0], "rotation": [1, 0, 0, 0], "scale": [1, 1, 1]},
//!       "ffd": {"degree": [1, 1, 1], "domain": [[0, 0, 0], [1, 1, 1]], "points": [/* 3·8 numbers */]}
//!     }
//!   ]
//! }
//! ```
//!
//! `rotation` is `[w, x, y, z]`; FFD points are flattened `x, y, z` triples
//! with the first lattice index varying fastest. `ffd` may be omitted or null.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{AlignError, FfdLattice, ModalityTransform, RigidTransform, TransformSet};
use crate::{Point3, Vec3};

pub fn save_alignment(ts: &TransformSet) -> String {
    let modalities: Vec<Value> = ts
        .iter()
        .map(|(id, t)| {
            let r = &t.rigid;
            let rigid = json!({
                "translation": [r.translation.x, r.translation.y, r.translation.z],
                "rotation": r.rotation_wxyz(),
                "scale": [r.scale.x, r.scale.y, r.scale.z],
            });
            let ffd = match &t.ffd {
                Some(lattice) => {
                    let (min, max) = lattice.domain();
                    let points: Vec<f64> = lattice.points().iter().flat_map(|p| [p.x, p.y, p.z]).collect();
                    json!({
                        "degree": lattice.degree(),
                        "domain": [[min.x, min.y, min.z], [max.x, max.y, max.z]],
                        "points": points,
                    })
                }
                None => Value::Null,
            };
            json!({"modality_id": id, "rigid": rigid, "ffd": ffd})
        })
        .collect();
    let doc = json!({"version": ts.version(), "modalities": modalities});
    serde_json::to_string_pretty(&doc).expect("alignment document serialises")
}

pub fn load_alignment(document: &str) -> Result<TransformSet, AlignError> {
    let root: Value = serde_json::from_str(document).map_err(|_| AlignError::SchemaViolation("document".into()))?;
    let root = as_object(&root, "document")?;
    let version = field(root, "version")?.as_u64().ok_or_else(|| violation("version"))?;
    let modalities = field(root, "modalities")?
        .as_array()
        .ok_or_else(|| violation("modalities"))?;

    let mut entries = BTreeMap::new();
    for entry in modalities {
        let entry = as_object(entry, "modalities")?;
        let id = field(entry, "modality_id")?
            .as_str()
            .ok_or_else(|| violation("modality_id"))?
            .to_string();
        let rigid = as_object(field(entry, "rigid")?, "rigid")?;
        let translation = numbers::<3>(field(rigid, "translation")?, "translation")?;
        let rotation = numbers::<4>(field(rigid, "rotation")?, "rotation")?;
        let scale = numbers::<3>(field(rigid, "scale")?, "scale")?;
        let rigid = RigidTransform::new(Vec3::from(translation), rotation, Vec3::from(scale)).map_err(|e| match e {
            AlignError::InvalidTransform(msg) if msg.contains("rotation") => violation("rotation"),
            AlignError::InvalidTransform(msg) if msg.contains("scale") => violation("scale"),
            _ => violation("translation"),
        })?;

        let ffd = match entry.get("ffd") {
            None | Some(Value::Null) => None,
            Some(v) => Some(parse_ffd(as_object(v, "ffd")?)?),
        };
        if entries.insert(id.clone(), ModalityTransform { rigid, ffd }).is_some() {
            return Err(violation("modality_id"));
        }
    }
    Ok(TransformSet::from_parts(entries, version))
}

fn parse_ffd(obj: &Map<String, Value>) -> Result<FfdLattice, AlignError> {
    let degree_raw = numbers::<3>(field(obj, "degree")?, "degree")?;
    if degree_raw.iter().any(|d| *d < 1.0 || d.fract() != 0.0) {
        return Err(violation("degree"));
    }
    let degree = degree_raw.map(|d| d as usize);
    let domain = field(obj, "domain")?
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| violation("domain"))?;
    let min = numbers::<3>(&domain[0], "domain")?;
    let max = numbers::<3>(&domain[1], "domain")?;
    let flat = field(obj, "points")?.as_array().ok_or_else(|| violation("points"))?;
    let expected = 3 * degree.iter().map(|d| d + 1).product::<usize>();
    if flat.len() != expected {
        return Err(violation("points"));
    }
    let coords: Vec<f64> = flat
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| violation("points")))
        .collect::<Result<_, _>>()?;
    let points = coords.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
    FfdLattice::new(degree, Point3::from(min), Point3::from(max), points).map_err(|_| violation("ffd"))
}

fn violation(field: &str) -> AlignError {
    AlignError::SchemaViolation(field.to_string())
}

fn as_object<'a>(v: &'a Value, name: &str) -> Result<&'a Map<String, Value>, AlignError> {
    v.as_object().ok_or_else(|| violation(name))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, AlignError> {
    obj.get(name).ok_or_else(|| violation(name))
}

fn numbers<const N: usize>(v: &Value, name: &str) -> Result<[f64; N], AlignError> {
    let arr = v.as_array().filter(|a| a.len() == N).ok_or_else(|| violation(name))?;
    let mut out = [0.0; N];
    for (slot, item) in out.iter_mut().zip(arr) {
        *slot = item.as_f64().ok_or_else(|| violation(name))?;
    }
    Ok(out)
}
