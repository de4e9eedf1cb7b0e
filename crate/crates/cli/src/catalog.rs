// SPDX-License-Identifier: Apache-2.0

//! On-disk dataset catalog.
//!
//! ```text
//! <data_root>/
//!   alignment.json             optional TransformSet document
//!   datasets/<id>/descriptor.json
//!   datasets/<id>/...          canonical payload files
//! ```
//!
//! Ids are `<kind>-<first 12 hex digits of sha256(content)>`, so ingesting
//! the same content twice yields the same id.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use amdt_core::align::{load_alignment, TransformSet};
use amdt_core::compare::LayerParams;
use amdt_core::ingest::{
    load_image_stack, load_volume, parse_machine_log, parse_toolpath_program, ImageStackManifest, IngestError,
    LayerImageStack, MachineToolpath, ManifestLayer, PrescribedToolpath, VolumeDataset,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{in_file, CliError};

pub const DEFAULT_LAYER_HEIGHT_MM: f64 = 0.25;
pub const ALIGNMENT_FILE: &str = "alignment.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Volume,
    Toolpath,
    Images,
    Machine,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Volume => "volume",
            DatasetKind::Toolpath => "toolpath",
            DatasetKind::Images => "images",
            DatasetKind::Machine => "machine",
        }
    }
}

/// Entry served by `GET /datasets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub id: String,
    pub kind: DatasetKind,
    pub meta: Value,
}

impl Descriptor {
    /// Id of the paired prescribed/machine dataset, if linked.
    pub fn pair(&self) -> Option<&str> {
        self.meta.get("pair").and_then(Value::as_str)
    }

    pub fn layer_params(&self) -> Result<LayerParams, CliError> {
        let h = self
            .meta
            .get("layer_height_mm")
            .and_then(Value::as_f64)
            .unwrap_or(DEFAULT_LAYER_HEIGHT_MM);
        let z0 = self.meta.get("z0_mm").and_then(Value::as_f64).unwrap_or(0.0);
        LayerParams::new(h, z0).map_err(|e| CliError::data("InvalidParameter", e.to_string()))
    }
}

/// Stable error code for an ingest failure.
pub fn ingest_code(e: &IngestError) -> &'static str {
    match e {
        IngestError::MalformedLine(_) => "MalformedLine",
        IngestError::NonFiniteCoordinate(_) => "NonFiniteCoordinate",
        IngestError::BadHeader => "BadHeader",
        IngestError::NonMonotoneTime(_) => "NonMonotoneTime",
        IngestError::BadFieldCount(_) => "BadFieldCount",
        IngestError::MalformedField(_) => "MalformedField",
        IngestError::InvalidUtf8 => "InvalidUtf8",
        IngestError::SizeMismatch { .. } => "SizeMismatch",
        IngestError::UnknownDtype(_) => "UnknownDtype",
        IngestError::InvalidMeta { .. } => "InvalidMeta",
        IngestError::MissingFile(_) => "MissingFile",
        IngestError::DimensionMismatch(_) => "DimensionMismatch",
        IngestError::DuplicateLayer(_) => "DuplicateLayer",
        IngestError::BadImage { .. } => "BadImage",
    }
}

fn ingest_err(path: &Path, e: IngestError) -> CliError {
    let mut err = in_file(path, &e);
    err.code = ingest_code(&e);
    err
}

fn content_id(kind: DatasetKind, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(kind.name().as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = hex::encode(h.finalize());
    format!("{}-{}", kind.name(), &digest[..12])
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn parse_json(path: &Path, bytes: &[u8]) -> Result<Value, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::data("InvalidJson", format!("{}: {e}", path.display())))
}

/// Layer registration parameters applied to toolpath and machine datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub layer_height_mm: f64,
    pub z0_mm: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            layer_height_mm: DEFAULT_LAYER_HEIGHT_MM,
            z0_mm: 0.0,
        }
    }
}

/// A dataset-root handle.
#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
}

impl Catalog {
    /// Opens an existing data root.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(CliError::data(
                "DataRootMissing",
                format!("data root {} does not exist", root.display()),
            ));
        }
        Ok(Self { root })
    }

    /// Opens a data root, creating it if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        let datasets = root.join("datasets");
        std::fs::create_dir_all(&datasets).map_err(|e| CliError::io(&datasets, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    /// All descriptors, sorted by id.
    pub fn descriptors(&self) -> Result<Vec<Descriptor>, CliError> {
        let dir = self.root.join("datasets");
        let mut out = Vec::new();
        let entries = match std::fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(CliError::io(&dir, e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| CliError::io(&dir, e))?;
            let path = entry.path().join("descriptor.json");
            if path.is_file() {
                let d: Descriptor = serde_json::from_slice(&read(&path)?)
                    .map_err(|e| CliError::data("InvalidDescriptor", format!("{}: {e}", path.display())))?;
                out.push(d);
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn descriptor(&self, id: &str) -> Result<Descriptor, CliError> {
        let path = self.dataset_dir(id).join("descriptor.json");
        if !path.is_file() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(CliError::data("UnknownDataset", format!("no dataset {id:?}")));
        }
        serde_json::from_slice(&read(&path)?)
            .map_err(|e| CliError::data("InvalidDescriptor", format!("{}: {e}", path.display())))
    }

    fn expect_kind(&self, id: &str, kind: DatasetKind) -> Result<Descriptor, CliError> {
        let d = self.descriptor(id)?;
        if d.kind != kind {
            return Err(CliError::data(
                "WrongKind",
                format!("dataset {id} is a {} dataset, not {}", d.kind.name(), kind.name()),
            ));
        }
        Ok(d)
    }

    pub fn load_volume(&self, id: &str) -> Result<VolumeDataset, CliError> {
        self.expect_kind(id, DatasetKind::Volume)?;
        let dir = self.dataset_dir(id);
        let meta_path = dir.join("volume.json");
        let meta = String::from_utf8(read(&meta_path)?).map_err(|e| in_file(&meta_path, e))?;
        let raw = read(&dir.join("volume.raw"))?;
        load_volume(&meta, &raw).map_err(|e| ingest_err(&meta_path, e))
    }

    pub fn load_toolpath(&self, id: &str) -> Result<PrescribedToolpath, CliError> {
        self.expect_kind(id, DatasetKind::Toolpath)?;
        let path = self.dataset_dir(id).join("program.gcode");
        let text = String::from_utf8(read(&path)?).map_err(|e| in_file(&path, e))?;
        Ok(parse_toolpath_program(&text)
            .map_err(|e| ingest_err(&path, e))?
            .toolpath)
    }

    pub fn load_machine(&self, id: &str) -> Result<MachineToolpath, CliError> {
        self.expect_kind(id, DatasetKind::Machine)?;
        let path = self.dataset_dir(id).join("machine.csv");
        parse_machine_log(&read(&path)?).map_err(|e| ingest_err(&path, e))
    }

    /// The decoded stack plus the original bytes of every layer image.
    pub fn load_images(&self, id: &str) -> Result<(LayerImageStack, BTreeMap<u32, Vec<u8>>), CliError> {
        self.expect_kind(id, DatasetKind::Images)?;
        let dir = self.dataset_dir(id);
        let manifest_path = dir.join("manifest.json");
        let text = String::from_utf8(read(&manifest_path)?).map_err(|e| in_file(&manifest_path, e))?;
        let stack = load_image_stack(&text, &dir).map_err(|e| ingest_err(&manifest_path, e))?;
        let manifest: ImageStackManifest = serde_json::from_str(&text).map_err(|e| in_file(&manifest_path, e))?;
        let mut raw = BTreeMap::new();
        for layer in manifest.layers {
            raw.insert(layer.index, read(&dir.join(&layer.path))?);
        }
        Ok((stack, raw))
    }

    /// The saved alignment, or an empty set when none exists.
    pub fn transforms(&self) -> Result<TransformSet, CliError> {
        let path = self.root.join(ALIGNMENT_FILE);
        if !path.is_file() {
            return Ok(TransformSet::new());
        }
        let text = String::from_utf8(read(&path)?).map_err(|e| in_file(&path, e))?;
        load_alignment(&text).map_err(|e| CliError::data("SchemaViolation", format!("{}: {e}", path.display())))
    }

    fn store(&self, id: &str, kind: DatasetKind, meta: Value, files: &[(&str, &[u8])]) -> Result<Descriptor, CliError> {
        let dir = self.dataset_dir(id);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for (name, bytes) in files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            write(&path, bytes)?;
        }
        let d = Descriptor {
            id: id.to_string(),
            kind,
            meta,
        };
        self.write_descriptor(&d)?;
        Ok(d)
    }

    fn write_descriptor(&self, d: &Descriptor) -> Result<(), CliError> {
        let path = self.dataset_dir(&d.id).join("descriptor.json");
        let text = serde_json::to_string_pretty(d).expect("descriptor serialises");
        write(&path, text.as_bytes())
    }

    /// Records that a prescribed toolpath and a machine log describe the
    /// same build.
    pub fn link_pair(&self, toolpath_id: &str, machine_id: &str) -> Result<(), CliError> {
        let mut t = self.expect_kind(toolpath_id, DatasetKind::Toolpath)?;
        let mut m = self.expect_kind(machine_id, DatasetKind::Machine)?;
        t.meta["pair"] = json!(machine_id);
        m.meta["pair"] = json!(toolpath_id);
        self.write_descriptor(&t)?;
        self.write_descriptor(&m)
    }

    pub fn ingest_volume(&self, meta_path: &Path) -> Result<Descriptor, CliError> {
        let meta_bytes = read(meta_path)?;
        let meta_value = parse_json(meta_path, &meta_bytes)?;
        let raw_path = match meta_value.get("raw").and_then(Value::as_str) {
            Some(name) => meta_path.with_file_name(name),
            None => meta_path.with_extension("raw"),
        };
        let raw = read(&raw_path)?;
        let text = String::from_utf8(meta_bytes).map_err(|e| in_file(meta_path, e))?;
        let v = load_volume(&text, &raw).map_err(|e| ingest_err(meta_path, e))?;
        let canonical = serde_json::to_vec(&v.meta()).expect("meta serialises");
        let id = content_id(DatasetKind::Volume, &[&canonical, &raw]);
        let meta = v.meta();
        let desc_meta = json!({
            "dims": meta.dims,
            "spacing": meta.spacing,
            "origin": meta.origin,
            "dtype": meta.dtype,
            "name": meta.id,
        });
        self.store(
            &id,
            DatasetKind::Volume,
            desc_meta,
            &[("volume.json", &canonical), ("volume.raw", &raw)],
        )
    }

    pub fn ingest_toolpath(&self, path: &Path, opts: &IngestOptions) -> Result<Descriptor, CliError> {
        let bytes = read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| ingest_err(path, IngestError::InvalidUtf8))?;
        let parsed = parse_toolpath_program(text).map_err(|e| ingest_err(path, e))?;
        for skip in &parsed.skips {
            tracing::debug!(file = %path.display(), line = skip.line, reason = ?skip.reason, "skipped line");
        }
        let id = content_id(DatasetKind::Toolpath, &[&bytes]);
        let mut meta = json!({
            "segments": parsed.toolpath.segments.len(),
            "total_length_mm": parsed.toolpath.total_length(),
            "skipped_lines": parsed.skips.len(),
            "layer_height_mm": opts.layer_height_mm,
            "z0_mm": opts.z0_mm,
        });
        self.keep_pair(&id, &mut meta);
        self.store(&id, DatasetKind::Toolpath, meta, &[("program.gcode", &bytes)])
    }

    pub fn ingest_machine(&self, path: &Path, opts: &IngestOptions) -> Result<Descriptor, CliError> {
        let bytes = read(path)?;
        let log = parse_machine_log(&bytes).map_err(|e| ingest_err(path, e))?;
        let id = content_id(DatasetKind::Machine, &[&bytes]);
        let mut meta = json!({
            "samples": log.samples.len(),
            "sample_rate_hz": log.sample_rate_hz(),
            "layer_height_mm": opts.layer_height_mm,
            "z0_mm": opts.z0_mm,
        });
        self.keep_pair(&id, &mut meta);
        self.store(&id, DatasetKind::Machine, meta, &[("machine.csv", &bytes)])
    }

    /// Re-ingesting must not forget an existing pairing.
    fn keep_pair(&self, id: &str, meta: &mut Value) {
        if let Ok(old) = self.descriptor(id) {
            if let Some(pair) = old.pair() {
                meta["pair"] = json!(pair);
            }
        }
    }

    pub fn ingest_images(&self, manifest_path: &Path) -> Result<Descriptor, CliError> {
        let bytes = read(manifest_path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| ingest_err(manifest_path, IngestError::InvalidUtf8))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let stack = load_image_stack(text, base).map_err(|e| ingest_err(manifest_path, e))?;
        let manifest: ImageStackManifest = serde_json::from_str(text).map_err(|e| in_file(manifest_path, e))?;
        let mut sources: Vec<(u32, Vec<u8>)> = Vec::new();
        for layer in &manifest.layers {
            sources.push((layer.index, read(&base.join(&layer.path))?));
        }
        sources.sort_by_key(|(i, _)| *i);
        let canonical = ImageStackManifest {
            layer_height_mm: manifest.layer_height_mm,
            pixel_pitch_mm: manifest.pixel_pitch_mm,
            origin_mm: manifest.origin_mm,
            layers: sources
                .iter()
                .map(|(index, _)| ManifestLayer {
                    index: *index,
                    path: format!("layers/{index:05}.pgm"),
                })
                .collect(),
        };
        let canonical_bytes = serde_json::to_vec_pretty(&canonical).expect("manifest serialises");
        let mut parts: Vec<&[u8]> = vec![&canonical_bytes];
        parts.extend(sources.iter().map(|(_, b)| b.as_slice()));
        let id = content_id(DatasetKind::Images, &parts);
        let (w, h) = stack.dimensions().unwrap_or((0, 0));
        let meta = json!({
            "layers": sources.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
            "width": w,
            "height": h,
            "layer_height_mm": manifest.layer_height_mm,
            "pixel_pitch_mm": manifest.pixel_pitch_mm,
            "origin_mm": manifest.origin_mm,
        });
        let names: Vec<String> = canonical.layers.iter().map(|l| l.path.clone()).collect();
        let mut files: Vec<(&str, &[u8])> = vec![("manifest.json", &canonical_bytes)];
        for (name, (_, b)) in names.iter().zip(&sources) {
            files.push((name, b));
        }
        self.store(&id, DatasetKind::Images, meta, &files)
    }

    /// Ingests a demo bundle manifest: all four datasets, with the
    /// toolpath/machine pair linked.
    pub fn ingest_bundle(&self, bundle_path: &Path) -> Result<Vec<Descriptor>, CliError> {
        let bundle = parse_json(bundle_path, &read(bundle_path)?)?;
        let base = bundle_path.parent().unwrap_or(Path::new("."));
        let file = |key: &str| -> Result<PathBuf, CliError> {
            bundle["files"][key].as_str().map(|p| base.join(p)).ok_or_else(|| {
                CliError::data(
                    "InvalidBundle",
                    format!("{}: files.{key} missing", bundle_path.display()),
                )
            })
        };
        let opts = IngestOptions {
            layer_height_mm: bundle["layers"]["layer_height_mm"]
                .as_f64()
                .unwrap_or(DEFAULT_LAYER_HEIGHT_MM),
            z0_mm: bundle["layers"]["z0_mm"].as_f64().unwrap_or(0.0),
        };
        let volume = self.ingest_volume(&file("volume")?)?;
        let toolpath = self.ingest_toolpath(&file("prescribed")?, &opts)?;
        let machine = self.ingest_machine(&file("machine")?, &opts)?;
        let images = self.ingest_images(&file("images")?)?;
        self.link_pair(&toolpath.id, &machine.id)?;
        let toolpath = self.descriptor(&toolpath.id)?;
        let machine = self.descriptor(&machine.id)?;
        Ok(vec![volume, toolpath, machine, images])
    }

    /// Ingests files by type: a bundle or volume/image-stack JSON document, a
    /// `.csv` machine log, or otherwise a toolpath program. A single toolpath
    /// and a single machine log given together are linked as a pair.
    pub fn ingest_paths(&self, paths: &[PathBuf], opts: &IngestOptions) -> Result<Vec<Descriptor>, CliError> {
        let mut out = Vec::new();
        for path in paths {
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("")
                .to_ascii_lowercase();
            match ext.as_str() {
                "json" => {
                    let v = parse_json(path, &read(path)?)?;
                    if v.get("files").is_some() {
                        out.extend(self.ingest_bundle(path)?);
                    } else if v.get("dims").is_some() {
                        out.push(self.ingest_volume(path)?);
                    } else if v.get("layers").is_some() {
                        out.push(self.ingest_images(path)?);
                    } else {
                        return Err(CliError::data(
                            "UnknownInput",
                            format!("{}: not a volume, image-stack or bundle document", path.display()),
                        ));
                    }
                }
                "csv" => out.push(self.ingest_machine(path, opts)?),
                _ => out.push(self.ingest_toolpath(path, opts)?),
            }
        }
        let toolpaths: Vec<&Descriptor> = out.iter().filter(|d| d.kind == DatasetKind::Toolpath).collect();
        let machines: Vec<&Descriptor> = out.iter().filter(|d| d.kind == DatasetKind::Machine).collect();
        if let ([t], [m]) = (toolpaths.as_slice(), machines.as_slice()) {
            if t.pair() != Some(m.id.as_str()) {
                let (t, m) = (t.id.clone(), m.id.clone());
                self.link_pair(&t, &m)?;
                for d in out.iter_mut() {
                    *d = self.descriptor(&d.id)?;
                }
            }
        }
        Ok(out)
    }
}

/// `kind id` lines, as printed by `amdt ingest`.
pub fn summary_lines(descriptors: &[Descriptor]) -> String {
    let mut s = String::new();
    for d in descriptors {
        let _ = writeln!(s, "{}\t{}", d.kind.name(), d.id);
    }
    s
}
