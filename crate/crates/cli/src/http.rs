// SPDX-License-Identifier: Apache-2.0

//! Read-only HTTP API over an ingested data root.
//!
//! Every response body, JSON included, is streamed with chunked transfer
//! encoding in pieces of at most `max_chunk` bytes. 4xx bodies are
//! `{"error": <code>, "parameter": <name>, "message": <text>}`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use amdt_core::align::TransformSet;
use amdt_core::compare::{compute_deviation, DeviationConfig, DeviationReport, LayerParams, LayerRegistry};
use amdt_core::ingest::{MachineToolpath, PrescribedToolpath};
use amdt_core::stream::{encode_subvolume, render_slice, ChunkPlan};
use amdt_core::volume::{build_hierarchy, query_region, Axis, VolumeError, DEFAULT_BRICK_SIZE};
use amdt_core::{Point3, RegionQuery, VolumeHierarchy, WindowLevel};
use axum::body::Body;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use bytes::Bytes;
use serde_json::{json, Value};

use crate::catalog::{Catalog, DatasetKind, Descriptor};
use crate::error::CliError;

/// A toolpath/machine pair (either side may be missing) with its layers.
pub struct PathSet {
    pub prescribed_id: Option<String>,
    pub machine_id: Option<String>,
    pub prescribed: Option<Arc<PrescribedToolpath>>,
    pub machine: Option<Arc<MachineToolpath>>,
    pub params: LayerParams,
    pub registry: LayerRegistry,
}

type CachedReport = Arc<OnceLock<Result<Arc<DeviationReport>, String>>>;

/// Immutable served state plus the deviation cache.
pub struct ApiState {
    pub descriptors: Vec<Descriptor>,
    pub volumes: HashMap<String, Arc<VolumeHierarchy>>,
    /// Keyed by both the toolpath id and the machine id of a pair.
    pub paths: HashMap<String, Arc<PathSet>>,
    pub images: HashMap<String, BTreeMap<u32, Bytes>>,
    pub transforms: TransformSet,
    pub max_chunk: usize,
    reports: Mutex<HashMap<(String, u64, u64), CachedReport>>,
}

impl ApiState {
    /// Loads every dataset under the catalog and builds the volume pyramids.
    pub fn load(catalog: &Catalog, max_chunk: usize) -> Result<Self, CliError> {
        if max_chunk == 0 {
            return Err(CliError::usage("--max-chunk-bytes must be positive"));
        }
        let descriptors = catalog.descriptors()?;
        let transforms = catalog.transforms()?;
        let mut volumes = HashMap::new();
        let mut paths = HashMap::new();
        let mut images = HashMap::new();
        for d in &descriptors {
            match d.kind {
                DatasetKind::Volume => {
                    let v = catalog.load_volume(&d.id)?;
                    let h = build_hierarchy(&v, DEFAULT_BRICK_SIZE)
                        .map_err(|e| CliError::data("InvalidVolume", format!("{}: {e}", d.id)))?;
                    volumes.insert(d.id.clone(), Arc::new(h));
                }
                DatasetKind::Images => {
                    let (_, raw) = catalog.load_images(&d.id)?;
                    images.insert(
                        d.id.clone(),
                        raw.into_iter().map(|(k, v)| (k, Bytes::from(v))).collect(),
                    );
                }
                DatasetKind::Toolpath | DatasetKind::Machine => {
                    if paths.contains_key(&d.id) {
                        continue;
                    }
                    let set = Arc::new(load_path_set(catalog, d, &transforms)?);
                    for id in [&set.prescribed_id, &set.machine_id].into_iter().flatten() {
                        paths.insert(id.clone(), set.clone());
                    }
                }
            }
        }
        Ok(Self {
            descriptors,
            volumes,
            paths,
            images,
            transforms,
            max_chunk,
            reports: Mutex::new(HashMap::new()),
        })
    }

    /// Computes the deviation report for a pair once per (pair, tolerance,
    /// alignment version); concurrent callers wait for the first.
    pub fn deviation(&self, set: &PathSet, tolerance: f64) -> Result<Arc<DeviationReport>, String> {
        let (Some(p), Some(m)) = (&set.prescribed, &set.machine) else {
            return Err("toolpath has no paired machine log".into());
        };
        let key = (
            format!(
                "{}+{}",
                set.prescribed_id.as_deref().unwrap_or(""),
                set.machine_id.as_deref().unwrap_or("")
            ),
            tolerance.to_bits(),
            self.transforms.version(),
        );
        let cell = self.reports.lock().expect("cache lock").entry(key).or_default().clone();
        cell.get_or_init(|| {
            let mut config = DeviationConfig::new(set.params);
            config.tolerance_mm = tolerance;
            compute_deviation(p, m, &config, &self.transforms)
                .map(Arc::new)
                .map_err(|e| e.to_string())
        })
        .clone()
    }
}

/// Layers are assigned in world coordinates, as the deviation does.
fn load_path_set(catalog: &Catalog, d: &Descriptor, transforms: &TransformSet) -> Result<PathSet, CliError> {
    let params = d.layer_params()?;
    let (prescribed_id, machine_id) = match d.kind {
        DatasetKind::Toolpath => (Some(d.id.clone()), d.pair().map(str::to_string)),
        _ => (d.pair().map(str::to_string), Some(d.id.clone())),
    };
    let prescribed = prescribed_id
        .as_deref()
        .map(|id| catalog.load_toolpath(id))
        .transpose()?
        .map(Arc::new);
    let machine = machine_id
        .as_deref()
        .map(|id| catalog.load_machine(id))
        .transpose()?
        .map(Arc::new);
    let defaults = DeviationConfig::new(params);
    let segments = prescribed.iter().flat_map(|p| {
        p.segments.iter().map(|s| {
            (
                transforms.to_world(&defaults.prescribed_modality, &s.start),
                transforms.to_world(&defaults.prescribed_modality, &s.end),
            )
        })
    });
    let samples = machine.iter().flat_map(|m| {
        m.samples
            .iter()
            .map(|s| transforms.to_world(&defaults.machine_modality, &s.position))
    });
    let registry = LayerRegistry::build(segments, samples, std::iter::empty(), params)
        .map_err(|e| CliError::data("InvalidToolpath", format!("{}: {e}", d.id)))?;
    Ok(PathSet {
        prescribed_id,
        machine_id,
        prescribed,
        machine,
        params,
        registry,
    })
}

pub fn router(state: Arc<ApiState>) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/volume", get(volume))
        .route("/datasets/{id}/slice", get(slice))
        .route("/datasets/{id}/toolpath", get(toolpath))
        .route("/datasets/{id}/layers/{n}/image", get(layer_image))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "path", "no such endpoint") })
        .with_state(state)
}

/// A 4xx response naming the offending parameter.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    parameter: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, parameter: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            parameter,
            message: message.into(),
        }
    }

    fn bad(parameter: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidParameter", parameter, message)
    }

    fn not_found(parameter: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", parameter, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code, "parameter": self.parameter, "message": self.message});
        let mut r = json_response(&body, usize::MAX);
        *r.status_mut() = self.status;
        r
    }
}

/// Streams `payload` as a sequence of body frames of at most `max_chunk`
/// bytes each; hyper writes each frame as one HTTP chunk.
pub fn chunked_body(payload: Bytes, max_chunk: usize) -> Body {
    let plan = ChunkPlan::new(payload.len(), max_chunk).expect("positive chunk size");
    let frames: Vec<Result<Bytes, std::convert::Infallible>> = plan.ranges().map(|r| Ok(payload.slice(r))).collect();
    Body::from_stream(futures::stream::iter(frames))
}

fn chunked(content_type: &'static str, payload: impl Into<Bytes>, max_chunk: usize) -> Response {
    let mut r = Response::new(chunked_body(payload.into(), max_chunk));
    r.headers_mut()
        .insert(header::CONTENT_TYPE, header::HeaderValue::from_static(content_type));
    r
}

fn json_response(value: &Value, max_chunk: usize) -> Response {
    chunked("application/json", serde_json::to_vec(value).expect("json"), max_chunk)
}

/// Query parameters; a repeated key keeps its last value.
struct Params(HashMap<String, String>);

impl Params {
    fn parse(raw: Option<String>) -> Self {
        Self(
            form_urlencoded::parse(raw.unwrap_or_default().as_bytes())
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect(),
        )
    }

    fn get<T: std::str::FromStr>(&self, name: &'static str) -> Result<Option<T>, ApiError> {
        match self.0.get(name) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| ApiError::bad(name, format!("cannot parse {name}={v:?}"))),
        }
    }

    fn finite(&self, name: &'static str) -> Result<Option<f64>, ApiError> {
        match self.get::<f64>(name)? {
            Some(v) if !v.is_finite() => Err(ApiError::bad(name, format!("{name} must be finite"))),
            v => Ok(v),
        }
    }

    /// `x,y,z` voxel triple.
    fn triple(&self, name: &'static str) -> Result<Option<[usize; 3]>, ApiError> {
        let Some(v) = self.0.get(name) else { return Ok(None) };
        let parts: Vec<Option<usize>> = v.split(',').map(|s| s.trim().parse().ok()).collect();
        match parts.as_slice() {
            [Some(x), Some(y), Some(z)] => Ok(Some([*x, *y, *z])),
            _ => Err(ApiError::bad(
                name,
                format!("{name} must be three comma-separated voxel indices"),
            )),
        }
    }
}

fn volume_of<'a>(state: &'a ApiState, id: &str) -> Result<&'a Arc<VolumeHierarchy>, ApiError> {
    state
        .volumes
        .get(id)
        .ok_or_else(|| ApiError::not_found("id", format!("no volume dataset {id:?}")))
}

fn volume_error(e: VolumeError) -> ApiError {
    let parameter = match &e {
        VolumeError::LevelOutOfRange { .. } => "level",
        VolumeError::IndexOutOfRange { .. } => "index",
        VolumeError::RegionOutOfBounds(_) => "max",
        VolumeError::InvalidParameter { field, .. } => field,
        VolumeError::BrickSizeInvalid(_) => "brick",
    };
    ApiError::bad(parameter, e.to_string())
}

fn check_level(h: &VolumeHierarchy, level: usize) -> Result<(), ApiError> {
    if level >= h.level_count() {
        return Err(ApiError::bad(
            "level",
            format!("level {level} out of range (hierarchy has {} levels)", h.level_count()),
        ));
    }
    Ok(())
}

async fn list_datasets(State(state): State<Arc<ApiState>>) -> Response {
    json_response(
        &serde_json::to_value(&state.descriptors).expect("json"),
        state.max_chunk,
    )
}

async fn volume(
    State(state): State<Arc<ApiState>>,
    Path(id): Path<String>,
    RawQuery(raw): RawQuery,
) -> Result<Response, ApiError> {
    let h = volume_of(&state, &id)?.clone();
    let params = Params::parse(raw);
    let dims = h.geometry().dims;
    let level = params.get::<usize>("level")?.unwrap_or(0);
    let min = params.triple("min")?.unwrap_or([0; 3]);
    let max = params.triple("max")?.unwrap_or(dims.map(|d| d - 1));
    let filter_min = params.finite("filter_min")?;
    for a in 0..3 {
        if min[a] >= dims[a] {
            return Err(ApiError::bad(
                "min",
                format!("min[{a}] = {} outside extent {}", min[a], dims[a]),
            ));
        }
        if max[a] >= dims[a] {
            return Err(ApiError::bad(
                "max",
                format!("max[{a}] = {} outside extent {}", max[a], dims[a]),
            ));
        }
        if min[a] > max[a] {
            return Err(ApiError::bad(
                "min",
                format!("min[{a}] = {} exceeds max[{a}] = {}", min[a], max[a]),
            ));
        }
    }
    check_level(&h, level)?;
    let q = RegionQuery {
        min,
        max,
        level,
        filter_min,
    };
    let body = tokio::task::spawn_blocking(move || query_region(&h, &q).map(|sub| encode_subvolume(&sub)))
        .await
        .expect("query task")
        .map_err(volume_error)?;
    Ok(chunked("application/octet-stream", body, state.max_chunk))
}

async fn slice(
    State(state): State<Arc<ApiState>>,
    Path(id): Path<String>,
    RawQuery(raw): RawQuery,
) -> Result<Response, ApiError> {
    let h = volume_of(&state, &id)?.clone();
    let params = Params::parse(raw);
    let axis_name = params.get::<String>("axis")?.unwrap_or_else(|| "axial".into());
    let axis = Axis::parse(&axis_name).ok_or_else(|| {
        ApiError::bad(
            "axis",
            format!("unknown axis {axis_name:?}; use axial, coronal or sagittal"),
        )
    })?;
    let level = params.get::<usize>("level")?.unwrap_or(0);
    check_level(&h, level)?;
    let extent = h.level_dims(level).map_err(volume_error)?[axis.fixed_axis()];
    let index = match params.get::<usize>("index")? {
        Some(i) => i,
        None => extent / 2,
    };
    if index >= extent {
        return Err(ApiError::bad(
            "index",
            format!("index {index} out of range (extent {extent})"),
        ));
    }
    let center = params.finite("window_center")?;
    let width = params.finite("window_width")?;
    let window = match (center, width) {
        (None, None) => None,
        (Some(_), None) => {
            return Err(ApiError::bad(
                "window_width",
                "window_width is required with window_center",
            ))
        }
        (None, Some(_)) => {
            return Err(ApiError::bad(
                "window_center",
                "window_center is required with window_width",
            ))
        }
        (Some(c), Some(w)) => {
            if w <= 0.0 {
                return Err(ApiError::bad("window_width", "window_width must be positive"));
            }
            Some(WindowLevel::new(c, w).map_err(volume_error)?)
        }
    };
    let image = tokio::task::spawn_blocking(move || render_slice(&h, axis, index, level, window))
        .await
        .expect("slice task")
        .map_err(volume_error)?;
    Ok(chunked("image/x-portable-graymap", image.encode(), state.max_chunk))
}

/// Joins consecutive pieces that share endpoints into polylines.
fn pieces_to_polylines(pieces: impl Iterator<Item = (Point3, Point3)>) -> Vec<Vec<[f64; 3]>> {
    let mut out: Vec<Vec<[f64; 3]>> = Vec::new();
    for (a, b) in pieces {
        let (a, b): ([f64; 3], [f64; 3]) = (a.into(), b.into());
        match out.last_mut() {
            Some(line) if line.last() == Some(&a) => line.push(b),
            _ => out.push(vec![a, b]),
        }
    }
    out
}

/// Runs of consecutive sample indices.
fn index_runs(indices: &[usize]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(run) if run.last().is_some_and(|&l| l + 1 == i) => run.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

async fn toolpath(
    State(state): State<Arc<ApiState>>,
    Path(id): Path<String>,
    RawQuery(raw): RawQuery,
) -> Result<Response, ApiError> {
    let set = state
        .paths
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("id", format!("no toolpath or machine dataset {id:?}")))?;
    let params = Params::parse(raw);
    let layer = params
        .get::<u32>("layer")?
        .ok_or_else(|| ApiError::bad("layer", "layer is required"))?;
    let kind = params.get::<String>("kind")?.unwrap_or_else(|| "prescribed".into());
    let tolerance = params
        .finite("tolerance")?
        .unwrap_or(amdt_core::compare::DEFAULT_TOLERANCE_MM);
    if tolerance <= 0.0 {
        return Err(ApiError::bad("tolerance", "tolerance must be positive"));
    }
    let missing_layer = || ApiError::not_found("layer", format!("layer {layer} holds no data"));
    let entry = set.registry.layer(layer);
    let conflict = |what: &str| {
        ApiError::new(
            StatusCode::CONFLICT,
            "IncompletePair",
            "kind",
            format!("{what} requested but dataset {id} has no paired {what} data"),
        )
    };
    let body = match kind.as_str() {
        "prescribed" => {
            if set.prescribed.is_none() {
                return Err(conflict("prescribed"));
            }
            let entry = entry.ok_or_else(missing_layer)?;
            let lines = pieces_to_polylines(entry.pieces.iter().map(|p| (p.start, p.end)));
            json!({"layer": layer, "kind": kind, "polylines": lines})
        }
        "machine" => {
            if set.machine.is_none() {
                return Err(conflict("machine"));
            }
            let entry = entry.ok_or_else(missing_layer)?;
            let lines: Vec<Vec<[f64; 3]>> = index_runs(&entry.samples)
                .into_iter()
                .map(|run| run.into_iter().map(|i| machine_world(&state, &set, i)).collect())
                .collect();
            json!({"layer": layer, "kind": kind, "polylines": lines})
        }
        "error" => {
            if set.prescribed.is_none() || set.machine.is_none() {
                return Err(conflict("error"));
            }
            let st = state.clone();
            let s2 = set.clone();
            let report = tokio::task::spawn_blocking(move || st.deviation(&s2, tolerance))
                .await
                .expect("deviation task")
                .map_err(|e| ApiError::new(StatusCode::CONFLICT, "DeviationFailed", "kind", e))?;
            if entry.is_none() {
                return Err(missing_layer());
            }
            let in_layer: Vec<usize> = (0..report.samples.len())
                .filter(|&i| report.samples[i].layer == layer)
                .collect();
            let runs = index_runs(&in_layer);
            let lines: Vec<Vec<[f64; 3]>> = runs
                .iter()
                .map(|run| run.iter().map(|&i| report.samples[i].position.into()).collect())
                .collect();
            let flagged: Vec<Vec<bool>> = runs
                .iter()
                .map(|run| run.iter().map(|&i| report.samples[i].flagged).collect())
                .collect();
            json!({"layer": layer, "kind": kind, "tolerance_mm": tolerance, "polylines": lines, "flagged": flagged})
        }
        other => {
            return Err(ApiError::bad(
                "kind",
                format!("unknown kind {other:?}; use prescribed, machine or error"),
            ));
        }
    };
    Ok(json_response(&body, state.max_chunk))
}

fn machine_world(state: &ApiState, set: &PathSet, i: usize) -> [f64; 3] {
    let m = set.machine.as_ref().expect("machine present");
    let modality = DeviationConfig::new(set.params).machine_modality;
    state.transforms.to_world(&modality, &m.samples[i].position).into()
}

async fn layer_image(
    State(state): State<Arc<ApiState>>,
    Path((id, n)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let stack = state
        .images
        .get(&id)
        .ok_or_else(|| ApiError::not_found("id", format!("no image-stack dataset {id:?}")))?;
    let n: u32 = n
        .parse()
        .map_err(|_| ApiError::bad("layer", format!("layer {n:?} is not an index")))?;
    let bytes = stack
        .get(&n)
        .ok_or_else(|| ApiError::not_found("layer", format!("no image for layer {n}")))?;
    Ok(chunked("image/x-portable-graymap", bytes.clone(), state.max_chunk))
}
