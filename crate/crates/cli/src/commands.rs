// SPDX-License-Identifier: Apache-2.0

use std::io::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use amdt_core::compare::{compute_deviation, DeviationConfig, DeviationReport};
use amdt_core::stream::{encode_subvolume, render_slice, DEFAULT_MAX_CHUNK_BYTES};
use amdt_core::volume::{build_hierarchy, query_region, Axis, DEFAULT_BRICK_SIZE};
use amdt_core::{RegionQuery, VolumeHierarchy, WindowLevel};
use clap::{Args, Parser, Subcommand};

use crate::catalog::{summary_lines, Catalog, DatasetKind, IngestOptions, DEFAULT_LAYER_HEIGHT_MM};
use crate::demo;
use crate::error::{CliError, ExitClass};
use crate::server::{start, termination_signal, ServeConfig};

#[derive(Debug, Parser)]
#[command(
    name = "amdt",
    version,
    about = "Inspection backend for additive-manufacturing build data"
)]
pub struct Cli {
    /// Dataset root directory.
    #[arg(long, global = true, env = "AMDT_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// Debug logging on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest toolpath programs (.gcode etc.), machine logs (.csv), volume
    /// metadata (.json with a sibling .raw), image-stack manifests or a demo
    /// bundle.json.
    Ingest(IngestArgs),
    /// Write a seeded synthetic build bundle.
    GenDemo(GenDemoArgs),
    /// Serve the HTTP API and the session server until interrupted.
    Serve(ServeArgs),
    /// Deviation between a prescribed toolpath and a machine log.
    Report(ReportArgs),
    /// Fetch a region or slice to a file.
    #[command(subcommand)]
    Query(QueryCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Layer height for toolpaths and machine logs, in mm.
    #[arg(long, default_value_t = DEFAULT_LAYER_HEIGHT_MM)]
    pub layer_height: f64,
    /// Height of the first layer boundary, in mm.
    #[arg(long, default_value_t = 0.0)]
    pub z0: f64,
}

#[derive(Debug, Args)]
pub struct GenDemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 8081)]
    pub session_port: u16,
    #[arg(long, default_value_t = 8082)]
    pub ws_port: u16,
    /// Maximum clients per session.
    #[arg(long)]
    pub max_clients: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_CHUNK_BYTES)]
    pub max_chunk_bytes: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub prescribed_id: String,
    pub machine_id: String,
    #[arg(long, default_value_t = amdt_core::compare::DEFAULT_TOLERANCE_MM)]
    pub tolerance: f64,
    /// Write deviation.csv, summary.json and regions.json here instead of
    /// printing the CSV to stdout and the summary to stderr.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum QueryCommand {
    /// Header line plus raw little-endian payload, as served over HTTP.
    Region(RegionArgs),
    /// Windowed 8-bit PGM slice.
    Slice(SliceArgs),
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    pub id: String,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Inclusive lower corner `x,y,z` (default: origin).
    #[arg(long)]
    pub min: Option<String>,
    /// Inclusive upper corner `x,y,z` (default: last voxel).
    #[arg(long)]
    pub max: Option<String>,
    #[arg(long)]
    pub filter_min: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    pub id: String,
    #[arg(long, default_value = "axial")]
    pub axis: String,
    /// Default: middle of the axis.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    #[arg(long, requires = "window_width")]
    pub window_center: Option<f64>,
    #[arg(long, requires = "window_center")]
    pub window_width: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn data_root(cli: &Cli) -> Result<&Path, CliError> {
    cli.data_root
        .as_deref()
        .ok_or_else(|| CliError::usage("--data-root (or AMDT_DATA_ROOT) is required"))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(a) => ingest(data_root(&cli)?, a),
        Command::GenDemo(a) => gen_demo(a),
        Command::Serve(a) => serve(data_root(&cli)?, a),
        Command::Report(a) => report(data_root(&cli)?, a),
        Command::Query(QueryCommand::Region(a)) => query_region_cmd(data_root(&cli)?, a),
        Command::Query(QueryCommand::Slice(a)) => query_slice_cmd(data_root(&cli)?, a),
    }
}

fn write_stdout(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::new(ExitClass::Runtime, "Io", format!("stdout: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn ingest(root: &Path, a: &IngestArgs) -> Result<(), CliError> {
    if !(a.layer_height.is_finite() && a.layer_height > 0.0) {
        return Err(CliError::usage("--layer-height must be positive"));
    }
    let catalog = Catalog::create(root)?;
    let opts = IngestOptions {
        layer_height_mm: a.layer_height,
        z0_mm: a.z0,
    };
    let ids = catalog.ingest_paths(&a.paths, &opts)?;
    write_stdout(&summary_lines(&ids))
}

fn gen_demo(a: &GenDemoArgs) -> Result<(), CliError> {
    let bundle = demo::generate(a.seed);
    bundle.write_to(&a.out)?;
    let gt = &bundle.manifest.ground_truth;
    write_stdout(&format!(
        "{}\nflagged_fraction={} ({} of {} samples at tolerance {} mm)\n",
        a.out.join(demo::BUNDLE_FILE).display(),
        gt.flagged_fraction,
        gt.flagged_samples,
        gt.machine_samples,
        gt.tolerance_mm
    ))
}

fn serve(root: &Path, a: &ServeArgs) -> Result<(), CliError> {
    let config = ServeConfig {
        data_root: root.to_path_buf(),
        host: a.host,
        port: a.port,
        session_port: a.session_port,
        ws_port: a.ws_port,
        max_clients: a.max_clients,
        max_chunk_bytes: a.max_chunk_bytes,
    };
    if config.max_chunk_bytes == 0 {
        return Err(CliError::usage("--max-chunk-bytes must be positive"));
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(ExitClass::Runtime, "Runtime", e.to_string()))?;
    rt.block_on(async {
        let server = start(&config).await?;
        let report = server.startup_report();
        for line in report.lines() {
            tracing::info!("{line}");
        }
        write_stdout(&report)?;
        termination_signal().await;
        tracing::info!("shutting down");
        server.shutdown().await;
        Ok(())
    })
}

/// The deviation report exactly as the compare module computes it.
pub fn deviation_report(catalog: &Catalog, a: &ReportArgs) -> Result<DeviationReport, CliError> {
    let pd = catalog.descriptor(&a.prescribed_id)?;
    let md = catalog.descriptor(&a.machine_id)?;
    if pd.kind != DatasetKind::Toolpath {
        return Err(CliError::data(
            "WrongKind",
            format!("{} is not a toolpath dataset", pd.id),
        ));
    }
    if md.kind != DatasetKind::Machine {
        return Err(CliError::data(
            "WrongKind",
            format!("{} is not a machine-log dataset", md.id),
        ));
    }
    if !(a.tolerance.is_finite() && a.tolerance > 0.0) {
        return Err(CliError::usage("--tolerance must be positive"));
    }
    let prescribed = catalog.load_toolpath(&pd.id)?;
    let machine = catalog.load_machine(&md.id)?;
    let mut config = DeviationConfig::new(pd.layer_params()?);
    config.tolerance_mm = a.tolerance;
    compute_deviation(&prescribed, &machine, &config, &catalog.transforms()?)
        .map_err(|e| CliError::data("Deviation", e.to_string()))
}

fn report(root: &Path, a: &ReportArgs) -> Result<(), CliError> {
    let catalog = Catalog::open(root)?;
    let r = deviation_report(&catalog, a)?;
    match &a.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            write_file(&dir.join("deviation.csv"), r.to_csv().as_bytes())?;
            write_file(&dir.join("summary.json"), r.summary_json().as_bytes())?;
            let regions = serde_json::to_string_pretty(&r.flagged_regions()).expect("json");
            write_file(&dir.join("regions.json"), regions.as_bytes())?;
            write_stdout(&format!("{}\n", r.summary_json()))
        }
        None => {
            write_stdout(&r.to_csv())?;
            eprintln!("{}", r.summary_json());
            Ok(())
        }
    }
}

fn parse_triple(name: &str, v: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<Option<usize>> = v.split(',').map(|s| s.trim().parse().ok()).collect();
    match parts.as_slice() {
        [Some(x), Some(y), Some(z)] => Ok([*x, *y, *z]),
        _ => Err(CliError::usage(format!(
            "--{name} must be three comma-separated voxel indices"
        ))),
    }
}

fn load_hierarchy(root: &Path, id: &str) -> Result<VolumeHierarchy, CliError> {
    let catalog = Catalog::open(root)?;
    let v = catalog.load_volume(id)?;
    build_hierarchy(&v, DEFAULT_BRICK_SIZE).map_err(|e| CliError::data("InvalidVolume", e.to_string()))
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::new(ExitClass::Usage, "InvalidParameter", e.to_string())
}

fn query_region_cmd(root: &Path, a: &RegionArgs) -> Result<(), CliError> {
    let h = load_hierarchy(root, &a.id)?;
    let dims = h.geometry().dims;
    let q = RegionQuery {
        min: a
            .min
            .as_deref()
            .map(|v| parse_triple("min", v))
            .transpose()?
            .unwrap_or([0; 3]),
        max: a
            .max
            .as_deref()
            .map(|v| parse_triple("max", v))
            .transpose()?
            .unwrap_or(dims.map(|d| d - 1)),
        level: a.level,
        filter_min: a.filter_min,
    };
    let sub = query_region(&h, &q).map_err(invalid)?;
    write_file(&a.out, &encode_subvolume(&sub))
}

fn query_slice_cmd(root: &Path, a: &SliceArgs) -> Result<(), CliError> {
    let axis = Axis::parse(&a.axis).ok_or_else(|| CliError::usage(format!("unknown axis {:?}", a.axis)))?;
    let h = load_hierarchy(root, &a.id)?;
    let window = match (a.window_center, a.window_width) {
        (Some(c), Some(w)) => Some(WindowLevel::new(c, w).map_err(invalid)?),
        _ => None,
    };
    let extent = h.level_dims(a.level).map_err(invalid)?[axis.fixed_axis()];
    let img = render_slice(&h, axis, a.index.unwrap_or(extent / 2), a.level, window).map_err(invalid)?;
    write_file(&a.out, &img.encode())
}
