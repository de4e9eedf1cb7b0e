// SPDX-License-Identifier: Apache-2.0

mod support;

use std::collections::BTreeSet;
use std::path::Path;

use amdt_cli::catalog::{Catalog, IngestOptions};
use amdt_cli::demo::{self, BundleManifest};
use amdt_cli::server::{start, RunningServer, ServeConfig};
use amdt_core::align::TransformSet;
use amdt_core::compare::{compute_deviation, DeviationConfig, LayerParams};
use amdt_core::ingest::{parse_machine_log, parse_toolpath_program, GrayImage};
use amdt_core::stream::decode_subvolume;
use amdt_core::volume::{build_hierarchy, query_region};
use amdt_core::RegionQuery;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use support::{demo_bundle, demo_root, get, id_of_kind, write_volume};

async fn serve(root: &Path, max_chunk: usize) -> RunningServer {
    let mut config = ServeConfig::ephemeral(root);
    config.max_chunk_bytes = max_chunk;
    start(&config).await.expect("server starts")
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_root_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let s = serve(dir.path(), 1 << 20).await;
    let r = get(s.http_addr, "/datasets").await;
    assert_eq!(r.status, 200);
    assert!(r.chunked);
    assert_eq!(r.json(), serde_json::json!([]));
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn volume_and_toolpath_descriptors() {
    let inputs = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let vol = write_volume(inputs.path(), "cube", [4, 4, 4], "uint8", &[9u8; 64]);
    let gcode = inputs.path().join("part.gcode");
    std::fs::write(&gcode, "G0 X0 Y0 Z0.1\nG1 X10 F30\n").unwrap();
    Catalog::create(root.path())
        .unwrap()
        .ingest_paths(&[vol, gcode], &IngestOptions::default())
        .unwrap();
    let s = serve(root.path(), 1 << 20).await;
    let list = get(s.http_addr, "/datasets").await.json();
    let kinds: BTreeSet<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, BTreeSet::from(["toolpath", "volume"]));
    for d in list.as_array().unwrap() {
        assert!(d["id"].as_str().unwrap().starts_with(d["kind"].as_str().unwrap()));
    }
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn demo_descriptors_match_manifest() {
    let manifest: BundleManifest =
        serde_json::from_slice(&std::fs::read(demo_bundle().join(demo::BUNDLE_FILE)).unwrap()).unwrap();
    let s = serve(demo_root(), 1 << 20).await;
    let list = get(s.http_addr, "/datasets").await.json();
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 4);
    let by_kind = |k: &str| list.iter().find(|d| d["kind"] == k).unwrap().clone();
    let v = by_kind("volume");
    assert_eq!(
        v["meta"]["dims"],
        serde_json::json!([demo::GRID, demo::GRID, demo::GRID])
    );
    assert_eq!(v["meta"]["dtype"], "uint8");
    let images = by_kind("images");
    assert_eq!(
        images["meta"]["layers"].as_array().unwrap().len(),
        manifest.layers.count as usize
    );
    let (t, m) = (by_kind("toolpath"), by_kind("machine"));
    assert_eq!(t["meta"]["pair"], m["id"]);
    assert_eq!(m["meta"]["pair"], t["id"]);
    assert_eq!(m["meta"]["samples"], manifest.ground_truth.machine_samples);
    assert_eq!(t["meta"]["layer_height_mm"], manifest.layers.layer_height_mm);
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn full_volume_is_the_source_file_in_bounded_chunks() {
    let raw = std::fs::read(demo_bundle().join(demo::VOLUME_RAW)).unwrap();
    let id = id_of_kind(demo_root(), "volume");
    for max_chunk in [1 << 20, 65_536, 1000] {
        let s = serve(demo_root(), max_chunk).await;
        let r = get(s.http_addr, &format!("/datasets/{id}/volume?level=0")).await;
        assert_eq!(r.status, 200);
        assert!(r.chunked);
        assert!(
            r.chunks.iter().all(|&c| c <= max_chunk),
            "max chunk {:?}",
            r.chunks.iter().max()
        );
        let (header, payload) = decode_subvolume(&r.body).unwrap();
        assert_eq!(header.dims, [demo::GRID; 3]);
        assert_eq!(Sha256::digest(payload), Sha256::digest(&raw));
        s.shutdown().await;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn volume_errors_name_the_parameter() {
    let id = id_of_kind(demo_root(), "volume");
    let s = serve(demo_root(), 1 << 20).await;
    let cases = [
        ("level=8", 400, "level"),
        ("level=x", 400, "level"),
        ("min=0,0", 400, "min"),
        ("min=200,0,0", 400, "min"),
        ("max=1,2,128", 400, "max"),
        ("min=5,5,5&max=4,9,9", 400, "min"),
        ("filter_min=nan", 400, "filter_min"),
        ("filter_min=abc", 400, "filter_min"),
    ];
    for (q, status, param) in cases {
        let r = get(s.http_addr, &format!("/datasets/{id}/volume?{q}")).await;
        assert_eq!((r.status, r.parameter()), (status, param.to_string()), "{q}");
    }
    let r = get(s.http_addr, "/datasets/nope/volume").await;
    assert_eq!((r.status, r.parameter()), (404, "id".to_string()));
    let tp = id_of_kind(demo_root(), "toolpath");
    let r = get(s.http_addr, &format!("/datasets/{tp}/volume")).await;
    assert_eq!((r.status, r.parameter()), (404, "id".to_string()));
    let r = get(s.http_addr, "/nowhere").await;
    assert_eq!(r.status, 404);
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn random_regions_match_local_queries() {
    let catalog = Catalog::open(demo_root()).unwrap();
    let id = id_of_kind(demo_root(), "volume");
    let h = build_hierarchy(&catalog.load_volume(&id).unwrap(), 32).unwrap();
    let s = serve(demo_root(), 4096).await;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let mut min = [0; 3];
        let mut max = [0; 3];
        for a in 0..3 {
            let x = rng.random_range(0..128);
            let y = rng.random_range(0..128);
            (min[a], max[a]) = (x.min(y), x.max(y));
        }
        let level = rng.random_range(0..4);
        let filter = rng.random_bool(0.3).then(|| rng.random_range(0.0..200.0_f64).round());
        let mut target = format!(
            "/datasets/{id}/volume?level={level}&min={},{},{}&max={},{},{}",
            min[0], min[1], min[2], max[0], max[1], max[2]
        );
        if let Some(f) = filter {
            target += &format!("&filter_min={f}");
        }
        let r = get(s.http_addr, &target).await;
        assert_eq!(r.status, 200, "{target}");
        let local = query_region(
            &h,
            &RegionQuery {
                min,
                max,
                level,
                filter_min: filter,
            },
        )
        .unwrap();
        let (header, payload) = decode_subvolume(&r.body).unwrap();
        assert_eq!(header.dims, local.dims);
        assert_eq!(payload, local.to_le_bytes().as_slice(), "{target}");
    }
    s.shutdown().await;
}

/// Window mapping written out independently: clamp((v - lower) / width)
/// scaled to 0..255, rounding half up.
fn reference_gray(v: f64, center: f64, width: f64) -> u8 {
    let g = ((v - (center - width / 2.0)) / width).clamp(0.0, 1.0);
    (g * 255.0 + 0.5).floor() as u8
}

#[tokio::test(flavor = "multi_thread")]
async fn slice_window_examples_and_ramp_reference() {
    let inputs = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let constant = write_volume(inputs.path(), "seven", [8, 8, 8], "uint8", &[7u8; 512]);
    // Ramp: value = x + 10 y + 50 z.
    let dims = [16usize, 12, 5];
    let mut ramp = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                ramp.extend_from_slice(&((x + 10 * y + 50 * z) as u16).to_le_bytes());
            }
        }
    }
    let ramp_path = write_volume(inputs.path(), "ramp", dims, "uint16", &ramp);
    let catalog = Catalog::create(root.path()).unwrap();
    let c = catalog.ingest_volume(&constant).unwrap().id;
    let rp = catalog.ingest_volume(&ramp_path).unwrap().id;
    let s = serve(root.path(), 1 << 20).await;

    let r = get(
        s.http_addr,
        &format!("/datasets/{c}/slice?axis=axial&index=3&window_center=7&window_width=1"),
    )
    .await;
    assert_eq!(r.status, 200);
    assert_eq!(r.header("content-type"), Some("image/x-portable-graymap"));
    let img = GrayImage::decode(&r.body).unwrap();
    assert_eq!((img.width, img.height), (8, 8));
    assert!(img.pixels.iter().all(|&p| p == 128));
    for (center, expect) in [(-100.0, 255u8), (500.0, 0u8)] {
        let r = get(
            s.http_addr,
            &format!("/datasets/{c}/slice?index=0&window_center={center}&window_width=10"),
        )
        .await;
        assert!(GrayImage::decode(&r.body).unwrap().pixels.iter().all(|&p| p == expect));
    }

    let (center, width) = (120.0, 230.0);
    for (axis, index) in [("axial", 2usize), ("coronal", 7), ("sagittal", 11)] {
        let r = get(
            s.http_addr,
            &format!("/datasets/{rp}/slice?axis={axis}&index={index}&window_center={center}&window_width={width}"),
        )
        .await;
        assert_eq!(r.status, 200);
        let img = GrayImage::decode(&r.body).unwrap();
        let mut expected = Vec::new();
        match axis {
            "axial" => {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        expected.push(reference_gray((x + 10 * y + 50 * index) as f64, center, width));
                    }
                }
            }
            "coronal" => {
                for z in 0..dims[2] {
                    for x in 0..dims[0] {
                        expected.push(reference_gray((x + 10 * index + 50 * z) as f64, center, width));
                    }
                }
            }
            _ => {
                for z in 0..dims[2] {
                    for y in 0..dims[1] {
                        expected.push(reference_gray((index + 10 * y + 50 * z) as f64, center, width));
                    }
                }
            }
        }
        assert_eq!(img.pixels, expected, "{axis}");
    }

    let cases = [
        ("index=5&axis=axial", "index"),
        ("axis=oblique", "axis"),
        ("level=9", "level"),
        ("window_center=3", "window_width"),
        ("window_width=3", "window_center"),
        ("window_center=3&window_width=0", "window_width"),
        ("window_center=inf&window_width=2", "window_center"),
        ("index=-1", "index"),
    ];
    for (q, param) in cases {
        let r = get(s.http_addr, &format!("/datasets/{rp}/slice?{q}")).await;
        assert_eq!((r.status, r.parameter()), (400, param.to_string()), "{q}");
    }
    s.shutdown().await;
}

fn write_pair(dir: &Path, program: &str, csv: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let p = dir.join("part.gcode");
    let m = dir.join("log.csv");
    std::fs::write(&p, program).unwrap();
    std::fs::write(&m, csv).unwrap();
    (p, m)
}

#[tokio::test(flavor = "multi_thread")]
async fn toolpath_layers_and_error_overlay() {
    let inputs = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let program = "G0 X0 Y0 Z0.1\nG1 Y10 F30\nG1 X5\n";
    let mut csv = String::from("t,x,y,z\n");
    for i in 0..=40 {
        // Second half runs 0.3 mm off the first leg.
        let x = if i > 20 { 0.3 } else { 0.0 };
        csv += &format!("{},{x},{},0.1\n", i as f64 * 0.01, i as f64 * 0.2);
    }
    let (p, m) = write_pair(inputs.path(), program, &csv);
    let catalog = Catalog::create(root.path()).unwrap();
    let ids = catalog.ingest_paths(&[p, m], &IngestOptions::default()).unwrap();
    let tp = ids.iter().find(|d| d.kind.name() == "toolpath").unwrap().id.clone();
    let mp = ids.iter().find(|d| d.kind.name() == "machine").unwrap().id.clone();
    // A lone toolpath, for the 409 case.
    let lone = inputs.path().join("lone.nc");
    std::fs::write(&lone, "G1 X1 Y1 Z0.1\n").unwrap();
    let lone_id = catalog.ingest_toolpath(&lone, &IngestOptions::default()).unwrap().id;

    let s = serve(root.path(), 256).await;
    let r = get(s.http_addr, &format!("/datasets/{tp}/toolpath?layer=0&kind=prescribed")).await;
    assert_eq!(r.status, 200);
    assert!(r.chunks.iter().all(|&c| c <= 256));
    let body = r.json();
    assert_eq!(body["layer"], 0);
    assert_eq!(
        body["polylines"],
        serde_json::json!([[[0.0, 0.0, 0.0], [0.0, 0.0, 0.1], [0.0, 10.0, 0.1], [5.0, 10.0, 0.1]]])
    );

    let r = get(s.http_addr, &format!("/datasets/{mp}/toolpath?layer=0&kind=machine")).await;
    assert_eq!(r.json()["polylines"][0].as_array().unwrap().len(), 41);

    let r = get(
        s.http_addr,
        &format!("/datasets/{tp}/toolpath?layer=0&kind=error&tolerance=0.1"),
    )
    .await;
    assert_eq!(r.status, 200);
    let flagged: Vec<bool> = r.json()["flagged"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_bool().unwrap())
        .collect();
    let report = compute_deviation(
        &parse_toolpath_program(program).unwrap().toolpath,
        &parse_machine_log(csv.as_bytes()).unwrap(),
        &DeviationConfig::new(LayerParams::new(0.25, 0.0).unwrap()),
        &TransformSet::new(),
    )
    .unwrap();
    let local: Vec<bool> = report.samples.iter().map(|s| s.flagged).collect();
    assert_eq!(flagged, local);
    assert_eq!(flagged.iter().filter(|&&f| f).count(), 20);

    // Same body when asked through the machine id, and byte-identical on repeat.
    let a = get(s.http_addr, &format!("/datasets/{mp}/toolpath?layer=0&kind=error")).await;
    let b = get(s.http_addr, &format!("/datasets/{mp}/toolpath?layer=0&kind=error")).await;
    assert_eq!(a.body, b.body);
    assert_eq!(a.json()["flagged"][0].as_array().unwrap().len(), 41);

    let cases = [
        (format!("/datasets/{tp}/toolpath?layer=0&kind=bogus"), 400, "kind"),
        (format!("/datasets/{tp}/toolpath?kind=prescribed"), 400, "layer"),
        (format!("/datasets/{tp}/toolpath?layer=zero"), 400, "layer"),
        (format!("/datasets/{tp}/toolpath?layer=7"), 404, "layer"),
        (
            format!("/datasets/{tp}/toolpath?layer=0&kind=error&tolerance=-1"),
            400,
            "tolerance",
        ),
        (format!("/datasets/{lone_id}/toolpath?layer=0&kind=error"), 409, "kind"),
        (
            format!("/datasets/{lone_id}/toolpath?layer=0&kind=machine"),
            409,
            "kind",
        ),
        ("/datasets/unknown/toolpath?layer=0".to_string(), 404, "id"),
    ];
    for (target, status, param) in cases {
        let r = get(s.http_addr, &target).await;
        assert_eq!((r.status, r.parameter()), (status, param.to_string()), "{target}");
    }
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_paths_flag_nothing() {
    let inputs = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,x,y,z\n");
    for i in 0..=10 {
        csv += &format!("{},{},0,0.1\n", i as f64 * 0.1, i as f64);
    }
    let (p, m) = write_pair(inputs.path(), "G0 X0 Y0 Z0.1\nG1 X10\n", &csv);
    let catalog = Catalog::create(root.path()).unwrap();
    let ids = catalog.ingest_paths(&[p, m], &IngestOptions::default()).unwrap();
    let s = serve(root.path(), 1 << 20).await;
    let r = get(
        s.http_addr,
        &format!("/datasets/{}/toolpath?layer=0&kind=error", ids[0].id),
    )
    .await;
    let body = r.json();
    assert!(body["flagged"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|l| l.as_array().unwrap())
        .all(|f| f == false));
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_error_requests_share_one_report() {
    let tp = id_of_kind(demo_root(), "toolpath");
    let s = serve(demo_root(), 1 << 20).await;
    let addr = s.http_addr;
    let target = format!("/datasets/{tp}/toolpath?layer={}&kind=error", demo::DISPLACED_LAYER);
    let tasks: Vec<_> = (0..6)
        .map(|_| {
            let t = target.clone();
            tokio::spawn(async move { get(addr, &t).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        bodies.push(t.await.unwrap().body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    let body: serde_json::Value = serde_json::from_slice(&bodies[0]).unwrap();
    let flagged = body["flagged"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|l| l.as_array().unwrap())
        .filter(|f| **f == true)
        .count();
    let manifest: BundleManifest =
        serde_json::from_slice(&std::fs::read(demo_bundle().join(demo::BUNDLE_FILE)).unwrap()).unwrap();
    assert_eq!(flagged, manifest.ground_truth.flagged_samples);
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn layer_images_round_trip_byte_identical() {
    let id = id_of_kind(demo_root(), "images");
    let s = serve(demo_root(), 5000).await;
    for layer in 0..demo::LAYERS {
        let r = get(s.http_addr, &format!("/datasets/{id}/layers/{layer}/image")).await;
        assert_eq!(r.status, 200);
        assert!(r.chunks.iter().all(|&c| c <= 5000));
        let source = std::fs::read(demo_bundle().join(format!("images/layer_{layer:03}.pgm"))).unwrap();
        assert_eq!(Sha256::digest(&r.body), Sha256::digest(&source), "layer {layer}");
    }
    let r = get(s.http_addr, &format!("/datasets/{id}/layers/{}/image", demo::LAYERS)).await;
    assert_eq!((r.status, r.parameter()), (404, "layer".to_string()));
    let r = get(s.http_addr, &format!("/datasets/{id}/layers/x/image")).await;
    assert_eq!((r.status, r.parameter()), (400, "layer".to_string()));
    let r = get(s.http_addr, "/datasets/none/layers/0/image").await;
    assert_eq!((r.status, r.parameter()), (404, "id".to_string()));
    s.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_queries_get_named_4xx() {
    let vol = id_of_kind(demo_root(), "volume");
    let tp = id_of_kind(demo_root(), "toolpath");
    let s = serve(demo_root(), 1 << 20).await;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let keys = [
        "level",
        "min",
        "max",
        "filter_min",
        "axis",
        "index",
        "window_center",
        "window_width",
        "layer",
        "kind",
        "tolerance",
    ];
    let junk = [
        "",
        "%zz",
        "-1",
        "1e999",
        "NaN",
        "1,2",
        "1,2,3,4",
        "%00",
        "999999999999999999999",
        "a%20b",
        "🙂",
    ];
    for _ in 0..150 {
        let endpoint = ["volume", "slice", "toolpath"][rng.random_range(0..3)];
        let id = if endpoint == "toolpath" { &tp } else { &vol };
        let mut q = String::new();
        for _ in 0..rng.random_range(1..4) {
            let k = keys[rng.random_range(0..keys.len())];
            let v = junk[rng.random_range(0..junk.len())];
            q += &format!("{k}={v}&");
        }
        let r = get(s.http_addr, &format!("/datasets/{id}/{endpoint}?{q}")).await;
        if r.status != 200 {
            assert!((400..500).contains(&r.status), "{endpoint}?{q}: {}", r.status);
            assert!(!r.parameter().is_empty());
        }
    }
    // Still serving.
    assert_eq!(get(s.http_addr, "/datasets").await.status, 200);
    s.shutdown().await;
}
