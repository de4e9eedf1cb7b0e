// SPDX-License-Identifier: Apache-2.0

//! Test helpers: a recording HTTP/1.1 client that keeps the chunk framing,
//! and a demo bundle generated and ingested once per test binary.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use amdt_cli::catalog::Catalog;
use amdt_cli::demo;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

pub const DEMO_SEED: u64 = 42;

/// Response as seen on the wire.
#[derive(Debug)]
pub struct RawResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    /// Sizes of the transfer-encoding chunks, terminator excluded. Empty
    /// for non-chunked responses.
    pub chunks: Vec<usize>,
    pub chunked: bool,
}

impl RawResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("body is not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    /// The `parameter` named by a 4xx body.
    pub fn parameter(&self) -> String {
        self.json()["parameter"].as_str().expect("parameter field").to_string()
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub fn parse_response(buf: &[u8]) -> RawResponse {
    let head_end = find(buf, b"\r\n\r\n").expect("header terminator");
    let head = std::str::from_utf8(&buf[..head_end]).expect("ascii head");
    let mut lines = head.split("\r\n");
    let status_line = lines.next().unwrap();
    assert!(status_line.starts_with("HTTP/1.1 "), "{status_line}");
    let status = status_line[9..12].parse().unwrap();
    let headers: Vec<(String, String)> = lines
        .map(|l| {
            let (k, v) = l.split_once(':').expect("header line");
            (k.trim().to_string(), v.trim().to_string())
        })
        .collect();
    let mut rest = &buf[head_end + 4..];
    let chunked = headers
        .iter()
        .any(|(k, v)| k.eq_ignore_ascii_case("transfer-encoding") && v.eq_ignore_ascii_case("chunked"));
    let mut body = Vec::new();
    let mut chunks = Vec::new();
    if chunked {
        loop {
            let eol = find(rest, b"\r\n").expect("chunk size line");
            let size_text = std::str::from_utf8(&rest[..eol]).unwrap();
            let size = usize::from_str_radix(size_text.split(';').next().unwrap().trim(), 16).expect("hex size");
            rest = &rest[eol + 2..];
            if size == 0 {
                break;
            }
            body.extend_from_slice(&rest[..size]);
            chunks.push(size);
            assert_eq!(&rest[size..size + 2], b"\r\n", "chunk terminator");
            rest = &rest[size + 2..];
        }
    } else {
        body = rest.to_vec();
    }
    RawResponse {
        status,
        headers,
        body,
        chunks,
        chunked,
    }
}

/// GET over a fresh connection, reading until the server closes it.
pub async fn get(addr: SocketAddr, target: &str) -> RawResponse {
    let mut s = TcpStream::connect(addr).await.expect("connect");
    let req = format!("GET {target} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    parse_response(&buf)
}

fn tmp_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
}

/// The demo bundle directory for [`DEMO_SEED`].
pub fn demo_bundle() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tmp_root().join(format!("demo-bundle-{DEMO_SEED}"));
        let _ = std::fs::remove_dir_all(&dir);
        demo::generate(DEMO_SEED).write_to(&dir).unwrap();
        dir
    })
}

/// A data root holding the ingested demo bundle.
pub fn demo_root() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tmp_root().join(format!("demo-root-{DEMO_SEED}"));
        let _ = std::fs::remove_dir_all(&dir);
        let catalog = Catalog::create(&dir).unwrap();
        catalog.ingest_bundle(&demo_bundle().join(demo::BUNDLE_FILE)).unwrap();
        dir
    })
}

/// Writes `<dir>/<name>.json` + `<name>.raw` for a volume.
pub fn write_volume(dir: &Path, name: &str, dims: [usize; 3], dtype: &str, raw: &[u8]) -> PathBuf {
    let meta = serde_json::json!({
        "dims": dims, "spacing": [1.0, 1.0, 1.0], "origin": [0.0, 0.0, 0.0], "dtype": dtype, "id": name,
    });
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, meta.to_string()).unwrap();
    std::fs::write(dir.join(format!("{name}.raw")), raw).unwrap();
    path
}

pub fn id_of_kind(root: &Path, kind: &str) -> String {
    Catalog::open(root)
        .unwrap()
        .descriptors()
        .unwrap()
        .into_iter()
        .find(|d| d.kind.name() == kind)
        .unwrap_or_else(|| panic!("no {kind} dataset"))
        .id
}
