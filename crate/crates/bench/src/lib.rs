// SPDX-License-Identifier: Apache-2.0

//! Benchmark fixtures decoded from the in-memory demo bundle.

use amdt_cli::demo;
use amdt_core::compare::{DeviationConfig, LayerParams};
use amdt_core::ingest::{
    load_volume, parse_machine_log, parse_toolpath_program, MachineToolpath, PrescribedToolpath, VolumeDataset,
};
use amdt_core::sync::{ObjectTransform, Payload, SyncMessage};

pub struct Fixtures {
    pub volume: VolumeDataset,
    pub prescribed: PrescribedToolpath,
    pub machine: MachineToolpath,
    pub config: DeviationConfig,
}

pub fn fixtures(seed: u64) -> Fixtures {
    let bundle = demo::generate(seed);
    let file = |name: &str| &bundle.files[name];
    let meta = std::str::from_utf8(file(demo::VOLUME_META)).expect("utf-8 metadata");
    let layers = &bundle.manifest.layers;
    Fixtures {
        volume: load_volume(meta, file(demo::VOLUME_RAW)).expect("demo volume"),
        prescribed: parse_toolpath_program(std::str::from_utf8(file(demo::PROGRAM)).expect("utf-8 program"))
            .expect("demo program")
            .toolpath,
        machine: parse_machine_log(file(demo::MACHINE_LOG)).expect("demo log"),
        config: DeviationConfig::new(LayerParams::new(layers.layer_height_mm, layers.z0_mm).expect("layer params")),
    }
}

/// `clients` joins followed by round-robin transform and layer updates.
pub fn sync_workload(clients: usize, messages: usize) -> Vec<SyncMessage> {
    let mut out: Vec<SyncMessage> = (0..clients)
        .map(|c| {
            let join = Payload::Join {
                display_name: format!("user {c}"),
                spectator: false,
                session: None,
                color: None,
            };
            SyncMessage::new(format!("c{c}"), 1, join)
        })
        .collect();
    for i in clients..messages {
        let c = i % clients;
        let seq = (i / clients + 1) as u64;
        let msg = if i % 4 == 0 {
            SyncMessage::new(format!("c{c}"), seq, Payload::LayerUpdate { layer: (i % 32) as u32 })
        } else {
            let t = ObjectTransform {
                translation: [i as f64 * 0.01, 0.0, 0.0],
                rotation: [1.0, 0.0, 0.0, 0.0],
                scale: [1.0; 3],
            };
            SyncMessage::new(format!("c{c}"), seq, Payload::TransformUpdate(t)).with_object("volume")
        };
        out.push(msg);
    }
    out
}
