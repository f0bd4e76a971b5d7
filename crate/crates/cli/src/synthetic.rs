//! Synthetic scene generation and the stand-in segmentation model used by
//! its pipeline.json.

use std::collections::HashMap;
use std::path::Path;

use semfuse_core::error::{Error, Result};
use semfuse_core::fusion::TsdfConfig;
use semfuse_core::ingest::{SyncManifest, SYNCED_DIR};
use semfuse_core::io;
use semfuse_core::labelspace::{write_label_space, LabelClass, LabelSpace};
use semfuse_core::orchestrator::{default_graph, OutputMapping, TaskKind, TaskSpec};
use semfuse_core::pipeline::{FusionSettings, PipelineConfig, CONFIG_FILE};
use semfuse_core::ply;
use semfuse_core::render::Colormap;
use semfuse_core::synth::{corrupt, write_room_recording, Corruption, RecordingConfig, SynthScene};
use semfuse_core::votes::Vote;

/// Seed and swapped class pair for each simulated model. The pairs are
/// disjoint, so every class is confused by at most one model.
const MODELS: [(&str, u64, (u16, u16)); 5] = [
    ("gsam", 11, (3, 4)),
    ("mask3d", 12, (5, 6)),
    ("ovseg", 13, (7, 8)),
    ("internimage", 14, (9, 10)),
    ("cmx", 15, (1, 2)),
];

/// ovseg emits ids in its own space, shifted by this much.
const OVSEG_OFFSET: u16 = 100;

fn synthetic_config() -> PipelineConfig {
    let tasks: Vec<TaskSpec> = default_graph()
        .tasks()
        .iter()
        .cloned()
        .map(|mut t| {
            if let TaskKind::External {
                command, mapping, ..
            } = &mut t.kind
            {
                if let Some(&(name, seed, (a, b))) = MODELS.iter().find(|m| m.0 == t.name) {
                    *command = format!(
                        "{{exe}} simulate-model --input {{input_dir}} --output {{output_dir}} \
                         --colormap {{scene_dir}}/colormap.csv --seed {seed} --swap {a}:{b}"
                    );
                    if name == "ovseg" {
                        command.push_str(&format!(" --offset {OVSEG_OFFSET}"));
                        *mapping = Some(OutputMapping {
                            csv: "spaces/ovseg_mapping.csv".into(),
                            source_space: "spaces/ovseg.csv".into(),
                            target_space: "label_space.csv".into(),
                        });
                    }
                } else {
                    // omnidata, hha: auxiliary outputs the vote never reads
                    *command = "cp {input_dir}/*.png {output_dir}/".into();
                }
            }
            t
        })
        .collect();
    PipelineConfig {
        tasks: Some(tasks),
        colormap: Some("colormap.csv".into()),
        fusion: FusionSettings {
            tsdf: TsdfConfig {
                voxel_size: 0.02,
                truncation: 0.08,
                ..Default::default()
            },
            downsample: 0.04,
        },
        ..Default::default()
    }
}

pub fn synth(out: &Path, seed: u64, frames: usize) -> Result<bool> {
    if frames < 2 {
        return Err(Error::InvalidInput("need at least two frames".into()));
    }
    let cfg = RecordingConfig {
        seed,
        color_frames: frames,
        ..Default::default()
    };
    let scene = write_room_recording(out, &cfg)?;
    let ovseg = LabelSpace::new(
        "ovseg",
        scene
            .class_names
            .iter()
            .enumerate()
            .map(|(i, n)| LabelClass {
                id: OVSEG_OFFSET + i as u16 + 1,
                name: n.clone(),
                synkey: None,
            })
            .collect(),
    )?;
    io::ensure_dir(&out.join("spaces"))?;
    write_label_space(&ovseg, &out.join("spaces/ovseg.csv"))?;
    let mut mapping = String::from("source_id,target_id\n");
    for i in 1..=scene.class_names.len() as u16 {
        mapping += &format!("{},{}\n", OVSEG_OFFSET + i, i);
    }
    io::write_atomic(&out.join("spaces/ovseg_mapping.csv"), mapping.as_bytes())?;
    io::write_json(&out.join(CONFIG_FILE), &synthetic_config())?;
    Ok(true)
}

/// Writes `gt_cloud.ply` (cloud.ply labeled by the analytic scene) and
/// `gt/synced/%06d.png` (ground truth re-indexed to synchronized frames).
pub fn synth_gt(scene_dir: &Path) -> Result<bool> {
    let desc = scene_dir.join("synth.json");
    let cloud_path = scene_dir.join("cloud.ply");
    let manifest_path = scene_dir.join(SYNCED_DIR).join("sync.json");
    for p in [&desc, &cloud_path, &manifest_path] {
        if !p.exists() {
            return Err(Error::Missing(p.to_path_buf()));
        }
    }
    let scene: SynthScene = io::read_json(&desc)?;
    let mut cloud = ply::read_labeled_cloud(&cloud_path, "synthetic_room")?;
    cloud.top1 = cloud
        .points
        .iter()
        .map(|p| Vote {
            id: scene.label_at(p),
            count: 1,
        })
        .collect();
    cloud.top2 = vec![Vote::default(); cloud.len()];
    ply::write_labeled_cloud(&scene_dir.join("gt_cloud.ply"), &cloud)?;
    let manifest: SyncManifest = io::read_json(&manifest_path)?;
    let out = scene_dir.join("gt/synced");
    io::ensure_dir(&out)?;
    for (i, src) in manifest.source_color.iter().enumerate() {
        let from = scene_dir.join("gt/labels").join(io::frame_name(*src, "png"));
        if !from.exists() {
            return Err(Error::Missing(from));
        }
        std::fs::copy(&from, out.join(io::frame_name(i, "png"))).map_err(Error::io(&from))?;
    }
    Ok(true)
}

pub fn simulate_model(
    input: &Path,
    output: &Path,
    colormap: &Path,
    seed: u64,
    noise: f64,
    swaps: Vec<(u16, u16)>,
    offset: u16,
) -> Result<bool> {
    for p in [input, colormap] {
        if !p.exists() {
            return Err(Error::Missing(p.to_path_buf()));
        }
    }
    let cmap = Colormap::load(colormap)?;
    let classes = cmap.max_id();
    let lookup: HashMap<[u8; 3], u16> = (0..=classes).map(|id| (cmap.color(id), id)).collect();
    let c = Corruption {
        noise,
        swaps,
        classes,
        offset,
    };
    io::ensure_dir(output)?;
    for (i, p) in io::list_frames(input, "png")? {
        let rgb = io::read_rgb_png(&p)?;
        let gt = rgb.map(|px| lookup.get(px).copied().unwrap_or(0));
        io::write_u16_png(&output.join(io::frame_name(i, "png")), &corrupt(&gt, &c, seed, i))?;
    }
    Ok(true)
}
