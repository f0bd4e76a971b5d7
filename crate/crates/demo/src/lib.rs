//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each entry point renders a small synthetic scene and returns RGBA
//! images plus a JSON summary. The computations live in plain functions so
//! they can be tested natively.

use nalgebra::{Point3, Vector3};
use wasm_bindgen::prelude::*;

use semfuse_core::consensus::{aggregate, VoteConfig};
use semfuse_core::eval::evaluate;
use semfuse_core::fusion::{extract_mesh, integrate_scene, TsdfConfig};
use semfuse_core::geometry::{Intrinsics, Pose};
use semfuse_core::gravity::{compute_alignment, residual_angle, rotate_quarter};
use semfuse_core::grid::Grid;
use semfuse_core::ingest::Frame;
use semfuse_core::labelspace::LabelMap;
use semfuse_core::render::{colorize, Colormap};
use semfuse_core::synth::{corrupt, orbit, render_frames, room, sphere_scene, Corruption, ROOM_CENTER};

/// Images with their sizes, and a JSON summary.
#[wasm_bindgen]
pub struct DemoOutput {
    images: Vec<(usize, usize, Vec<u8>)>,
    summary: String,
}

#[wasm_bindgen]
impl DemoOutput {
    pub fn count(&self) -> usize {
        self.images.len()
    }

    pub fn width(&self, i: usize) -> usize {
        self.images[i].0
    }

    pub fn height(&self, i: usize) -> usize {
        self.images[i].1
    }

    /// RGBA bytes of image `i`.
    pub fn rgba(&self, i: usize) -> Vec<u8> {
        self.images[i].2.clone()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

fn rgba(img: &Grid<[u8; 3]>) -> (usize, usize, Vec<u8>) {
    let (w, h) = img.dims();
    let bytes = img.as_slice().iter().flat_map(|c| [c[0], c[1], c[2], 255]).collect();
    (w, h, bytes)
}

fn camera() -> Intrinsics {
    Intrinsics::new(104.0, 104.0, 63.5, 47.5, 128, 96).expect("valid camera")
}

fn palette() -> Colormap {
    Colormap::default_for(10)
}

/// Camera in the middle of the room. Angles in degrees; yaw about the
/// vertical, pitch up from horizontal, roll about the viewing axis.
fn room_camera(yaw: f64, pitch: f64, roll: f64) -> Pose {
    let (y, p) = (yaw.to_radians(), pitch.clamp(-89.0, 89.0).to_radians());
    let eye = Vector3::from(ROOM_CENTER);
    let look = Vector3::new(y.cos() * p.cos(), y.sin() * p.cos(), p.sin());
    Pose::look_at(Point3::from(eye), Point3::from(eye + look), Vector3::z(), roll.to_radians(), 0.0)
}

/// Renders the room from a rolled camera, then turns the label image by the
/// quarter turn that brings the sky closest to image-up.
pub fn gravity(yaw: f64, pitch: f64, roll: f64) -> DemoOutput {
    let pose = room_camera(yaw, pitch, roll);
    let (_, labels) = room(0).render(&pose, &camera());
    let info = compute_alignment(&pose);
    let turned = rotate_quarter(&labels, info.k as i64).expect("k in range");
    let cmap = palette();
    let show = |g: &Grid<u16>| rgba(&colorize(&LabelMap::new(g.clone(), "room"), &cmap));
    DemoOutput {
        images: vec![show(&labels), show(&turned)],
        summary: serde_json::json!({
            "alpha_deg": info.alpha.to_degrees(),
            "k": info.k,
            "residual_deg": residual_angle(&info).to_degrees(),
        })
        .to_string(),
    }
}

const SWAPS: [(u16, u16); 5] = [(3, 4), (5, 6), (7, 8), (9, 10), (1, 2)];

/// Five simulated models corrupt the same ground-truth view; the weighted
/// vote recovers most of it.
pub fn consensus(noise: f64, min_votes: f64, seed: u64) -> DemoOutput {
    let pose = room_camera(30.0, -20.0, 0.0);
    let (_, gt) = room(0).render(&pose, &camera());
    let names: Vec<String> = (1..=SWAPS.len()).map(|i| format!("model {i}")).collect();
    let preds: Vec<(String, LabelMap)> = names
        .iter()
        .zip(SWAPS)
        .enumerate()
        .map(|(i, (name, pair))| {
            let c = Corruption {
                noise: noise.clamp(0.0, 1.0),
                swaps: vec![pair],
                classes: 10,
                offset: 0,
            };
            (name.clone(), LabelMap::new(corrupt(&gt, &c, seed.wrapping_add(i as u64), 0), "room"))
        })
        .collect();
    let cfg = VoteConfig::equal(&names).with_min_votes(min_votes.max(0.0));
    let fused = aggregate(&preds, &cfg).expect("maps share size and space").labels();
    let score = |lm: &LabelMap| evaluate(gt.as_slice(), lm.grid.as_slice(), None).map(|m| m.miou).unwrap_or(0.0);
    let cmap = palette();
    let mut images = vec![rgba(&colorize(&LabelMap::new(gt.clone(), "room"), &cmap))];
    images.extend(preds.iter().map(|(_, lm)| rgba(&colorize(lm, &cmap))));
    images.push(rgba(&colorize(&fused, &cmap)));
    let unlabeled = fused.grid.as_slice().iter().filter(|&&id| id == 0).count() as f64 / gt.as_slice().len() as f64;
    DemoOutput {
        images,
        summary: serde_json::json!({
            "model_miou": preds.iter().map(|(_, lm)| score(lm)).collect::<Vec<_>>(),
            "consensus_miou": score(&fused),
            "unlabeled_fraction": unlabeled,
        })
        .to_string(),
    }
}

/// Fuses a sphere of radius 0.5 m from `views` orbit cameras and shows the
/// TSDF on the slice through its center: blue inside, red outside, grey
/// where no camera looked.
pub fn tsdf_slice(voxel_mm: f64, views: usize) -> DemoOutput {
    let voxel = voxel_mm.clamp(8.0, 60.0) / 1000.0;
    let k = Intrinsics::new(90.0, 90.0, 47.5, 47.5, 96, 96).expect("valid camera");
    let c = Vector3::zeros();
    let frames: Vec<Frame> = render_frames(&sphere_scene(c, 0.5), &orbit(c, 1.5, 0.0, views.clamp(1, 36), 0.0), &k)
        .into_iter()
        .map(|f| f.0)
        .collect();
    let cfg = TsdfConfig {
        voxel_size: voxel,
        truncation: 4.0 * voxel,
        ..Default::default()
    };
    let vol = integrate_scene(&frames, &k, cfg).expect("sphere is visible");
    let mesh = extract_mesh(&vol);
    let rms = if mesh.vertices.is_empty() {
        f64::NAN
    } else {
        (mesh.vertices.iter().map(|v| (v.norm() - 0.5).powi(2)).sum::<f64>() / mesh.vertices.len() as f64).sqrt()
    };
    let [nx, ny, nz] = vol.dims();
    // slice nearest z = 0
    let kz = (((0.0 - vol.origin().z) / voxel - 0.5).round().max(0.0) as usize).min(nz - 1);
    let img = Grid::from_fn(nx, ny, |i, j| match vol.voxel(i, ny - 1 - j, kz) {
        Some((_, 0)) | None => [90, 90, 90],
        Some((d, _)) => {
            let t = (d.abs().min(1.0) * 255.0) as u8;
            if d < 0.0 {
                [255 - t, 255 - t, 255]
            } else {
                [255, 255 - t, 255 - t]
            }
        }
    });
    DemoOutput {
        images: vec![rgba(&img)],
        summary: serde_json::json!({
            "dims": [nx, ny, nz],
            "vertices": mesh.vertices.len(),
            "rms_mm": rms * 1000.0,
            "observed_voxels": vol.observed_voxels(),
        })
        .to_string(),
    }
}

#[wasm_bindgen(js_name = gravityDemo)]
pub fn gravity_demo(yaw: f64, pitch: f64, roll: f64) -> DemoOutput {
    gravity(yaw, pitch, roll)
}

#[wasm_bindgen(js_name = consensusDemo)]
pub fn consensus_demo(noise: f64, min_votes: f64, seed: u32) -> DemoOutput {
    consensus(noise, min_votes, seed as u64)
}

#[wasm_bindgen(js_name = tsdfDemo)]
pub fn tsdf_demo(voxel_mm: f64, views: u32) -> DemoOutput {
    tsdf_slice(voxel_mm, views as usize)
}
