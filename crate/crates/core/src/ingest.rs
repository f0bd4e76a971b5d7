//! Multi-rate recording ingest: nearest-in-time depth matching, depth
//! resizing, and pose interpolation at color timestamps.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{Quaternion, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::gravity::GravityInfo;
use crate::grid::DepthGrid;
use crate::io;

#[derive(Debug, Clone)]
pub struct ColorSample {
    pub timestamp: f64,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct DepthSample {
    pub timestamp: f64,
    pub depth: DepthGrid,
}

#[derive(Debug, Clone)]
pub struct RawRecording {
    pub color: Vec<ColorSample>,
    pub depth: Vec<DepthSample>,
    pub poses: Vec<Pose>,
    pub color_intrinsics: Intrinsics,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    pub color: Option<PathBuf>,
    pub depth: DepthGrid,
    pub pose: Pose,
    pub gravity: Option<GravityInfo>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub frames: Vec<Frame>,
    pub intrinsics: Intrinsics,
    pub mesh: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

/// One color frame matched to its depth frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub color_index: usize,
    pub depth_index: usize,
    pub timestamp: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncPlan {
    pub matches: Vec<FrameMatch>,
    /// Color indices outside pose coverage.
    pub dropped: Vec<usize>,
    pub max_gap: f64,
}

fn check_increasing(name: &str, ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        return Err(Error::Sync(format!("{name} stream is empty")));
    }
    if let Some(w) = ts.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Sync(format!(
            "{name} timestamps not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Index of the sample nearest to `t`; exact ties go to the earlier sample.
pub fn nearest_index(ts: &[f64], t: f64) -> usize {
    let i = ts.partition_point(|&x| x < t);
    if i == 0 {
        return 0;
    }
    if i == ts.len() {
        return ts.len() - 1;
    }
    if t - ts[i - 1] <= ts[i] - t {
        i - 1
    } else {
        i
    }
}

/// Pairs each color timestamp with the nearest depth timestamp, dropping
/// color frames outside `[pose_ts[0], pose_ts[last]]`.
pub fn plan_sync(color_ts: &[f64], depth_ts: &[f64], pose_ts: &[f64]) -> Result<SyncPlan> {
    check_increasing("color", color_ts)?;
    check_increasing("depth", depth_ts)?;
    check_increasing("pose", pose_ts)?;
    let (lo, hi) = (pose_ts[0], pose_ts[pose_ts.len() - 1]);
    let mut matches = Vec::with_capacity(color_ts.len());
    let mut dropped = Vec::new();
    for (ci, &t) in color_ts.iter().enumerate() {
        if t < lo || t > hi || pose_ts.len() < 2 && t != lo {
            dropped.push(ci);
            continue;
        }
        let di = nearest_index(depth_ts, t);
        matches.push(FrameMatch {
            color_index: ci,
            depth_index: di,
            timestamp: t,
            gap: (depth_ts[di] - t).abs(),
        });
    }
    if matches.is_empty() {
        return Err(Error::Sync(format!(
            "no color frame inside pose coverage [{lo}, {hi}]"
        )));
    }
    if !dropped.is_empty() {
        warn!(
            "dropping {} color frames outside pose coverage [{lo}, {hi}]",
            dropped.len()
        );
    }
    let max_gap = matches.iter().map(|m| m.gap).fold(0.0, f64::max);
    Ok(SyncPlan {
        matches,
        dropped,
        max_gap,
    })
}

/// Nearest-neighbor resize. Output pixel centers map back onto the source
/// grid, so every output value is a source value.
pub fn resize_depth(depth: &DepthGrid, target_w: usize, target_h: usize) -> Result<DepthGrid> {
    let (sw, sh) = depth.dims();
    if sw == 0 || sh == 0 {
        return Err(Error::InvalidInput("source depth has zero size".into()));
    }
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidInput("target depth size must be positive".into()));
    }
    let src_x: Vec<usize> = (0..target_w)
        .map(|x| (((x as f64 + 0.5) * sw as f64 / target_w as f64) as usize).min(sw - 1))
        .collect();
    let src_y: Vec<usize> = (0..target_h)
        .map(|y| (((y as f64 + 0.5) * sh as f64 / target_h as f64) as usize).min(sh - 1))
        .collect();
    Ok(DepthGrid::from_fn(target_w, target_h, |x, y| {
        *depth.get(src_x[x], src_y[y])
    }))
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let a = q0.into_inner();
    let mut b = q1.into_inner();
    let mut dot = a.coords.dot(&b.coords);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-12 {
        a.coords * (1.0 - s) + b.coords * s
    } else {
        let theta = dot.min(1.0).acos();
        let sin = theta.sin();
        a.coords * (((1.0 - s) * theta).sin() / sin) + b.coords * ((s * theta).sin() / sin)
    };
    UnitQuaternion::from_quaternion(Quaternion::from(coords))
}

/// Pose at time `t`: slerp on rotation and linear on translation between the
/// two bracketing samples. Sample times return the sample itself.
pub fn interpolate_pose(poses: &[Pose], t: f64) -> Result<Pose> {
    if poses.len() < 2 {
        return Err(Error::Pose(format!(
            "need at least 2 poses, got {}",
            poses.len()
        )));
    }
    let (first, last) = (poses[0].timestamp, poses[poses.len() - 1].timestamp);
    if !(t >= first && t <= last) {
        return Err(Error::Pose(format!("t = {t} outside [{first}, {last}]")));
    }
    let i = poses.partition_point(|p| p.timestamp < t);
    if poses[i].timestamp == t {
        return Ok(poses[i]);
    }
    let (p0, p1) = (&poses[i - 1], &poses[i]);
    let s = (t - p0.timestamp) / (p1.timestamp - p0.timestamp);
    Ok(Pose::new(
        slerp(&p0.rotation, &p1.rotation, s),
        p0.translation.lerp(&p1.translation, s),
        t,
    ))
}

fn pose_times(poses: &[Pose]) -> Vec<f64> {
    poses.iter().map(|p| p.timestamp).collect()
}

fn pose_at(poses: &[Pose], t: f64) -> Result<Pose> {
    if poses.len() == 1 {
        let mut p = poses[0];
        p.timestamp = t;
        return Ok(p);
    }
    interpolate_pose(poses, t)
}

/// In-memory synchronization. Returns the scene and the plan it followed.
pub fn synchronize(id: &str, raw: &RawRecording) -> Result<(Scene, SyncPlan)> {
    let color_ts: Vec<f64> = raw.color.iter().map(|c| c.timestamp).collect();
    let depth_ts: Vec<f64> = raw.depth.iter().map(|d| d.timestamp).collect();
    let plan = plan_sync(&color_ts, &depth_ts, &pose_times(&raw.poses))?;
    let k = raw.color_intrinsics;
    let frames = plan
        .matches
        .par_iter()
        .enumerate()
        .map(|(index, m)| {
            Ok(Frame {
                index,
                timestamp: m.timestamp,
                color: raw.color[m.color_index].path.clone(),
                depth: resize_depth(&raw.depth[m.depth_index].depth, k.width, k.height)?,
                pose: pose_at(&raw.poses, m.timestamp)?,
                gravity: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Scene {
            id: id.to_owned(),
            frames,
            intrinsics: k,
            mesh: None,
            ground_truth: None,
        },
        plan,
    ))
}

/// Per-stream timestamps of a raw recording directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamTimestamps {
    pub color: Vec<f64>,
    pub depth: Vec<f64>,
    pub pose: Vec<f64>,
}

/// Written next to the synchronized frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncManifest {
    pub frames: usize,
    pub timestamps: Vec<f64>,
    pub source_color: Vec<usize>,
    pub source_depth: Vec<usize>,
    pub dropped: Vec<usize>,
    pub max_gap: f64,
}

pub const SYNCED_DIR: &str = "synced";

/// Reads a raw recording directory and writes `synced/` beside it.
pub fn sync_directory(scene_dir: &Path) -> Result<SyncManifest> {
    let ts: StreamTimestamps = io::read_json(&scene_dir.join("timestamps.json"))?;
    let k = io::read_intrinsics(&scene_dir.join("intrinsics.txt"))?;
    let poses = ts
        .pose
        .iter()
        .enumerate()
        .map(|(i, &t)| io::read_pose(&scene_dir.join("pose").join(io::frame_name(i, "txt")), t))
        .collect::<Result<Vec<_>>>()?;
    let plan = plan_sync(&ts.color, &ts.depth, &ts.pose)?;
    let out = scene_dir.join(SYNCED_DIR);
    for sub in ["color", "depth", "pose"] {
        io::ensure_dir(&out.join(sub))?;
    }
    plan.matches
        .par_iter()
        .enumerate()
        .try_for_each(|(index, m)| -> Result<()> {
            let src_color = scene_dir.join("color").join(io::frame_name(m.color_index, "png"));
            let dst_color = out.join("color").join(io::frame_name(index, "png"));
            fs::copy(&src_color, &dst_color).map_err(Error::io(&src_color))?;
            let depth =
                io::read_depth_png(&scene_dir.join("depth").join(io::frame_name(m.depth_index, "png")))?;
            let depth = resize_depth(&depth, k.width, k.height)?;
            io::write_depth_png(&out.join("depth").join(io::frame_name(index, "png")), &depth)?;
            let pose = pose_at(&poses, m.timestamp)?;
            io::write_pose(&out.join("pose").join(io::frame_name(index, "txt")), &pose)
        })?;
    io::write_intrinsics(&out.join("intrinsics.txt"), &k)?;
    let manifest = SyncManifest {
        frames: plan.matches.len(),
        timestamps: plan.matches.iter().map(|m| m.timestamp).collect(),
        source_color: plan.matches.iter().map(|m| m.color_index).collect(),
        source_depth: plan.matches.iter().map(|m| m.depth_index).collect(),
        dropped: plan.dropped.clone(),
        max_gap: plan.max_gap,
    };
    io::write_json(&out.join("sync.json"), &manifest)?;
    info!(
        "synchronized {} frames ({} dropped, max depth gap {:.4} s)",
        manifest.frames,
        manifest.dropped.len(),
        manifest.max_gap
    );
    Ok(manifest)
}

/// Loads a synchronized scene (`synced/` layout) with depth in memory.
pub fn load_synced_scene(scene_dir: &Path) -> Result<Scene> {
    let synced = scene_dir.join(SYNCED_DIR);
    let k_path = synced.join("intrinsics.txt");
    if !k_path.exists() {
        return Err(Error::Missing(k_path));
    }
    let k = io::read_intrinsics(&k_path)?;
    let manifest: Option<SyncManifest> = {
        let p = synced.join("sync.json");
        p.exists().then(|| io::read_json(&p)).transpose()?
    };
    let depth_files = io::list_frames(&synced.join("depth"), "png")?;
    let frames = depth_files
        .par_iter()
        .enumerate()
        .map(|(index, (file_index, depth_path))| {
            if *file_index != index {
                return Err(Error::InvalidInput(format!(
                    "synced frames not contiguous: expected {index}, found {file_index}"
                )));
            }
            let t = manifest
                .as_ref()
                .and_then(|m| m.timestamps.get(index).copied())
                .unwrap_or(index as f64);
            let depth = io::read_depth_png(depth_path)?;
            if depth.dims() != (k.width, k.height) {
                return Err(Error::DimMismatch {
                    expected: (k.width, k.height),
                    found: depth.dims(),
                });
            }
            let color = synced.join("color").join(io::frame_name(index, "png"));
            Ok(Frame {
                index,
                timestamp: t,
                color: color.exists().then_some(color),
                depth,
                pose: io::read_pose(&synced.join("pose").join(io::frame_name(index, "txt")), t)?,
                gravity: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::Missing(synced.join("depth")));
    }
    let id = scene_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mesh = scene_dir.join("mesh.ply");
    Ok(Scene {
        id,
        frames,
        intrinsics: k,
        mesh: mesh.exists().then_some(mesh),
        ground_truth: None,
    })
}
