//! Per-point voting of 2D labels across every frame that sees the point.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::LabeledCloud;
use crate::geometry::Intrinsics;
use crate::ingest::Frame;
use crate::labelspace::LabelMap;
use crate::votes::{Tally, Vote};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftConfig {
    /// Largest allowed gap between observed depth and point depth, meters.
    pub occlusion_tol: f64,
    pub min_frame_votes: u32,
    pub boundary_margin: usize,
    /// Use every `stride`-th frame.
    pub stride: usize,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            occlusion_tol: 0.05,
            min_frame_votes: 1,
            boundary_margin: 0,
            stride: 1,
        }
    }
}

impl LiftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.occlusion_tol > 0.0) {
            return Err(Error::InvalidInput("occlusion tolerance must be positive".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidInput("frame stride must be positive".into()));
        }
        Ok(())
    }
}

/// Pixel at which `frame` observes `point`, if it does: in front of the
/// camera, inside the image less `margin`, on a valid depth pixel, and
/// within `tol` of the observed depth.
pub fn visible(
    point: &Vector3<f64>,
    frame: &Frame,
    k: &Intrinsics,
    tol: f64,
    margin: usize,
) -> Option<(usize, usize)> {
    let pc = frame.pose.world_to_camera(point);
    if pc.z <= 0.0 {
        return None;
    }
    let (u, v) = k.project(&pc);
    let (x, y) = k.pixel(u, v, margin)?;
    let d = *frame.depth.get(x, y) as f64;
    if !(d > 0.0) {
        return None;
    }
    ((d - pc.z).abs() <= tol).then_some((x, y))
}

/// Votes each point's label from the consensus top-1 of every frame in
/// which it is visible. Points with fewer than `min_frame_votes` votes stay
/// unlabeled.
pub fn lift(
    points: &LabeledCloud,
    views: &[(&Frame, &LabelMap)],
    k: &Intrinsics,
    cfg: &LiftConfig,
) -> Result<LabeledCloud> {
    cfg.validate()?;
    let first = views
        .first()
        .ok_or_else(|| Error::InvalidInput("no frames to lift from".into()))?;
    let space = first.1.space.clone();
    for (frame, labels) in views {
        if labels.space != space {
            return Err(Error::SpaceMismatch {
                expected: space.clone(),
                found: labels.space.clone(),
            });
        }
        if labels.dims() != (k.width, k.height) || frame.depth.dims() != (k.width, k.height) {
            return Err(Error::DimMismatch {
                expected: (k.width, k.height),
                found: labels.dims(),
            });
        }
    }
    let used: Vec<&(&Frame, &LabelMap)> = views.iter().step_by(cfg.stride).collect();
    let votes: Vec<(Vote<u32>, Vote<u32>)> = points
        .points
        .par_iter()
        .map(|p| {
            let mut tally = Tally::<u32>::new();
            for (frame, labels) in &used {
                if let Some((x, y)) = visible(p, frame, k, cfg.occlusion_tol, cfg.boundary_margin) {
                    tally.add(*labels.grid.get(x, y), 1);
                }
            }
            if tally.total() < cfg.min_frame_votes {
                (Vote::default(), Vote::default())
            } else {
                tally.top_two()
            }
        })
        .collect();
    let (top1, top2) = votes.into_iter().unzip();
    Ok(LabeledCloud {
        points: points.points.clone(),
        normals: points.normals.clone(),
        top1,
        top2,
        space,
    })
}

/// Written as `lift_stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftStats {
    pub points: usize,
    pub unlabeled_points: usize,
    pub unlabeled_fraction: f64,
    /// Top-1 vote count -> number of points.
    pub votes_histogram: BTreeMap<u32, usize>,
}

impl LiftStats {
    pub fn of(cloud: &LabeledCloud) -> Self {
        let mut votes_histogram = BTreeMap::new();
        for v in &cloud.top1 {
            *votes_histogram.entry(v.count).or_insert(0) += 1;
        }
        let unlabeled_points = cloud.top1.iter().filter(|v| v.id == 0).count();
        Self {
            points: cloud.len(),
            unlabeled_points,
            unlabeled_fraction: if cloud.is_empty() {
                0.0
            } else {
                unlabeled_points as f64 / cloud.len() as f64
            },
            votes_histogram,
        }
    }
}
