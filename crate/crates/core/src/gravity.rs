//! Quarter-turn gravity alignment of camera frames.
//!
//! The world z axis is "sky". Its projection into the image plane is compared
//! against image-up `(0, -1)`; the frame is then turned by `k` quarter turns
//! so the sky points up to within 45 degrees. Turning is clockwise as seen on
//! screen: a sky direction pointing left ends up pointing up after `k = 1`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::grid::Grid;
use crate::io;
use crate::labelspace::LabelMap;

/// Below this image-plane norm the sky direction is treated as unobservable.
pub const DEGENERATE_NORM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityInfo {
    /// Angle from image-up to the projected sky direction, in `[0, 2π)`.
    pub alpha: f64,
    pub k: u8,
}

/// Distance between two angles measured on the circle.
#[inline]
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Quarter-turn count closest to `alpha` on the circle; ties go to the
/// smaller count.
pub fn nearest_quarter(alpha: f64) -> u8 {
    let mut best = 0u8;
    let mut best_d = f64::INFINITY;
    for s in 0..4u8 {
        let d = circular_distance(s as f64 * FRAC_PI_2, alpha);
        if d < best_d {
            best = s;
            best_d = d;
        }
    }
    best
}

/// Image-plane components `(x, y)` of the sky direction in camera coordinates.
pub fn projected_sky(pose: &Pose) -> (f64, f64) {
    let sky = pose.rotation.inverse_transform_vector(&Vector3::z());
    (sky.x, sky.y)
}

pub fn compute_alignment(pose: &Pose) -> GravityInfo {
    let (x, y) = projected_sky(pose);
    if x.hypot(y) < DEGENERATE_NORM {
        return GravityInfo { alpha: 0.0, k: 0 };
    }
    let alpha = (-x).atan2(-y).rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU
    let alpha = if alpha >= TAU { 0.0 } else { alpha };
    GravityInfo {
        alpha,
        k: nearest_quarter(alpha),
    }
}

/// Angle left between sky and image-up after turning by `info.k`.
pub fn residual_angle(info: &GravityInfo) -> f64 {
    circular_distance(info.alpha, info.k as f64 * FRAC_PI_2)
}

/// Image-space direction after `k` quarter turns.
pub fn rotate_direction(dx: f64, dy: f64, k: u8) -> (f64, f64) {
    match k % 4 {
        0 => (dx, dy),
        1 => (-dy, dx),
        2 => (-dx, -dy),
        _ => (dy, -dx),
    }
}

fn check_k(k: i64) -> Result<u8> {
    if (0..4).contains(&k) {
        Ok(k as u8)
    } else {
        Err(Error::InvalidQuarterTurn(k))
    }
}

/// Lossless rotation by `k` quarter turns. Odd `k` swaps width and height.
pub fn rotate_quarter<T: Copy>(grid: &Grid<T>, k: i64) -> Result<Grid<T>> {
    let k = check_k(k)?;
    let (w, h) = grid.dims();
    Ok(match k {
        0 => grid.clone(),
        // out(x', y') = in(x, y) with x' = h-1-y, y' = x
        1 => Grid::from_fn(h, w, |xo, yo| *grid.get(yo, h - 1 - xo)),
        2 => Grid::from_fn(w, h, |xo, yo| *grid.get(w - 1 - xo, h - 1 - yo)),
        // x' = y, y' = w-1-x
        _ => Grid::from_fn(h, w, |xo, yo| *grid.get(w - 1 - yo, xo)),
    })
}

pub fn unrotate<T: Copy>(grid: &Grid<T>, k: i64) -> Result<Grid<T>> {
    let k = check_k(k)?;
    rotate_quarter(grid, ((4 - k) % 4) as i64)
}

pub fn rotate_labels(lm: &LabelMap, k: i64) -> Result<LabelMap> {
    Ok(LabelMap::new(rotate_quarter(&lm.grid, k)?, lm.space.clone()))
}

pub fn unrotate_labels(lm: &LabelMap, k: i64) -> Result<LabelMap> {
    Ok(LabelMap::new(unrotate(&lm.grid, k)?, lm.space.clone()))
}

/// One row of `gravity.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityRecord {
    pub frame: usize,
    pub alpha: f64,
    pub k: u8,
}

pub fn write_gravity(path: &Path, infos: &[GravityInfo]) -> Result<()> {
    let rows: Vec<GravityRecord> = infos
        .iter()
        .enumerate()
        .map(|(frame, g)| GravityRecord {
            frame,
            alpha: g.alpha,
            k: g.k,
        })
        .collect();
    io::write_json(path, &rows)
}

pub fn read_gravity(path: &Path) -> Result<Vec<GravityRecord>> {
    io::read_json(path)
}
