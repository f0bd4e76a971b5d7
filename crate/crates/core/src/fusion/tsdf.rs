use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::grid::DepthGrid;
use crate::ingest::Frame;

pub(crate) const BLOCK: usize = 8;
const BLOCK_VOXELS: usize = BLOCK * BLOCK * BLOCK;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsdfConfig {
    pub voxel_size: f64,
    pub truncation: f64,
    /// Depth readings beyond this range are skipped.
    pub max_depth: f64,
    pub max_weight: u8,
    /// Dense grids above this many voxels switch to block-sparse storage.
    pub voxel_budget: usize,
    /// Fractional padding added on each side of the observed bounds.
    pub padding: f64,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.008,
            truncation: 0.04,
            max_depth: 6.0,
            max_weight: 255,
            voxel_budget: 64 * 1024 * 1024,
            padding: 0.05,
        }
    }
}

impl TsdfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) || !(self.max_depth > 0.0) {
            return Err(Error::InvalidInput(
                "voxel size and max depth must be positive".into(),
            ));
        }
        if !(self.truncation >= self.voxel_size) {
            return Err(Error::InvalidInput(format!(
                "truncation {} must be at least the voxel size {}",
                self.truncation, self.voxel_size
            )));
        }
        if self.max_weight == 0 {
            return Err(Error::InvalidInput("max weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Bounds {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    /// Bounds of all back-projected valid depth pixels, grown by
    /// `margin` and then by `padding` times the extent on every side.
    pub fn from_frames(frames: &[Frame], k: &Intrinsics, max_depth: f64, margin: f64, padding: f64) -> Option<Self> {
        let per_frame: Vec<Option<Bounds>> = frames
            .par_iter()
            .map(|f| {
                let mut b: Option<Bounds> = None;
                let (w, h) = f.depth.dims();
                for y in 0..h {
                    for x in 0..w {
                        let d = *f.depth.get(x, y) as f64;
                        if !(d > 0.0 && d <= max_depth) {
                            continue;
                        }
                        let p = f.pose.camera_to_world(&(k.ray(x as f64, y as f64) * d));
                        b = Some(match b {
                            None => Bounds::new(p, p),
                            Some(b) => Bounds::new(b.min.inf(&p), b.max.sup(&p)),
                        });
                    }
                }
                b
            })
            .collect();
        let b = per_frame
            .into_iter()
            .flatten()
            .reduce(|a, b| Bounds::new(a.min.inf(&b.min), a.max.sup(&b.max)))?;
        let m = Vector3::repeat(margin);
        let (min, max) = (b.min - m, b.max + m);
        let pad = (max - min) * padding;
        Some(Bounds::new(min - pad, max + pad))
    }
}

#[derive(Debug, Clone)]
struct Block {
    tsdf: Box<[f32; BLOCK_VOXELS]>,
    weight: Box<[u8; BLOCK_VOXELS]>,
}

impl Block {
    fn new() -> Self {
        Self {
            tsdf: Box::new([1.0; BLOCK_VOXELS]),
            weight: Box::new([0; BLOCK_VOXELS]),
        }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Dense { tsdf: Vec<f32>, weight: Vec<u8> },
    Sparse { blocks: BTreeMap<[usize; 3], Block> },
}

/// Truncated signed distance volume over an axis-aligned box. Voxel
/// `(i, j, k)` is centered at `origin + (index + 0.5) * voxel_size`.
#[derive(Debug, Clone)]
pub struct TsdfVolume {
    cfg: TsdfConfig,
    origin: Vector3<f64>,
    dims: [usize; 3],
    storage: Storage,
}

/// Per-frame constants for the voxel update.
struct FrameCtx<'a> {
    rot_t: Matrix3<f64>,
    t: Vector3<f64>,
    k: &'a Intrinsics,
    depth: &'a DepthGrid,
    truncation: f64,
    max_depth: f64,
    max_weight: u8,
}

impl FrameCtx<'_> {
    #[inline]
    fn update(&self, p_world: Vector3<f64>, tsdf: &mut f32, weight: &mut u8) {
        let pc = self.rot_t * (p_world - self.t);
        if pc.z <= 0.0 {
            return;
        }
        let (u, v) = self.k.project(&pc);
        let Some((x, y)) = self.k.pixel(u, v, 0) else {
            return;
        };
        let d = *self.depth.get(x, y) as f64;
        if !(d > 0.0 && d <= self.max_depth) {
            return;
        }
        let sdf = d - pc.z;
        if sdf < -self.truncation {
            return;
        }
        let sample = (sdf / self.truncation).clamp(-1.0, 1.0) as f32;
        let w = *weight as f32;
        *tsdf = (*tsdf * w + sample) / (w + 1.0);
        *weight = weight.saturating_add(1).min(self.max_weight);
    }
}

impl TsdfVolume {
    /// Volume covering `bounds`. Storage is dense unless the voxel count
    /// exceeds the configured budget.
    pub fn new(cfg: TsdfConfig, bounds: Bounds) -> Result<Self> {
        cfg.validate()?;
        let extent = bounds.max - bounds.min;
        if extent.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidInput(format!("degenerate volume bounds {extent:?}")));
        }
        let dims = [0, 1, 2].map(|a| ((extent[a] / cfg.voxel_size).ceil() as usize).max(2));
        let total = dims[0] * dims[1] * dims[2];
        let storage = if total > cfg.voxel_budget {
            debug!("volume {dims:?} exceeds budget, using block-sparse storage");
            Storage::Sparse {
                blocks: BTreeMap::new(),
            }
        } else {
            Storage::Dense {
                tsdf: vec![1.0; total],
                weight: vec![0; total],
            }
        };
        Ok(Self {
            cfg,
            origin: bounds.min,
            dims,
            storage,
        })
    }

    /// Forces block-sparse storage regardless of size.
    pub fn new_sparse(cfg: TsdfConfig, bounds: Bounds) -> Result<Self> {
        let mut v = Self::new(TsdfConfig { voxel_budget: 0, ..cfg }, bounds)?;
        v.cfg.voxel_budget = cfg.voxel_budget;
        Ok(v)
    }

    pub fn config(&self) -> &TsdfConfig {
        &self.cfg
    }

    pub fn voxel_size(&self) -> f64 {
        self.cfg.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.cfg.truncation
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn bounds(&self) -> Bounds {
        let size = Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
            * self.cfg.voxel_size;
        Bounds::new(self.origin, self.origin + size)
    }

    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.cfg.voxel_size
    }

    #[inline]
    fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// `(tsdf, weight)` of a voxel; unallocated sparse voxels read as
    /// unobserved. Returns `None` outside the grid.
    #[inline]
    pub fn voxel(&self, i: usize, j: usize, k: usize) -> Option<(f32, u8)> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return None;
        }
        Some(match &self.storage {
            Storage::Dense { tsdf, weight } => {
                let idx = self.linear(i, j, k);
                (tsdf[idx], weight[idx])
            }
            Storage::Sparse { blocks } => {
                let key = [i / BLOCK, j / BLOCK, k / BLOCK];
                match blocks.get(&key) {
                    Some(b) => {
                        let idx = ((k % BLOCK) * BLOCK + j % BLOCK) * BLOCK + i % BLOCK;
                        (b.tsdf[idx], b.weight[idx])
                    }
                    None => (1.0, 0),
                }
            }
        })
    }

    pub fn observed_voxels(&self) -> usize {
        match &self.storage {
            Storage::Dense { weight, .. } => weight.iter().filter(|&&w| w > 0).count(),
            Storage::Sparse { blocks } => blocks
                .values()
                .map(|b| b.weight.iter().filter(|&&w| w > 0).count())
                .sum(),
        }
    }

    /// Cell ranges to visit during surface extraction: the whole grid for
    /// dense storage, allocated blocks for sparse storage.
    pub(crate) fn cell_blocks(&self) -> Vec<[std::ops::Range<usize>; 3]> {
        let [nx, ny, nz] = self.dims;
        match &self.storage {
            Storage::Dense { .. } => vec![[0..nx, 0..ny, 0..nz]],
            Storage::Sparse { blocks } => blocks
                .keys()
                .map(|&[bi, bj, bk]| {
                    [
                        bi * BLOCK..((bi + 1) * BLOCK).min(nx),
                        bj * BLOCK..((bj + 1) * BLOCK).min(ny),
                        bk * BLOCK..((bk + 1) * BLOCK).min(nz),
                    ]
                })
                .collect(),
        }
    }

    /// Projective TSDF update with one depth frame.
    pub fn integrate_frame(&mut self, depth: &DepthGrid, pose: &Pose, k: &Intrinsics) -> Result<()> {
        if depth.dims() != (k.width, k.height) {
            return Err(Error::DimMismatch {
                expected: (k.width, k.height),
                found: depth.dims(),
            });
        }
        let ctx = FrameCtx {
            rot_t: pose.rotation.to_rotation_matrix().matrix().transpose(),
            t: pose.translation,
            k,
            depth,
            truncation: self.cfg.truncation,
            max_depth: self.cfg.max_depth,
            max_weight: self.cfg.max_weight,
        };
        let [nx, ny, _] = self.dims;
        let origin = self.origin;
        let vs = self.cfg.voxel_size;
        let center = move |i: usize, j: usize, kk: usize| {
            origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, kk as f64 + 0.5) * vs
        };
        if self.is_sparse() {
            self.allocate_blocks(depth, pose, k);
        }
        let dims = self.dims;
        match &mut self.storage {
            Storage::Dense { tsdf, weight } => {
                let slab = nx * ny;
                tsdf.par_chunks_mut(slab)
                    .zip(weight.par_chunks_mut(slab))
                    .enumerate()
                    .for_each(|(kk, (ts, ws))| {
                        for j in 0..ny {
                            for i in 0..nx {
                                let idx = j * nx + i;
                                ctx.update(center(i, j, kk), &mut ts[idx], &mut ws[idx]);
                            }
                        }
                    });
            }
            Storage::Sparse { blocks } => {
                blocks.par_iter_mut().for_each(|(&[bi, bj, bk], b)| {
                    for dk in 0..BLOCK {
                        for dj in 0..BLOCK {
                            for di in 0..BLOCK {
                                let (i, j, kk) = (bi * BLOCK + di, bj * BLOCK + dj, bk * BLOCK + dk);
                                if i >= dims[0] || j >= dims[1] || kk >= dims[2] {
                                    continue;
                                }
                                let idx = (dk * BLOCK + dj) * BLOCK + di;
                                ctx.update(center(i, j, kk), &mut b.tsdf[idx], &mut b.weight[idx]);
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }

    /// Allocates every block within one truncation distance of a surface
    /// point seen in `depth`.
    fn allocate_blocks(&mut self, depth: &DepthGrid, pose: &Pose, k: &Intrinsics) {
        let block_size = self.cfg.voxel_size * BLOCK as f64;
        let reach = (self.cfg.truncation / block_size).ceil() as i64;
        let nb = [0, 1, 2].map(|a| self.dims[a].div_ceil(BLOCK) as i64);
        let mut seeds = BTreeSet::new();
        for y in 0..depth.height() {
            for x in 0..depth.width() {
                let d = *depth.get(x, y) as f64;
                if !(d > 0.0 && d <= self.cfg.max_depth) {
                    continue;
                }
                let p = pose.camera_to_world(&(k.ray(x as f64, y as f64) * d)) - self.origin;
                seeds.insert([0, 1, 2].map(|a| (p[a] / block_size).floor() as i64));
            }
        }
        let Storage::Sparse { blocks } = &mut self.storage else {
            return;
        };
        for s in seeds {
            for dk in -reach..=reach {
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let b = [s[0] + di, s[1] + dj, s[2] + dk];
                        if (0..3).any(|a| b[a] < 0 || b[a] >= nb[a]) {
                            continue;
                        }
                        blocks
                            .entry(b.map(|v| v as usize))
                            .or_insert_with(Block::new);
                    }
                }
            }
        }
    }
}

/// Sizes a volume from the frames' observed extent and integrates them in
/// order.
pub fn integrate_scene(frames: &[Frame], k: &Intrinsics, cfg: TsdfConfig) -> Result<TsdfVolume> {
    cfg.validate()?;
    let bounds = Bounds::from_frames(frames, k, cfg.max_depth, cfg.truncation, cfg.padding)
        .ok_or_else(|| Error::InvalidInput("no valid depth in any frame".into()))?;
    let mut vol = TsdfVolume::new(cfg, bounds)?;
    for f in frames {
        vol.integrate_frame(&f.depth, &f.pose, k)?;
    }
    Ok(vol)
}
