//! Volumetric fusion of depth frames, surface extraction, and voxel
//! downsampling of (labeled) point sets.

mod downsample;
mod marching_cubes;
mod tables;
mod tsdf;

pub use downsample::downsample;
pub use marching_cubes::extract_mesh;
pub use tsdf::{integrate_scene, Bounds, TsdfConfig, TsdfVolume};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::votes::Vote;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.normals.len() != self.vertices.len() {
            return Err(Error::InvalidInput("normals and vertices differ in length".into()));
        }
        let n = self.vertices.len() as u32;
        if self.faces.iter().flatten().any(|&i| i >= n) {
            return Err(Error::InvalidInput("face index out of range".into()));
        }
        Ok(())
    }
}

/// Points with normals and top-2 label votes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub top1: Vec<Vote<u32>>,
    pub top2: Vec<Vote<u32>>,
    pub space: String,
}

impl LabeledCloud {
    /// Unlabeled cloud from geometry.
    pub fn from_geometry(
        points: Vec<Vector3<f64>>,
        normals: Vec<Vector3<f64>>,
        space: impl Into<String>,
    ) -> Self {
        let n = points.len();
        Self {
            points,
            normals,
            top1: vec![Vote::default(); n],
            top2: vec![Vote::default(); n],
            space: space.into(),
        }
    }

    pub fn from_mesh(mesh: &TriangleMesh, space: impl Into<String>) -> Self {
        Self::from_geometry(mesh.vertices.clone(), mesh.normals.clone(), space)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Vec<u16> {
        self.top1.iter().map(|v| v.id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.normals.len() != n || self.top1.len() != n || self.top2.len() != n {
            return Err(Error::InvalidInput("labeled cloud arrays differ in length".into()));
        }
        if self.top1.iter().zip(&self.top2).any(|(a, b)| a.count < b.count) {
            return Err(Error::InvalidInput("top-1 count below top-2 count".into()));
        }
        Ok(())
    }
}
