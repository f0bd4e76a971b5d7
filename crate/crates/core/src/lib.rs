//! Multi-view semantic annotation fusion: per-frame label maps from several
//! segmentation models are voted into a consensus, lifted onto a fused 3D
//! reconstruction, and scored, with a resumable per-scene task executor.

pub mod consensus;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod gravity;
pub mod grid;
pub mod ingest;
pub mod io;
pub mod labelspace;
pub mod lift;
pub mod orchestrator;
pub mod pipeline;
pub mod ply;
pub mod render;
pub mod synth;
pub mod votes;

pub use error::{Error, Result};
