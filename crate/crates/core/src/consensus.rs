//! Per-pixel weighted voting over label predictions from several sources.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io;
use crate::labelspace::{LabelMap, UNLABELED};
use crate::votes::{Tally, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig {
    pub weights: BTreeMap<String, f64>,
    /// A pixel stays unlabeled unless its winner collects at least this
    /// much weight.
    pub min_votes: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            weights: BTreeMap::new(),
            min_votes: 2.0,
        }
    }
}

impl VoteConfig {
    /// Unit weight for each named source.
    pub fn equal<S: AsRef<str>>(sources: impl IntoIterator<Item = S>) -> Self {
        Self {
            weights: sources
                .into_iter()
                .map(|s| (s.as_ref().to_owned(), 1.0))
                .collect(),
            ..Default::default()
        }
    }

    pub fn with_min_votes(mut self, min_votes: f64) -> Self {
        self.min_votes = min_votes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Vote("weights must be finite and non-negative".into()));
        }
        if !self.weights.values().any(|&w| w > 0.0) {
            return Err(Error::Vote("at least one weight must be positive".into()));
        }
        if !(self.min_votes.is_finite() && self.min_votes >= 0.0) {
            return Err(Error::Vote("min_votes must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMap {
    pub top1: Grid<u16>,
    pub top1_votes: Grid<f64>,
    pub top2: Grid<u16>,
    pub top2_votes: Grid<f64>,
    pub space: String,
}

impl ConsensusMap {
    pub fn dims(&self) -> (usize, usize) {
        self.top1.dims()
    }

    pub fn labels(&self) -> LabelMap {
        LabelMap::new(self.top1.clone(), self.space.clone())
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> (Vote<f64>, Vote<f64>) {
        (
            Vote {
                id: *self.top1.get(x, y),
                count: *self.top1_votes.get(x, y),
            },
            Vote {
                id: *self.top2.get(x, y),
                count: *self.top2_votes.get(x, y),
            },
        )
    }
}

/// Resolves one pixel's tally under the threshold rule.
#[inline]
pub fn resolve(tally: &Tally<f64>, min_votes: f64) -> (Vote<f64>, Vote<f64>) {
    let (a, b) = tally.top_two();
    if a.id == UNLABELED || a.count < min_votes {
        (Vote::default(), Vote::default())
    } else {
        (a, b)
    }
}

pub fn aggregate(predictions: &[(String, LabelMap)], cfg: &VoteConfig) -> Result<ConsensusMap> {
    cfg.validate()?;
    let first = predictions
        .first()
        .ok_or_else(|| Error::Vote("no predictions to aggregate".into()))?;
    let dims = first.1.dims();
    let space = first.1.space.clone();
    let mut sorted: Vec<(&str, f64, &LabelMap)> = Vec::with_capacity(predictions.len());
    for (source, lm) in predictions {
        let w = *cfg
            .weights
            .get(source)
            .ok_or_else(|| Error::Vote(format!("unknown source {source}")))?;
        if lm.dims() != dims {
            return Err(Error::DimMismatch {
                expected: dims,
                found: lm.dims(),
            });
        }
        if lm.space != space {
            return Err(Error::SpaceMismatch {
                expected: space.clone(),
                found: lm.space.clone(),
            });
        }
        sorted.push((source.as_str(), w, lm));
    }
    // fixed summation order keeps floating-point ties independent of input order
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Vote(format!("duplicate source {}", w[0].0)));
    }

    let (width, height) = dims;
    let rows: Vec<Vec<(Vote<f64>, Vote<f64>)>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut tally = Tally::new();
            (0..width)
                .map(|x| {
                    tally.clear();
                    for (_, w, lm) in &sorted {
                        tally.add(*lm.grid.get(x, y), *w);
                    }
                    resolve(&tally, cfg.min_votes)
                })
                .collect()
        })
        .collect();
    let px: Vec<(Vote<f64>, Vote<f64>)> = rows.into_iter().flatten().collect();
    let grid = |f: &dyn Fn(&(Vote<f64>, Vote<f64>)) -> u16| {
        Grid::from_vec(width, height, px.iter().map(f).collect()).expect("dims")
    };
    let votes = |f: &dyn Fn(&(Vote<f64>, Vote<f64>)) -> f64| {
        Grid::from_vec(width, height, px.iter().map(f).collect()).expect("dims")
    };
    Ok(ConsensusMap {
        top1: grid(&|p| p.0.id),
        top1_votes: votes(&|p| p.0.count),
        top2: grid(&|p| p.1.id),
        top2_votes: votes(&|p| p.1.count),
        space,
    })
}

/// Reduces test-time-augmented variants of one source: pixels where all
/// variants agree keep that id, any disagreement abstains.
pub fn merge_augmented(variants: &[LabelMap]) -> Result<LabelMap> {
    let first = variants
        .first()
        .ok_or_else(|| Error::InvalidInput("no variants to merge".into()))?;
    for v in &variants[1..] {
        if v.dims() != first.dims() {
            return Err(Error::DimMismatch {
                expected: first.dims(),
                found: v.dims(),
            });
        }
        if v.space != first.space {
            return Err(Error::SpaceMismatch {
                expected: first.space.clone(),
                found: v.space.clone(),
            });
        }
    }
    let data = (0..first.grid.as_slice().len())
        .map(|i| {
            let id = first.grid.as_slice()[i];
            if variants[1..].iter().all(|v| v.grid.as_slice()[i] == id) {
                id
            } else {
                UNLABELED
            }
        })
        .collect();
    let (w, h) = first.dims();
    Ok(LabelMap::new(Grid::from_vec(w, h, data)?, first.space.clone()))
}

fn scaled_count(v: f64) -> u16 {
    (v * 100.0).round().clamp(0.0, u16::MAX as f64) as u16
}

/// Writes `%06d.png`, `%06d_top2.png` and `%06d_counts.png` (top-1 and
/// top-2 weights times 100 as a two-channel 16-bit image).
pub fn write_consensus(dir: &Path, index: usize, map: &ConsensusMap) -> Result<()> {
    io::write_u16_png(&dir.join(io::frame_name(index, "png")), &map.top1)?;
    io::write_u16_png(&dir.join(format!("{index:06}_top2.png")), &map.top2)?;
    io::write_u16_pair_png(
        &dir.join(format!("{index:06}_counts.png")),
        &map.top1_votes.map(|&v| scaled_count(v)),
        &map.top2_votes.map(|&v| scaled_count(v)),
    )
}

pub fn read_consensus(dir: &Path, index: usize, space: &str) -> Result<ConsensusMap> {
    let top1 = io::read_u16_png(&dir.join(io::frame_name(index, "png")))?;
    let top2_path = dir.join(format!("{index:06}_top2.png"));
    let counts_path = dir.join(format!("{index:06}_counts.png"));
    let top2 = if top2_path.exists() {
        io::read_u16_png(&top2_path)?
    } else {
        Grid::filled(top1.width(), top1.height(), UNLABELED)
    };
    let (c1, c2) = if counts_path.exists() {
        let (a, b) = io::read_u16_pair_png(&counts_path)?;
        (a.map(|&v| v as f64 / 100.0), b.map(|&v| v as f64 / 100.0))
    } else {
        let z = Grid::filled(top1.width(), top1.height(), 0.0);
        (z.clone(), z)
    };
    Ok(ConsensusMap {
        top1,
        top1_votes: c1,
        top2,
        top2_votes: c2,
        space: space.to_owned(),
    })
}
