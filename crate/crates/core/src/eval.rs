//! Segmentation metrics over points or pixels.
//!
//! Ground-truth id 0 is unannotated and never evaluated. A prediction of 0
//! against annotated ground truth is a miss: it counts against the
//! ground-truth class but is not a false positive for any class.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{apply_mapping, project_topk, LabelMap, LabelSpace, MappingTable, UNLABELED};
use crate::grid::Grid;

/// Sparse confusion counts, rows = ground truth, columns = prediction.
/// Column 0 collects misses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: BTreeMap<(u16, u16), u64>,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, gt: u16, pred: u16) -> u64 {
        self.counts.get(&(gt, pred)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> &BTreeMap<(u16, u16), u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn add(&mut self, gt: u16, pred: u16, n: u64) {
        if gt == UNLABELED || n == 0 {
            return;
        }
        *self.counts.entry((gt, pred)).or_insert(0) += n;
    }

    /// Adds another matrix; order of merges does not matter.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (&(g, p), &n) in &other.counts {
            self.add(g, p, n);
        }
    }

    fn class_stats(&self) -> BTreeMap<u16, ClassStats> {
        let mut stats: BTreeMap<u16, ClassStats> = BTreeMap::new();
        for (&(g, p), &n) in &self.counts {
            stats.entry(g).or_default().gt += n;
            if p != UNLABELED {
                stats.entry(p).or_default().pred += n;
            }
            if g == p {
                stats.entry(g).or_default().tp += n;
            }
        }
        stats
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct ClassStats {
    tp: u64,
    gt: u64,
    pred: u64,
}

pub fn confusion(gt: &[u16], pred: &[u16]) -> Result<ConfusionMatrix> {
    if gt.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} ground-truth vs {} predicted elements",
            gt.len(),
            pred.len()
        )));
    }
    let partial = gt
        .par_chunks(1 << 16)
        .zip(pred.par_chunks(1 << 16))
        .map(|(g, p)| {
            let mut local: HashMap<(u16, u16), u64> = HashMap::new();
            for (&g, &p) in g.iter().zip(p) {
                if g != UNLABELED {
                    *local.entry((g, p)).or_insert(0) += 1;
                }
            }
            local
        })
        .collect::<Vec<_>>();
    let mut cm = ConfusionMatrix::new();
    for local in partial {
        for ((g, p), n) in local {
            cm.add(g, p, n);
        }
    }
    Ok(cm)
}

/// Intersection and union counts of every class with ground-truth or
/// predicted mass.
fn iou_fractions(cm: &ConfusionMatrix) -> BTreeMap<u16, (u64, u64)> {
    cm.class_stats()
        .into_iter()
        .filter(|(_, s)| s.gt + s.pred > 0)
        .map(|(c, s)| (c, (s.tp, s.gt + s.pred - s.tp)))
        .collect()
}

/// IoU of every class with ground-truth or predicted mass.
pub fn per_class_iou(cm: &ConfusionMatrix) -> BTreeMap<u16, f64> {
    iou_fractions(cm)
        .into_iter()
        .map(|(c, (i, u))| (c, i as f64 / u as f64))
        .collect()
}

pub fn miou(cm: &ConfusionMatrix) -> Result<f64> {
    mean(iou_fractions(cm).into_values())
}

/// Mean over ground-truth classes of the fraction predicted correctly.
pub fn macc(cm: &ConfusionMatrix) -> Result<f64> {
    mean(
        cm.class_stats()
            .into_values()
            .filter(|s| s.gt > 0)
            .map(|s| (s.tp, s.gt)),
    )
}

pub fn tacc(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let trace: u64 = cm
        .entries()
        .iter()
        .filter(|((g, p), _)| g == p)
        .map(|(_, &n)| n)
        .sum();
    Ok(trace as f64 / total as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of fractions `num / den`, summed exactly and rounded once when the
/// integers allow it, so that e.g. the mean of 1/2 and 2/3 is the nearest
/// double to 7/12.
fn mean(fractions: impl Iterator<Item = (u64, u64)>) -> Result<f64> {
    let fractions: Vec<(u64, u64)> = fractions.collect();
    if fractions.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = fractions.len() as u128;
    let exact = fractions.iter().try_fold((0u128, 1u128), |(num, den), &(a, b)| {
        let (a, b) = (a as u128, b as u128);
        let num = num.checked_mul(b)?.checked_add(a.checked_mul(den)?)?;
        let den = den.checked_mul(b)?;
        let g = gcd(num, den).max(1);
        Some((num / g, den / g))
    });
    const EXACT: u128 = 1 << 53;
    if let Some((num, den)) = exact {
        let den = den * n;
        let g = gcd(num, den).max(1);
        let (num, den) = (num / g, den / g);
        if num < EXACT && den < EXACT {
            return Ok(num as f64 / den as f64);
        }
    }
    let sum: f64 = fractions.iter().map(|&(a, b)| a as f64 / b as f64).sum();
    Ok(sum / n as f64)
}

/// Named, disjoint class sets such as head/common/tail.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassGroups {
    groups: BTreeMap<String, BTreeSet<u16>>,
}

impl ClassGroups {
    pub fn new(groups: BTreeMap<String, BTreeSet<u16>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (name, ids) in &groups {
            for &id in ids {
                if id == UNLABELED {
                    return Err(Error::InvalidInput(format!("group {name} contains id 0")));
                }
                if !seen.insert(id) {
                    return Err(Error::InvalidInput(format!("id {id} is in more than one group")));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn validate_against(&self, space: &LabelSpace) -> Result<()> {
        for (name, ids) in &self.groups {
            if let Some(id) = ids.iter().find(|&&id| !space.contains(id)) {
                return Err(Error::InvalidInput(format!(
                    "group {name}: id {id} not in {}",
                    space.name()
                )));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> &BTreeMap<String, BTreeSet<u16>> {
        &self.groups
    }

    /// Reads a `group,id` CSV.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            group: String,
            id: u16,
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(Error::csv(path))?;
        let mut groups: BTreeMap<String, BTreeSet<u16>> = BTreeMap::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(Error::csv(path))?;
            groups.entry(row.group).or_default().insert(row.id);
        }
        Self::new(groups)
    }
}

/// Mean IoU per group over the group's classes that take part in the
/// global mean. Groups with no such class are left out.
pub fn group_summary(cm: &ConfusionMatrix, groups: &ClassGroups) -> BTreeMap<String, f64> {
    let iou = iou_fractions(cm);
    groups
        .groups
        .iter()
        .filter_map(|(name, ids)| {
            let vals = ids.iter().filter_map(|id| iou.get(id).copied());
            mean(vals).ok().map(|m| (name.clone(), m))
        })
        .collect()
}

/// JSON payload of the `eval` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class_iou: BTreeMap<u16, f64>,
    pub miou: f64,
    pub macc: f64,
    pub tacc: f64,
    pub groups: BTreeMap<String, f64>,
}

pub fn metrics(cm: &ConfusionMatrix, groups: Option<&ClassGroups>) -> Result<Metrics> {
    Ok(Metrics {
        per_class_iou: per_class_iou(cm),
        miou: miou(cm)?,
        macc: macc(cm)?,
        tacc: tacc(cm)?,
        groups: groups.map(|g| group_summary(cm, g)).unwrap_or_default(),
    })
}

pub fn evaluate(gt: &[u16], pred: &[u16], groups: Option<&ClassGroups>) -> Result<Metrics> {
    metrics(&confusion(gt, pred)?, groups)
}

/// Projects predictions from space S into target space T through `m`,
/// keeping only the `k` most frequent target classes, then evaluates in T.
pub fn evaluate_projected(
    gt: &[u16],
    pred: &[u16],
    m: &MappingTable,
    target_space: &LabelSpace,
    k: usize,
    class_frequencies: &BTreeMap<u16, u64>,
    groups: Option<&ClassGroups>,
) -> Result<Metrics> {
    let restricted = project_topk(target_space, m, k, class_frequencies)?;
    let as_map = LabelMap::new(Grid::from_vec(pred.len(), 1, pred.to_vec())?, m.source());
    let projected = apply_mapping(&restricted, &as_map)?;
    evaluate(gt, projected.grid.as_slice(), groups)
}
