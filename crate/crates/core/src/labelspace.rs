//! Label vocabularies and id mappings between them.
//!
//! Every space reserves id 0 for "unlabeled". Mappings are many-to-one and
//! total: ids without an entry map to 0, and 0 always maps to 0.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const UNLABELED: u16 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelClass {
    pub id: u16,
    pub name: String,
    pub synkey: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    name: String,
    classes: Vec<LabelClass>,
    ids: HashSet<u16>,
}

impl LabelSpace {
    /// Builds a validated space. Class 0 is added when the caller omits it.
    pub fn new(name: impl Into<String>, classes: Vec<LabelClass>) -> Result<Self> {
        let name = name.into();
        let mut ids = HashSet::with_capacity(classes.len() + 1);
        let mut synkeys = HashSet::new();
        let mut out = Vec::with_capacity(classes.len() + 1);
        let has_zero = classes.iter().any(|c| c.id == UNLABELED);
        if !has_zero {
            out.push(LabelClass {
                id: UNLABELED,
                name: "unlabeled".into(),
                synkey: None,
            });
            ids.insert(UNLABELED);
        }
        for class in classes {
            if class.name.trim().is_empty() {
                return Err(Error::LabelSpace(format!("class {} has an empty name", class.id)));
            }
            if !ids.insert(class.id) {
                return Err(Error::LabelSpace(format!("duplicate id {}", class.id)));
            }
            if class.id == UNLABELED && class.synkey.is_some() {
                return Err(Error::LabelSpace(format!(
                    "id 0 is reserved for unlabeled, got real class {:?}",
                    class.name
                )));
            }
            if let Some(key) = &class.synkey {
                if !synkeys.insert(key.clone()) {
                    return Err(Error::LabelSpace(format!("duplicate synkey {key}")));
                }
            }
            out.push(class);
        }
        Ok(Self {
            name,
            classes: out,
            ids,
        })
    }

    /// Dense space `0..=n` with generated names.
    pub fn synthetic(name: impl Into<String>, n: u16) -> Self {
        let classes = (1..=n)
            .map(|id| LabelClass {
                id,
                name: format!("class_{id}"),
                synkey: None,
            })
            .collect();
        Self::new(name, classes).expect("synthetic space is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[LabelClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, id: u16) -> bool {
        self.ids.contains(&id)
    }

    pub fn max_id(&self) -> u16 {
        self.classes.iter().map(|c| c.id).max().unwrap_or(0)
    }

    pub fn class(&self, id: u16) -> Option<&LabelClass> {
        self.classes.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Deserialize)]
struct SpaceRow {
    id: u16,
    name: String,
    synkey: Option<String>,
}

/// Reads an `id,name,synkey` CSV. The space is named after the file stem.
pub fn load_label_space(path: &Path) -> Result<LabelSpace> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::csv(path))?;
    let headers = reader.headers().map_err(Error::csv(path))?.clone();
    if !headers.iter().any(|h| h == "id") {
        return Err(Error::LabelSpace(format!(
            "{}: missing id column",
            path.display()
        )));
    }
    let mut classes = Vec::new();
    for row in reader.deserialize::<SpaceRow>() {
        let row = row.map_err(Error::csv(path))?;
        let synkey = row.synkey.filter(|s| !s.is_empty());
        if row.id == UNLABELED && synkey.is_some() {
            return Err(Error::LabelSpace(format!(
                "id 0 is reserved for unlabeled, got real class {:?}",
                row.name
            )));
        }
        classes.push(LabelClass {
            id: row.id,
            name: row.name,
            synkey,
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "labels".into());
    LabelSpace::new(name, classes)
}

pub fn write_label_space(space: &LabelSpace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["id", "name", "synkey"])
        .map_err(Error::csv(path))?;
    for c in space.classes() {
        w.write_record([
            c.id.to_string().as_str(),
            c.name.as_str(),
            c.synkey.as_deref().unwrap_or(""),
        ])
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Many-to-one id table between two named spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    source: String,
    target: String,
    entries: BTreeMap<u16, u16>,
}

impl MappingTable {
    /// Validates every entry against both spaces. Entries mapping to 0 are
    /// dropped since absence already means 0.
    pub fn new(
        source: &LabelSpace,
        target: &LabelSpace,
        entries: impl IntoIterator<Item = (u16, u16)>,
    ) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (s, t) in entries {
            if !source.contains(s) {
                return Err(Error::Mapping(format!(
                    "source id {s} not in space {}",
                    source.name()
                )));
            }
            if !target.contains(t) {
                return Err(Error::Mapping(format!(
                    "target id {t} not in space {}",
                    target.name()
                )));
            }
            if s == UNLABELED {
                if t != UNLABELED {
                    return Err(Error::Mapping("source id 0 must map to 0".into()));
                }
                continue;
            }
            if t == UNLABELED {
                continue;
            }
            if let Some(prev) = table.insert(s, t) {
                if prev != t {
                    return Err(Error::Mapping(format!(
                        "source id {s} maps to both {prev} and {t}"
                    )));
                }
            }
        }
        Ok(Self {
            source: source.name().to_owned(),
            target: target.name().to_owned(),
            entries: table,
        })
    }

    pub fn identity(space: &LabelSpace) -> Self {
        Self {
            source: space.name().to_owned(),
            target: space.name().to_owned(),
            entries: space
                .classes()
                .iter()
                .filter(|c| c.id != UNLABELED)
                .map(|c| (c.id, c.id))
                .collect(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn entries(&self) -> &BTreeMap<u16, u16> {
        &self.entries
    }

    #[inline]
    pub fn lookup(&self, id: u16) -> u16 {
        self.entries.get(&id).copied().unwrap_or(UNLABELED)
    }

    /// Dense lookup table indexed by source id, for per-pixel application.
    fn dense(&self) -> Vec<u16> {
        let max = self.entries.keys().next_back().copied().unwrap_or(0) as usize;
        let mut lut = vec![UNLABELED; max + 1];
        for (&s, &t) in &self.entries {
            lut[s as usize] = t;
        }
        lut
    }
}

/// Result of reading a mapping CSV: the table plus any ambiguity warnings.
#[derive(Debug, Clone)]
pub struct LoadedMapping {
    pub table: MappingTable,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct MappingRow {
    source_id: u16,
    target_id: u16,
}

/// Reads a `source_id,target_id` CSV. One-to-many rows resolve to the
/// smallest non-zero target id; each resolution is reported as a warning.
pub fn load_mapping(path: &Path, source: &LabelSpace, target: &LabelSpace) -> Result<LoadedMapping> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::csv(path))?;
    let mut candidates: BTreeMap<u16, Vec<u16>> = BTreeMap::new();
    for row in reader.deserialize::<MappingRow>() {
        let row = row.map_err(Error::csv(path))?;
        candidates.entry(row.source_id).or_default().push(row.target_id);
    }
    let mut warnings = Vec::new();
    let mut entries = Vec::with_capacity(candidates.len());
    for (s, mut targets) in candidates {
        targets.sort_unstable();
        targets.dedup();
        if targets.len() > 1 {
            let chosen = targets
                .iter()
                .copied()
                .find(|&t| t != UNLABELED)
                .unwrap_or(UNLABELED);
            let msg = format!(
                "{}: source id {s} maps to {targets:?}; using {chosen}",
                path.display()
            );
            warn!("{msg}");
            warnings.push(msg);
            entries.push((s, chosen));
        } else {
            entries.push((s, targets[0]));
        }
    }
    Ok(LoadedMapping {
        table: MappingTable::new(source, target, entries)?,
        warnings,
    })
}

/// Grid of label ids tagged with the space they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub grid: Grid<u16>,
    pub space: String,
}

impl LabelMap {
    pub fn new(grid: Grid<u16>, space: impl Into<String>) -> Self {
        Self {
            grid,
            space: space.into(),
        }
    }

    pub fn filled(width: usize, height: usize, id: u16, space: impl Into<String>) -> Self {
        Self::new(Grid::filled(width, height, id), space)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    /// Checks every id against `space`.
    pub fn validate(&self, space: &LabelSpace) -> Result<()> {
        if self.space != space.name() {
            return Err(Error::SpaceMismatch {
                expected: space.name().into(),
                found: self.space.clone(),
            });
        }
        match self.grid.as_slice().iter().find(|&&id| !space.contains(id)) {
            Some(id) => Err(Error::LabelSpace(format!(
                "id {id} not in space {}",
                space.name()
            ))),
            None => Ok(()),
        }
    }
}

pub fn apply_mapping(m: &MappingTable, lm: &LabelMap) -> Result<LabelMap> {
    if lm.space != m.source {
        return Err(Error::SpaceMismatch {
            expected: m.source.clone(),
            found: lm.space.clone(),
        });
    }
    let lut = m.dense();
    let grid = lm
        .grid
        .map(|&id| lut.get(id as usize).copied().unwrap_or(UNLABELED));
    Ok(LabelMap::new(grid, m.target.clone()))
}

/// `compose(m1, m2)` maps `s` to `m2(m1(s))`.
pub fn compose(m1: &MappingTable, m2: &MappingTable) -> Result<MappingTable> {
    if m1.target != m2.source {
        return Err(Error::SpaceMismatch {
            expected: m2.source.clone(),
            found: m1.target.clone(),
        });
    }
    let entries = m1
        .entries
        .iter()
        .filter_map(|(&s, &mid)| {
            let t = m2.lookup(mid);
            (t != UNLABELED).then_some((s, t))
        })
        .collect();
    Ok(MappingTable {
        source: m1.source.clone(),
        target: m2.target.clone(),
        entries,
    })
}

/// Restricts `m` so only the `k` most frequent target classes survive.
/// Equal frequencies rank by ascending id; ids missing from
/// `class_frequencies` count as zero.
pub fn project_topk(
    target_space: &LabelSpace,
    m: &MappingTable,
    k: usize,
    class_frequencies: &BTreeMap<u16, u64>,
) -> Result<MappingTable> {
    if target_space.name() != m.target {
        return Err(Error::SpaceMismatch {
            expected: m.target.clone(),
            found: target_space.name().into(),
        });
    }
    let n_classes = target_space
        .classes()
        .iter()
        .filter(|c| c.id != UNLABELED)
        .count();
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    if k > n_classes {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the {n_classes} classes of {}",
            target_space.name()
        )));
    }
    let keep = top_k_classes(target_space, k, class_frequencies);
    let entries = m
        .entries
        .iter()
        .filter(|(_, t)| keep.contains(t))
        .map(|(&s, &t)| (s, t))
        .collect();
    Ok(MappingTable {
        source: m.source.clone(),
        target: m.target.clone(),
        entries,
    })
}

/// The `k` most frequent non-zero ids of `space`, ties by ascending id.
pub fn top_k_classes(
    space: &LabelSpace,
    k: usize,
    class_frequencies: &BTreeMap<u16, u64>,
) -> HashSet<u16> {
    let mut ranked: Vec<(u64, u16)> = space
        .classes()
        .iter()
        .filter(|c| c.id != UNLABELED)
        .map(|c| (class_frequencies.get(&c.id).copied().unwrap_or(0), c.id))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id).collect()
}

impl fmt::Display for MappingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} ({} entries)", self.source, self.target, self.entries.len())
    }
}
