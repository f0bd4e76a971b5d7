//! Label visualisation with a per-class color table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::labelspace::LabelMap;

/// Color drawn for ids missing from the table.
pub const UNKNOWN_COLOR: [u8; 3] = [255, 0, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    colors: BTreeMap<u16, [u8; 3]>,
}

#[derive(Deserialize)]
struct Row {
    id: u16,
    r: u8,
    g: u8,
    b: u8,
}

impl Colormap {
    pub fn new(colors: BTreeMap<u16, [u8; 3]>) -> Self {
        Self { colors }
    }

    /// Black for unlabeled, then well separated hues for `n` classes.
    pub fn default_for(n: u16) -> Self {
        let mut colors = BTreeMap::from([(0, [0, 0, 0])]);
        for id in 1..=n {
            // golden-angle hue walk
            let h = (id as f64 * 137.507_764).rem_euclid(360.0);
            let v = if id % 2 == 0 { 0.85 } else { 1.0 };
            colors.insert(id, hsv(h, 0.75, v));
        }
        Self { colors }
    }

    /// CSV with columns `id,r,g,b`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(Error::csv(path))?;
        let mut colors = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: Row = row.map_err(Error::csv(path))?;
            if colors.insert(row.id, [row.r, row.g, row.b]).is_some() {
                return Err(Error::InvalidInput(format!("duplicate colormap id {}", row.id)));
            }
        }
        Ok(Self { colors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
        w.write_record(["id", "r", "g", "b"]).map_err(Error::csv(path))?;
        for (id, c) in &self.colors {
            w.write_record([id.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()])
                .map_err(Error::csv(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    /// Largest id in the table.
    pub fn max_id(&self) -> u16 {
        self.colors.keys().next_back().copied().unwrap_or(0)
    }

    pub fn color(&self, id: u16) -> [u8; 3] {
        self.colors.get(&id).copied().unwrap_or(UNKNOWN_COLOR)
    }

    /// Exact color match, if any.
    pub fn id_of(&self, c: [u8; 3]) -> Option<u16> {
        self.colors.iter().find(|(_, v)| **v == c).map(|(k, _)| *k)
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0).rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r, g, b].map(|t| ((t + m) * 255.0).round() as u8)
}

pub fn colorize(labels: &LabelMap, cmap: &Colormap) -> Grid<[u8; 3]> {
    labels.grid.map(|&id| cmap.color(id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_ids_are_magenta() {
        let cmap = Colormap::new(BTreeMap::from([(1, [10, 20, 30])]));
        let mut m = LabelMap::filled(2, 1, 1, "u");
        *m.grid.get_mut(1, 0) = 9;
        let img = colorize(&m, &cmap);
        assert_eq!(img.as_slice(), &[[10, 20, 30], UNKNOWN_COLOR]);
    }

    #[test]
    fn default_palette_is_distinct() {
        let c = Colormap::default_for(20);
        let mut seen: Vec<[u8; 3]> = (0..=20).map(|i| c.color(i)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 21);
        assert!(!seen.contains(&UNKNOWN_COLOR));
        for id in 0..=20 {
            assert_eq!(c.id_of(c.color(id)), Some(id));
        }
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cmap.csv");
        let c = Colormap::default_for(5);
        c.write(&p).unwrap();
        assert_eq!(Colormap::load(&p).unwrap(), c);
    }
}
