//! On-disk formats shared by the pipeline stages: 16-bit label and depth
//! PNGs, 8-bit RGB PNGs, pose and intrinsics text files, and JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, LumaA, Rgb, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::grid::{DepthGrid, Grid};

pub fn frame_name(index: usize, ext: &str) -> String {
    format!("{index:06}.{ext}")
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

/// Writes via a sibling temp file and rename, so readers see either the old
/// or the new contents.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    ensure_dir(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(Error::io(&tmp))?;
        f.write_all(bytes).map_err(Error::io(&tmp))?;
        f.sync_all().map_err(Error::io(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(Error::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::json(path))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_u16_png(path: &Path) -> Result<Grid<u16>> {
    let img = image::open(path).map_err(Error::image(path))?.into_luma16();
    let (w, h) = img.dimensions();
    Grid::from_vec(w as usize, h as usize, img.into_raw())
}

pub fn write_u16_png(path: &Path, grid: &Grid<u16>) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        grid.width() as u32,
        grid.height() as u32,
        grid.as_slice().to_vec(),
    )
    .expect("grid buffer matches dimensions");
    img.save(path).map_err(Error::image(path))
}

/// Two 16-bit channels per pixel, stored as gray+alpha.
pub fn write_u16_pair_png(path: &Path, first: &Grid<u16>, second: &Grid<u16>) -> Result<()> {
    if first.dims() != second.dims() {
        return Err(Error::DimMismatch {
            expected: first.dims(),
            found: second.dims(),
        });
    }
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let raw: Vec<u16> = first
        .as_slice()
        .iter()
        .zip(second.as_slice())
        .flat_map(|(&a, &b)| [a, b])
        .collect();
    let img: ImageBuffer<LumaA<u16>, Vec<u16>> =
        ImageBuffer::from_raw(first.width() as u32, first.height() as u32, raw)
            .expect("pair buffer matches dimensions");
    img.save(path).map_err(Error::image(path))
}

pub fn read_u16_pair_png(path: &Path) -> Result<(Grid<u16>, Grid<u16>)> {
    let img = image::open(path).map_err(Error::image(path))?.into_luma_alpha16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    let first = raw.iter().step_by(2).copied().collect();
    let second = raw.iter().skip(1).step_by(2).copied().collect();
    Ok((Grid::from_vec(w, h, first)?, Grid::from_vec(w, h, second)?))
}

/// Depth PNGs hold millimeters; 0 marks an invalid pixel.
pub fn read_depth_png(path: &Path) -> Result<DepthGrid> {
    Ok(read_u16_png(path)?.map(|&mm| mm as f32 / 1000.0))
}

pub fn write_depth_png(path: &Path, depth: &DepthGrid) -> Result<()> {
    let mm = depth.map(|&m| {
        if m.is_finite() && m > 0.0 {
            (m * 1000.0).round().clamp(0.0, u16::MAX as f32) as u16
        } else {
            0
        }
    });
    write_u16_png(path, &mm)
}

pub fn read_rgb_png(path: &Path) -> Result<Grid<[u8; 3]>> {
    let img = image::open(path).map_err(Error::image(path))?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32).0))
}

pub fn write_rgb_png(path: &Path, grid: &Grid<[u8; 3]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let img = RgbImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        Rgb(*grid.get(x as usize, y as usize))
    });
    img.save(path).map_err(Error::image(path))
}

/// `fx fy cx cy width height` on one line.
pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let v = parse_floats(&text, path)?;
    if v.len() != 6 {
        return Err(Error::InvalidInput(format!(
            "{}: expected 6 values, found {}",
            path.display(),
            v.len()
        )));
    }
    Intrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize)
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    let text = format!(
        "{} {} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    );
    write_atomic(path, text.as_bytes())
}

/// 4x4 row-major camera-to-world matrix. The timestamp is not part of the
/// file and is supplied by the caller.
pub fn read_pose(path: &Path, timestamp: f64) -> Result<Pose> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let v = parse_floats(&text, path)?;
    if v.len() != 16 {
        return Err(Error::InvalidInput(format!(
            "{}: expected 16 values, found {}",
            path.display(),
            v.len()
        )));
    }
    let mut m = [[0.0; 4]; 4];
    for (i, val) in v.into_iter().enumerate() {
        m[i / 4][i % 4] = val;
    }
    Pose::from_matrix(&m, timestamp)
}

pub fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    let m = pose.to_matrix();
    let text: String = m
        .iter()
        .map(|row| {
            let cols: Vec<String> = row.iter().map(|v| format!("{v:.12}")).collect();
            cols.join(" ") + "\n"
        })
        .collect();
    write_atomic(path, text.as_bytes())
}

fn parse_floats(text: &str, path: &Path) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: bad number {t:?}: {e}", path.display()))
            })
        })
        .collect()
}

/// Sorted `%06d.<ext>` files in `dir`, with their parsed indices.
pub fn list_frames(dir: &Path, ext: &str) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Ok(idx) = stem.parse::<usize>() {
            out.push((idx, path));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u16_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("000001.png");
        let g = Grid::from_vec(3, 2, vec![0, 1, 186, 200, 65535, 7]).unwrap();
        write_u16_png(&p, &g).unwrap();
        assert_eq!(read_u16_png(&p).unwrap(), g);
    }

    #[test]
    fn pair_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let a = Grid::from_vec(2, 2, vec![300, 0, 100, 5]).unwrap();
        let b = Grid::from_vec(2, 2, vec![100, 0, 0, 1]).unwrap();
        write_u16_pair_png(&p, &a, &b).unwrap();
        assert_eq!(read_u16_pair_png(&p).unwrap(), (a, b));
    }

    #[test]
    fn depth_png_in_millimeters() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let g = Grid::from_vec(2, 1, vec![1.234f32, 0.0]).unwrap();
        write_depth_png(&p, &g).unwrap();
        assert_eq!(read_u16_png(&p).unwrap().as_slice(), &[1234, 0]);
        let back = read_depth_png(&p).unwrap();
        assert!((back.get(0, 0) - 1.234).abs() < 1e-6);
    }

    #[test]
    fn list_frames_sorted_by_index() {
        let dir = tempfile::tempdir().unwrap();
        for i in [3usize, 1, 2] {
            fs::write(dir.path().join(frame_name(i, "txt")), "x").unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let idx: Vec<usize> = list_frames(dir.path(), "txt")
            .unwrap()
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }
}
