//! Binary little-endian PLY for meshes and labeled clouds.
//!
//! Meshes carry `x y z nx ny nz` (float) vertices and `vertex_indices`
//! faces. Labeled clouds add `label label_count label2 label2_count`
//! (ushort) vertex properties.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fusion::{LabeledCloud, TriangleMesh};
use crate::io::write_atomic;
use crate::votes::Vote;

fn header(vertex_count: usize, props: &[(&str, &str)], faces: Option<usize>) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h.push_str(&format!("element vertex {vertex_count}\n"));
    for (ty, name) in props {
        h.push_str(&format!("property {ty} {name}\n"));
    }
    if let Some(n) = faces {
        h.push_str(&format!("element face {n}\nproperty list uchar int vertex_indices\n"));
    }
    h.push_str("end_header\n");
    h
}

const GEOMETRY: [(&str, &str); 6] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("float", "nx"),
    ("float", "ny"),
    ("float", "nz"),
];

fn push_vec(buf: &mut Vec<u8>, v: &Vector3<f64>) {
    for c in v.iter() {
        buf.extend_from_slice(&(*c as f32).to_le_bytes());
    }
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    mesh.validate()?;
    let mut buf = header(mesh.vertices.len(), &GEOMETRY, Some(mesh.faces.len())).into_bytes();
    for (p, n) in mesh.vertices.iter().zip(&mesh.normals) {
        push_vec(&mut buf, p);
        push_vec(&mut buf, n);
    }
    for f in &mesh.faces {
        buf.push(3);
        for &i in f {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

fn clamp_count(c: u32) -> u16 {
    c.min(u16::MAX as u32) as u16
}

pub fn write_labeled_cloud(path: &Path, cloud: &LabeledCloud) -> Result<()> {
    cloud.validate()?;
    let mut props = GEOMETRY.to_vec();
    props.extend([
        ("ushort", "label"),
        ("ushort", "label_count"),
        ("ushort", "label2"),
        ("ushort", "label2_count"),
    ]);
    let mut buf = header(cloud.len(), &props, None).into_bytes();
    for i in 0..cloud.len() {
        push_vec(&mut buf, &cloud.points[i]);
        push_vec(&mut buf, &cloud.normals[i]);
        for v in [
            cloud.top1[i].id,
            clamp_count(cloud.top1[i].count),
            cloud.top2[i].id,
            clamp_count(cloud.top2[i].count),
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Ply(format!("unknown scalar type {other}"))),
        })
    }

    fn read(self, r: &mut impl Read) -> std::io::Result<f64> {
        macro_rules! rd {
            ($t:ty) => {{
                let mut b = [0u8; std::mem::size_of::<$t>()];
                r.read_exact(&mut b)?;
                <$t>::from_le_bytes(b) as f64
            }};
        }
        Ok(match self {
            Scalar::I8 => rd!(i8),
            Scalar::U8 => rd!(u8),
            Scalar::I16 => rd!(i16),
            Scalar::U16 => rd!(u16),
            Scalar::I32 => rd!(i32),
            Scalar::U32 => rd!(u32),
            Scalar::F32 => rd!(f32),
            Scalar::F64 => rd!(f64),
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Scalar columns of every element plus face index lists.
#[derive(Debug, Default)]
pub struct PlyData {
    pub vertex: HashMap<String, Vec<f64>>,
    pub vertex_count: usize,
    pub faces: Vec<Vec<u32>>,
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(Error::io(path))? == 0 {
            return Err(Error::Ply(format!("{}: truncated header", path.display())));
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if first {
            if t != ["ply"] {
                return Err(Error::Ply(format!("{}: not a ply file", path.display())));
            }
            first = false;
            continue;
        }
        match t.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, _] => {
                return Err(Error::Ply(format!("unsupported ply format {other}")));
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Ply(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .props
                .push(Property::List(name.to_string(), Scalar::parse(ct)?, Scalar::parse(it)?)),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty)?)),
            ["end_header"] => break,
            _ => {}
        }
    }
    if !format_ok {
        return Err(Error::Ply("missing format line".into()));
    }
    let mut data = PlyData::default();
    let trunc = |e: std::io::Error| Error::Ply(format!("{}: {e}", path.display()));
    for el in &elements {
        let is_vertex = el.name == "vertex";
        if is_vertex {
            data.vertex_count = el.count;
            for p in &el.props {
                if let Property::Scalar(name, _) = p {
                    data.vertex.insert(name.clone(), Vec::with_capacity(el.count));
                }
            }
        }
        for _ in 0..el.count {
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = ty.read(&mut r).map_err(trunc)?;
                        if is_vertex {
                            data.vertex.get_mut(name).expect("column exists").push(v);
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = ct.read(&mut r).map_err(trunc)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(it.read(&mut r).map_err(trunc)? as u32);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            data.faces.push(idx);
                        }
                    }
                }
            }
        }
    }
    Ok(data)
}

fn column<'a>(data: &'a PlyData, name: &str) -> Result<&'a [f64]> {
    data.vertex
        .get(name)
        .map(|v| v.as_slice())
        .ok_or_else(|| Error::Ply(format!("missing vertex property {name}")))
}

fn vectors(data: &PlyData, names: [&str; 3]) -> Result<Vec<Vector3<f64>>> {
    let [a, b, c] = names.map(|n| column(data, n));
    let (a, b, c) = (a?, b?, c?);
    Ok((0..data.vertex_count)
        .map(|i| Vector3::new(a[i], b[i], c[i]))
        .collect())
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let data = read_ply(path)?;
    let vertices = vectors(&data, ["x", "y", "z"])?;
    let normals = if data.vertex.contains_key("nx") {
        vectors(&data, ["nx", "ny", "nz"])?
    } else {
        vec![Vector3::z(); vertices.len()]
    };
    let mut faces = Vec::with_capacity(data.faces.len());
    for f in &data.faces {
        // fan-triangulate polygons
        for k in 1..f.len().saturating_sub(1) {
            faces.push([f[0], f[k], f[k + 1]]);
        }
    }
    let mesh = TriangleMesh {
        vertices,
        normals,
        faces,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Reads a labeled cloud. Missing label columns read as 0; a plain mesh
/// file therefore loads as an unlabeled cloud.
pub fn read_labeled_cloud(path: &Path, space: &str) -> Result<LabeledCloud> {
    let data = read_ply(path)?;
    let points = vectors(&data, ["x", "y", "z"])?;
    let normals = if data.vertex.contains_key("nx") {
        vectors(&data, ["nx", "ny", "nz"])?
    } else {
        vec![Vector3::z(); points.len()]
    };
    let col = |name: &str| -> Vec<f64> {
        data.vertex
            .get(name)
            .cloned()
            .unwrap_or_else(|| vec![0.0; data.vertex_count])
    };
    let (l1, c1, l2, c2) = (col("label"), col("label_count"), col("label2"), col("label2_count"));
    let vote = |id: f64, c: f64| Vote {
        id: id as u16,
        count: c as u32,
    };
    Ok(LabeledCloud {
        points,
        normals,
        top1: (0..data.vertex_count).map(|i| vote(l1[i], c1[i])).collect(),
        top2: (0..data.vertex_count).map(|i| vote(l2[i], c2[i])).collect(),
        space: space.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mesh.ply");
        let mesh = TriangleMesh {
            vertices: vec![Vector3::zeros(), Vector3::x(), Vector3::y()],
            normals: vec![Vector3::z(); 3],
            faces: vec![[0, 1, 2]],
        };
        write_mesh(&p, &mesh).unwrap();
        let text = fs::read(&p).unwrap();
        let head = String::from_utf8_lossy(&text[..400.min(text.len())]).to_string();
        assert!(head.contains("format binary_little_endian 1.0"));
        assert!(head.contains("property list uchar int vertex_indices"));
        assert_eq!(read_mesh(&p).unwrap(), mesh);
    }

    #[test]
    fn labeled_cloud_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cloud.ply");
        let cloud = LabeledCloud {
            points: vec![Vector3::new(0.5, -1.0, 2.0)],
            normals: vec![Vector3::x()],
            top1: vec![Vote { id: 186, count: 7 }],
            top2: vec![Vote { id: 3, count: 2 }],
            space: "wordnet".into(),
        };
        write_labeled_cloud(&p, &cloud).unwrap();
        let back = read_labeled_cloud(&p, "wordnet").unwrap();
        assert_eq!(back, cloud);
        let data = read_ply(&p).unwrap();
        for name in ["label", "label_count", "label2", "label2_count"] {
            assert!(data.vertex.contains_key(name));
        }
    }

    #[test]
    fn rejects_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n").unwrap();
        assert!(read_ply(&p).is_err());
    }
}
