use std::collections::HashMap;

use nalgebra::Vector3;

use super::tables::{CORNERS, EDGES, TRIANGLES};
use super::{TriangleMesh, TsdfVolume};

/// Zero level set of the observed part of `vol`. Cells are skipped unless
/// all eight corners have been observed.
pub fn extract_mesh(vol: &TsdfVolume) -> TriangleMesh {
    let [nx, ny, nz] = vol.dims();
    let mut mesh = TriangleMesh::default();
    // (lower voxel linear index, axis) -> vertex id
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();
    let linear = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;

    for [ri, rj, rk] in vol.cell_blocks() {
        for k in rk.clone() {
            if k + 1 >= nz {
                continue;
            }
            for j in rj.clone() {
                if j + 1 >= ny {
                    continue;
                }
                'cell: for i in ri.clone() {
                    if i + 1 >= nx {
                        continue;
                    }
                    let mut values = [0f32; 8];
                    let mut config = 0usize;
                    for (c, off) in CORNERS.iter().enumerate() {
                        let (t, w) = vol
                            .voxel(i + off[0], j + off[1], k + off[2])
                            .expect("corner inside grid");
                        if w == 0 {
                            continue 'cell;
                        }
                        values[c] = t;
                        if t < 0.0 {
                            config |= 1 << c;
                        }
                    }
                    if config == 0 || config == 255 {
                        continue;
                    }
                    let tris = &TRIANGLES[config];
                    let mut t = 0;
                    while t < 16 && tris[t] >= 0 {
                        let mut ids = [0u32; 3];
                        for (slot, &edge) in tris[t..t + 3].iter().enumerate() {
                            let [ca, cb] = EDGES[edge as usize];
                            let (oa, ob) = (CORNERS[ca], CORNERS[cb]);
                            let a = [i + oa[0], j + oa[1], k + oa[2]];
                            let b = [i + ob[0], j + ob[1], k + ob[2]];
                            let (lo, axis) = edge_key(a, b);
                            let key = (linear(lo[0], lo[1], lo[2]), axis);
                            ids[slot] = *edge_vertex.entry(key).or_insert_with(|| {
                                let (p, n) = edge_vertex_at(vol, a, values[ca], b, values[cb]);
                                mesh.vertices.push(p);
                                mesh.normals.push(n);
                                (mesh.vertices.len() - 1) as u32
                            });
                        }
                        if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                            mesh.faces.push(ids);
                        }
                        t += 3;
                    }
                }
            }
        }
    }
    orient_faces(&mut mesh);
    fill_degenerate_normals(&mut mesh);
    mesh
}

fn edge_key(a: [usize; 3], b: [usize; 3]) -> ([usize; 3], u8) {
    let axis = (0..3).find(|&ax| a[ax] != b[ax]).expect("edge spans one axis") as u8;
    let lo = if a[axis as usize] < b[axis as usize] { a } else { b };
    (lo, axis)
}

fn edge_vertex_at(
    vol: &TsdfVolume,
    a: [usize; 3],
    va: f32,
    b: [usize; 3],
    vb: f32,
) -> (Vector3<f64>, Vector3<f64>) {
    let s = if (va - vb).abs() > f32::EPSILON {
        (va as f64 / (va as f64 - vb as f64)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let pa = vol.voxel_center(a[0], a[1], a[2]);
    let pb = vol.voxel_center(b[0], b[1], b[2]);
    let ga = gradient(vol, a);
    let gb = gradient(vol, b);
    let g = ga * (1.0 - s) + gb * s;
    let n = if g.norm() > 1e-12 {
        g.normalize()
    } else {
        Vector3::zeros()
    };
    (pa + (pb - pa) * s, n)
}

/// Central differences over observed neighbors, one-sided where a neighbor
/// is missing.
fn gradient(vol: &TsdfVolume, v: [usize; 3]) -> Vector3<f64> {
    let here = vol.voxel(v[0], v[1], v[2]).map(|(t, _)| t as f64).unwrap_or(0.0);
    let mut g = Vector3::zeros();
    for axis in 0..3 {
        let sample = |delta: isize| -> Option<f64> {
            let idx = v[axis] as isize + delta;
            if idx < 0 {
                return None;
            }
            let mut p = v;
            p[axis] = idx as usize;
            match vol.voxel(p[0], p[1], p[2]) {
                Some((t, w)) if w > 0 => Some(t as f64),
                _ => None,
            }
        };
        g[axis] = match (sample(-1), sample(1)) {
            (Some(lo), Some(hi)) => (hi - lo) / 2.0,
            (None, Some(hi)) => hi - here,
            (Some(lo), None) => here - lo,
            (None, None) => 0.0,
        };
    }
    g
}

/// Flips triangles whose geometric normal disagrees with their vertex
/// normals, so the winding faces out of the surface.
fn orient_faces(mesh: &mut TriangleMesh) {
    for f in &mut mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
        let geo = (b - a).cross(&(c - a));
        let avg: Vector3<f64> = f.iter().map(|&i| mesh.normals[i as usize]).sum();
        if geo.dot(&avg) < 0.0 {
            f.swap(1, 2);
        }
    }
}

fn fill_degenerate_normals(mesh: &mut TriangleMesh) {
    let degenerate: Vec<usize> = (0..mesh.normals.len())
        .filter(|&i| mesh.normals[i].norm() < 0.5)
        .collect();
    if degenerate.is_empty() {
        return;
    }
    let mut acc = vec![Vector3::zeros(); mesh.vertices.len()];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
        let geo = (b - a).cross(&(c - a));
        for &i in f {
            acc[i as usize] += geo;
        }
    }
    for i in degenerate {
        mesh.normals[i] = if acc[i].norm() > 1e-15 {
            acc[i].normalize()
        } else {
            Vector3::z()
        };
    }
}
