//! Analytic test scenes: ray-cast depth and ground-truth labels for rooms,
//! planes, spheres and face-labeled cubes, camera trajectories, simulated
//! noisy segmentation models, and raw recording directories.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Intrinsics, Pose};
use crate::grid::{DepthGrid, Grid};
use crate::ingest::{Frame, StreamTimestamps};
use crate::io;
use crate::labelspace::{LabelClass, LabelSpace};
use crate::render::Colormap;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
        label: u16,
    },
    /// Axis-aligned box. Face labels are ordered -x, +x, -y, +y, -z, +z.
    /// An inward box is seen from inside (a room).
    Box {
        min: [f64; 3],
        max: [f64; 3],
        labels: [u16; 6],
        #[serde(default)]
        inward: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub label: u16,
    pub normal: Vector3<f64>,
}

fn v(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn axis(i: usize) -> Vector3<f64> {
    let mut n = Vector3::zeros();
    n[i] = 1.0;
    n
}

impl Primitive {
    pub fn solid_box(min: [f64; 3], max: [f64; 3], label: u16) -> Self {
        Primitive::Box {
            min,
            max,
            labels: [label; 6],
            inward: false,
        }
    }

    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        match *self {
            Primitive::Sphere { center, radius, label } => {
                let oc = o - v(center);
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = if -b - s > EPS { -b - s } else { -b + s };
                (t > EPS).then(|| {
                    let p = o + d * t;
                    Hit {
                        t,
                        label,
                        normal: (p - v(center)).normalize(),
                    }
                })
            }
            Primitive::Box {
                min,
                max,
                labels,
                inward,
            } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let (mut near_face, mut far_face) = (0, 0);
                for i in 0..3 {
                    let inv = 1.0 / d[i];
                    let (t0, t1) = ((min[i] - o[i]) * inv, (max[i] - o[i]) * inv);
                    // face index hit first along +d on this axis
                    let (lo, hi, flo, fhi) = if t0 <= t1 {
                        (t0, t1, 2 * i, 2 * i + 1)
                    } else {
                        (t1, t0, 2 * i + 1, 2 * i)
                    };
                    if lo > t_near {
                        t_near = lo;
                        near_face = flo;
                    }
                    if hi < t_far {
                        t_far = hi;
                        far_face = fhi;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (t, face) = if inward { (t_far, far_face) } else { (t_near, near_face) };
                if !(t > EPS) || !t.is_finite() {
                    return None;
                }
                let outward = if face % 2 == 0 { -axis(face / 2) } else { axis(face / 2) };
                Some(Hit {
                    t,
                    label: labels[face],
                    normal: if inward { -outward } else { outward },
                })
            }
        }
    }

    /// Distance from `p` to the surface and the label of the closest part.
    fn distance(&self, p: &Vector3<f64>) -> (f64, u16) {
        match *self {
            Primitive::Sphere { center, radius, label } => (((p - v(center)).norm() - radius).abs(), label),
            Primitive::Box { min, max, labels, .. } => {
                let mut best = (f64::INFINITY, 0);
                for face in 0..6 {
                    let a = face / 2;
                    let mut q = *p;
                    for i in 0..3 {
                        q[i] = q[i].clamp(min[i], max[i]);
                    }
                    q[a] = if face % 2 == 0 { min[a] } else { max[a] };
                    let d = (p - q).norm();
                    if d < best.0 {
                        best = (d, labels[face]);
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScene {
    pub primitives: Vec<Primitive>,
    /// Names of classes 1..=n.
    pub class_names: Vec<String>,
}

impl SynthScene {
    pub fn label_space(&self, name: &str) -> LabelSpace {
        let classes = self
            .class_names
            .iter()
            .enumerate()
            .map(|(i, n)| LabelClass {
                id: i as u16 + 1,
                name: n.clone(),
                synkey: None,
            })
            .collect();
        LabelSpace::new(name, classes).expect("synthetic class names are unique")
    }

    pub fn cast(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(o, d))
            .min_by(|a, b| a.t.total_cmp(&b.t))
    }

    /// Z-depth and label per pixel center. Pixels that hit nothing get
    /// depth 0 and label 0.
    pub fn render(&self, pose: &Pose, k: &Intrinsics) -> (DepthGrid, Grid<u16>) {
        let origin = pose.translation;
        let rows: Vec<Vec<(f32, u16)>> = (0..k.height)
            .into_par_iter()
            .map(|y| {
                (0..k.width)
                    .map(|x| {
                        let ray_cam = k.ray(x as f64, y as f64);
                        let dir = (pose.rotation * ray_cam).normalize();
                        match self.cast(&origin, &dir) {
                            Some(h) => {
                                let z = (h.t * dir).dot(&(pose.rotation * Vector3::z()));
                                (z as f32, h.label)
                            }
                            None => (0.0, 0),
                        }
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<(f32, u16)> = rows.into_iter().flatten().collect();
        let depth = Grid::from_vec(k.width, k.height, flat.iter().map(|p| p.0).collect()).expect("dims");
        let labels = Grid::from_vec(k.width, k.height, flat.iter().map(|p| p.1).collect()).expect("dims");
        (depth, labels)
    }

    /// Label of the surface closest to `p`.
    pub fn label_at(&self, p: &Vector3<f64>) -> u16 {
        self.primitives
            .iter()
            .map(|prim| prim.distance(p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, l)| l)
            .unwrap_or(0)
    }
}

pub const ROOM_CLASSES: [&str; 10] = [
    "floor",
    "ceiling",
    "wall_west",
    "wall_east",
    "wall_south",
    "wall_north",
    "table",
    "cabinet",
    "ball",
    "crate",
];

pub const ROOM_CENTER: [f64; 3] = [1.6, 1.3, 1.25];

/// A 3.2 x 2.6 x 2.4 m room holding a table, a cabinet, a ball and a
/// crate. `seed` jitters the furniture by up to 15 cm.
pub fn room(seed: u64) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = || if seed == 0 { 0.0 } else { rng.gen_range(-0.15..0.15) };
    let (tx, ty) = (j(), j());
    let (cx, cy) = (j(), j());
    let (bx, by) = (j(), j());
    let (kx, ky) = (j(), j());
    SynthScene {
        primitives: vec![
            Primitive::Box {
                min: [0.0, 0.0, 0.0],
                max: [3.2, 2.6, 2.4],
                labels: [3, 4, 5, 6, 1, 2],
                inward: true,
            },
            Primitive::solid_box([0.3 + tx, 0.3 + ty, 0.0], [1.1 + tx, 0.9 + ty, 0.75], 7),
            Primitive::solid_box([2.5 + cx, 1.8 + cy, 0.0], [3.1 + cx, 2.5 + cy, 1.2], 8),
            Primitive::Sphere {
                center: [2.5 + bx, 0.6 + by, 0.35],
                radius: 0.35,
                label: 9,
            },
            Primitive::solid_box([0.25 + kx, 1.8 + ky, 0.0], [0.75 + kx, 2.3 + ky, 0.5], 10),
        ],
        class_names: ROOM_CLASSES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Infinite-looking plane facing the origin at depth `z` (a huge box wall).
pub fn plane_scene(z: f64) -> SynthScene {
    SynthScene {
        primitives: vec![Primitive::solid_box([-100.0, -100.0, z], [100.0, 100.0, z + 1.0], 1)],
        class_names: vec!["plane".into()],
    }
}

pub fn sphere_scene(center: Vector3<f64>, radius: f64) -> SynthScene {
    SynthScene {
        primitives: vec![Primitive::Sphere {
            center: center.into(),
            radius,
            label: 1,
        }],
        class_names: vec!["sphere".into()],
    }
}

/// Cube centered at `center` with labels 1..=6 on faces -x, +x, -y, +y,
/// -z, +z.
pub fn cube_scene(center: Vector3<f64>, size: f64) -> SynthScene {
    let h = size / 2.0;
    SynthScene {
        primitives: vec![Primitive::Box {
            min: (center - Vector3::repeat(h)).into(),
            max: (center + Vector3::repeat(h)).into(),
            labels: [1, 2, 3, 4, 5, 6],
            inward: false,
        }],
        class_names: ["left", "right", "front", "back", "bottom", "top"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    }
}

/// `n` cameras on a horizontal circle around `center`, looking at it, with
/// roll varying over the orbit.
pub fn orbit(center: Vector3<f64>, radius: f64, height: f64, n: usize, roll_amp: f64) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            let eye = center + Vector3::new(radius * a.cos(), radius * a.sin(), height);
            let roll = roll_amp * (3.0 * a).sin();
            Pose::look_at(Point3::from(eye), Point3::from(center), Vector3::z(), roll, i as f64)
        })
        .collect()
}

/// Camera walking a small circle in the room, looking outward and slightly
/// down, rolling back and forth. `t` in seconds; one lap takes `period`.
pub fn room_pose(t: f64, period: f64) -> Pose {
    let c = v(ROOM_CENTER);
    let a = TAU * t / period;
    let eye = c + Vector3::new(0.3 * a.cos(), 0.3 * a.sin(), 0.05 * (2.0 * a).sin());
    let look = Vector3::new(a.cos(), a.sin(), 0.7 * (2.0 * a + 0.5).sin() - 0.15);
    let roll = 1.2 * (1.5 * a).sin();
    Pose::look_at(Point3::from(eye), Point3::from(eye + look), Vector3::z(), roll, t)
}

/// Frames rendered directly from the scene, returned with their
/// ground-truth label maps.
pub fn render_frames(scene: &SynthScene, poses: &[Pose], k: &Intrinsics) -> Vec<(Frame, Grid<u16>)> {
    poses
        .iter()
        .enumerate()
        .map(|(index, pose)| {
            let (depth, labels) = scene.render(pose, k);
            (
                Frame {
                    index,
                    timestamp: pose.timestamp,
                    color: None,
                    depth,
                    pose: *pose,
                    gravity: None,
                },
                labels,
            )
        })
        .collect()
}

/// How a simulated segmentation model damages ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// Probability that a pixel is replaced by a uniformly random class.
    pub noise: f64,
    /// Class pairs the model systematically confuses.
    pub swaps: Vec<(u16, u16)>,
    /// Number of classes; random labels are drawn from 1..=classes.
    pub classes: u16,
    /// Added to every nonzero output id, to emit a model-specific space.
    #[serde(default)]
    pub offset: u16,
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn corrupt(gt: &Grid<u16>, c: &Corruption, seed: u64, frame: usize) -> Grid<u16> {
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, frame));
    gt.map(|&id| {
        // always draw both numbers so the stream does not depend on labels
        let flip = rng.gen_bool(c.noise.clamp(0.0, 1.0));
        let random = rng.gen_range(1..=c.classes.max(1));
        if id == 0 {
            return 0;
        }
        let mut out = c
            .swaps
            .iter()
            .find_map(|&(a, b)| {
                if id == a {
                    Some(b)
                } else if id == b {
                    Some(a)
                } else {
                    None
                }
            })
            .unwrap_or(id);
        if flip {
            out = random;
        }
        out + c.offset
    })
}

/// Raw recording parameters for [`write_room_recording`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingConfig {
    pub seed: u64,
    pub color_size: (usize, usize),
    pub depth_size: (usize, usize),
    pub focal: f64,
    pub color_frames: usize,
    pub color_fps: f64,
    pub depth_fps: f64,
    pub pose_rate: f64,
    /// Pose stream starts this long after the first color frame.
    pub pose_delay: f64,
    /// Seconds per camera lap.
    pub period: f64,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            color_size: (160, 120),
            depth_size: (80, 60),
            focal: 130.0,
            color_frames: 60,
            color_fps: 30.0,
            depth_fps: 60.0,
            pose_rate: 30.0,
            pose_delay: 1.0 / 60.0,
            period: 2.0,
        }
    }
}

impl RecordingConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        let (w, h) = self.color_size;
        Intrinsics::new(
            self.focal,
            self.focal,
            (w as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0,
            w,
            h,
        )
        .expect("valid synthetic intrinsics")
    }
}

/// Writes a raw recording of [`room`] into `dir`: color frames whose
/// pixels are the class colors, lower-resolution depth at its own rate,
/// poses at another, `intrinsics.txt`, `timestamps.json`, `synth.json`,
/// `label_space.csv` and `colormap.csv`. Ground-truth label maps per color
/// frame go to `gt/labels`.
pub fn write_room_recording(dir: &Path, cfg: &RecordingConfig) -> Result<SynthScene> {
    let scene = room(cfg.seed);
    let k = cfg.intrinsics();
    let kd = k.scaled(cfg.depth_size.0, cfg.depth_size.1);
    let cmap = Colormap::default_for(scene.class_names.len() as u16);
    let duration = (cfg.color_frames - 1) as f64 / cfg.color_fps;
    let ts = StreamTimestamps {
        color: (0..cfg.color_frames).map(|i| i as f64 / cfg.color_fps).collect(),
        depth: (0..)
            .map(|i| i as f64 / cfg.depth_fps)
            .take_while(|&t| t <= duration + 0.5 / cfg.depth_fps)
            .collect(),
        pose: (0..)
            .map(|i| cfg.pose_delay + i as f64 / cfg.pose_rate)
            .take_while(|&t| t <= duration + 1.0 / cfg.pose_rate)
            .collect(),
    };
    for sub in ["color", "depth", "pose", "gt/labels"] {
        io::ensure_dir(&dir.join(sub))?;
    }
    ts.color.par_iter().enumerate().try_for_each(|(i, &t)| -> Result<()> {
        let (_, labels) = scene.render(&room_pose(t, cfg.period), &k);
        io::write_rgb_png(&dir.join("color").join(io::frame_name(i, "png")), &labels.map(|&l| cmap.color(l)))?;
        io::write_u16_png(&dir.join("gt/labels").join(io::frame_name(i, "png")), &labels)
    })?;
    ts.depth.par_iter().enumerate().try_for_each(|(i, &t)| {
        let (depth, _) = scene.render(&room_pose(t, cfg.period), &kd);
        io::write_depth_png(&dir.join("depth").join(io::frame_name(i, "png")), &depth)
    })?;
    for (i, &t) in ts.pose.iter().enumerate() {
        io::write_pose(&dir.join("pose").join(io::frame_name(i, "txt")), &room_pose(t, cfg.period))?;
    }
    io::write_intrinsics(&dir.join("intrinsics.txt"), &k)?;
    io::write_json(&dir.join("timestamps.json"), &ts)?;
    io::write_json(&dir.join("synth.json"), &scene)?;
    crate::labelspace::write_label_space(&scene.label_space("synthetic_room"), &dir.join("label_space.csv"))?;
    cmap.write(&dir.join("colormap.csv"))?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 31.5, 23.5, 64, 48).unwrap()
    }

    #[test]
    fn plane_depth_is_constant() {
        let (depth, labels) = plane_scene(1.0).render(&Pose::identity(0.0), &k());
        assert!(depth.as_slice().iter().all(|&d| (d - 1.0).abs() < 1e-6));
        assert!(labels.as_slice().iter().all(|&l| l == 1));
    }

    #[test]
    fn sphere_center_pixel() {
        let s = sphere_scene(Vector3::new(0.0, 0.0, 2.0), 0.5);
        let k = Intrinsics::new(100.0, 100.0, 32.0, 24.0, 65, 49).unwrap();
        let (depth, _) = s.render(&Pose::identity(0.0), &k);
        assert!((depth.get(32, 24) - 1.5).abs() < 1e-6);
        assert_eq!(*depth.get(0, 0), 0.0);
    }

    #[test]
    fn cube_faces_and_room_hits() {
        let cube = cube_scene(Vector3::zeros(), 1.0);
        let hit = cube.cast(&Vector3::new(0.0, 0.0, 3.0), &-Vector3::z()).unwrap();
        assert_eq!((hit.label, hit.t), (6, 2.5));
        assert_eq!(hit.normal, Vector3::z());
        let r = room(0);
        let hit = r.cast(&v(ROOM_CENTER), &-Vector3::z()).unwrap();
        assert!(hit.label == 1 || hit.label == 7);
        let up = r.cast(&v(ROOM_CENTER), &Vector3::z()).unwrap();
        assert_eq!(up.label, 2);
        assert_eq!(up.normal, -Vector3::z());
    }

    #[test]
    fn label_at_nearest_surface() {
        let r = room(0);
        assert_eq!(r.label_at(&Vector3::new(1.6, 1.3, 0.01)), 1);
        assert_eq!(r.label_at(&Vector3::new(0.01, 1.3, 1.5)), 3);
        let cube = cube_scene(Vector3::zeros(), 1.0);
        assert_eq!(cube.label_at(&Vector3::new(0.1, 0.0, 0.5)), 6);
    }

    #[test]
    fn corruption_is_seeded_and_swaps() {
        let gt = Grid::from_fn(40, 30, |x, _| (x % 4) as u16);
        let c = Corruption {
            noise: 0.0,
            swaps: vec![(1, 2)],
            classes: 3,
            offset: 0,
        };
        let out = corrupt(&gt, &c, 1, 0);
        assert_eq!(*out.get(1, 0), 2);
        assert_eq!(*out.get(2, 0), 1);
        assert_eq!(*out.get(3, 0), 3);
        assert_eq!(*out.get(0, 0), 0);
        let noisy = Corruption { noise: 0.3, ..c };
        assert_eq!(corrupt(&gt, &noisy, 5, 3), corrupt(&gt, &noisy, 5, 3));
        assert_ne!(corrupt(&gt, &noisy, 5, 3), corrupt(&gt, &noisy, 5, 4));
    }

    #[test]
    fn room_trajectory_rolls_past_quarter_turns() {
        use crate::gravity::compute_alignment;
        let ks: std::collections::BTreeSet<u8> =
            (0..60).map(|i| compute_alignment(&room_pose(i as f64 / 30.0, 2.0)).k).collect();
        assert!(ks.len() >= 2, "{ks:?}");
    }
}
