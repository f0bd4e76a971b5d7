use nalgebra::Vector3;
use proptest::prelude::*;

use semfuse_core::fusion::{downsample, extract_mesh, integrate_scene, LabeledCloud, TsdfConfig};
use semfuse_core::geometry::Intrinsics;
use semfuse_core::ingest::Frame;
use semfuse_core::lift::{lift, LiftConfig};
use semfuse_core::labelspace::LabelMap;
use semfuse_core::synth::{cube_scene, orbit, render_frames, sphere_scene};
use semfuse_core::votes::Vote;

fn cloud(points: &[(f64, f64, f64, u16)]) -> LabeledCloud {
    LabeledCloud {
        points: points.iter().map(|p| Vector3::new(p.0, p.1, p.2)).collect(),
        normals: vec![Vector3::z(); points.len()],
        top1: points.iter().map(|p| Vote { id: p.3, count: 1 }).collect(),
        top2: vec![Vote::default(); points.len()],
        space: "s".into(),
    }
}

proptest! {
    #[test]
    fn downsample_ignores_point_order(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0u16..4), 1..80),
        voxel in 0.05f64..0.6,
    ) {
        let a = downsample(&cloud(&pts), voxel).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let b = downsample(&cloud(&rev), voxel).unwrap();
        prop_assert_eq!(a.len(), b.len());
        prop_assert_eq!(a.labels(), b.labels());
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((p - q).norm() < 1e-12);
        }
        // one output per occupied voxel
        let cells: std::collections::BTreeSet<[i64; 3]> = pts
            .iter()
            .map(|p| [p.0, p.1, p.2].map(|c| (c / voxel).floor() as i64))
            .collect();
        prop_assert_eq!(a.len(), cells.len());
    }
}

#[test]
fn fused_sphere_stays_on_the_surface() {
    let k = Intrinsics::new(120.0, 120.0, 59.5, 59.5, 120, 120).unwrap();
    let c = Vector3::new(0.2, -0.1, 0.3);
    let frames: Vec<Frame> = render_frames(&sphere_scene(c, 0.4), &orbit(c, 1.4, 0.3, 12, 0.5), &k)
        .into_iter()
        .map(|f| f.0)
        .collect();
    let cfg = TsdfConfig {
        voxel_size: 0.02,
        truncation: 0.06,
        ..Default::default()
    };
    let mesh = extract_mesh(&integrate_scene(&frames, &k, cfg).unwrap());
    mesh.validate().unwrap();
    assert!(mesh.vertices.len() > 1000);
    let worst = mesh.vertices.iter().map(|v| ((v - c).norm() - 0.4).abs()).fold(0.0, f64::max);
    assert!(worst < 0.02, "worst radial error {worst}");
}

#[test]
fn lifted_cube_faces_follow_the_views() {
    let k = Intrinsics::new(100.0, 100.0, 49.5, 49.5, 100, 100).unwrap();
    let c = Vector3::zeros();
    let frames = render_frames(&cube_scene(c, 1.0), &orbit(c, 2.5, 1.0, 8, 0.0), &k);
    let maps: Vec<LabelMap> = frames.iter().map(|f| LabelMap::new(f.1.clone(), "cube")).collect();
    let views: Vec<(&Frame, &LabelMap)> = frames.iter().map(|f| &f.0).zip(&maps).collect();
    // +z top face center and the bottom face, which no camera sees
    let pts = LabeledCloud::from_geometry(
        vec![Vector3::new(0.1, 0.1, 0.5), Vector3::new(0.0, 0.0, -0.5)],
        vec![Vector3::z(), -Vector3::z()],
        "cube",
    );
    let out = lift(&pts, &views, &k, &LiftConfig::default()).unwrap();
    assert_eq!(out.labels(), vec![6, 0]);
    assert!(out.top1[0].count >= 4);
}
