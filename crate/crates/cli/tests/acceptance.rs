//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semfuse_core::consensus::{aggregate, VoteConfig};
use semfuse_core::error::Error;
use semfuse_core::eval::{evaluate, miou, confusion};
use semfuse_core::fusion::{downsample, extract_mesh, integrate_scene, LabeledCloud, TsdfConfig};
use semfuse_core::geometry::{Intrinsics, Pose};
use semfuse_core::gravity::{compute_alignment, projected_sky, rotate_direction, rotate_quarter, unrotate, DEGENERATE_NORM};
use semfuse_core::grid::Grid;
use semfuse_core::ingest::Frame;
use semfuse_core::labelspace::LabelMap;
use semfuse_core::lift::{lift, visible, LiftConfig};
use semfuse_core::orchestrator::{
    compute_pending, estimate, execute, ResourceAnchor, ResourceModel, StateStore, TaskGraph, TaskKind, TaskSpec,
    BuiltinStage,
};
use semfuse_core::synth::{corrupt, cube_scene, orbit, plane_scene, render_frames, room, room_pose, sphere_scene, Corruption};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform_quaternion(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    // Shoemake's subgroup algorithm
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(Quaternion::new(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    ))
}

fn gravity_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for i in 0..10_000 {
        let pose = Pose::new(uniform_quaternion(&mut rng), Vector3::zeros(), 0.0);
        let info = compute_alignment(&pose);
        // exhaustive argmin over s, ties to the smaller s
        let dist = |s: u8| {
            let d = (info.alpha - s as f64 * FRAC_PI_2).rem_euclid(TAU);
            d.min(TAU - d)
        };
        let oracle = (0..4u8).fold(0u8, |best, s| if dist(s) < dist(best) { s } else { best });
        check(info.k == oracle, || format!("quaternion {i}: k={} but argmin is {oracle}", info.k))?;
        let (x, y) = projected_sky(&pose);
        if x.hypot(y) < DEGENERATE_NORM {
            degenerate += 1;
            continue;
        }
        // sky direction in image coordinates after the turn, against image-up
        let (dx, dy) = rotate_direction(x, y, info.k);
        let residual = (-dy / dx.hypot(dy)).clamp(-1.0, 1.0).acos();
        worst = worst.max(residual);
        check(residual <= FRAC_PI_4 + 1e-9, || format!("quaternion {i}: residual {residual}"))?;
    }
    Ok(format!("max residual {worst:.4} rad, {degenerate} degenerate"))
}

fn rotation_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let g = Grid::from_fn(w, h, |_, _| rng.gen::<u16>());
        for k in 0..4 {
            let back = rotate_quarter(&g, k).and_then(|r| unrotate(&r, k)).map_err(|e| e.to_string())?;
            check(back == g, || format!("map {i} ({w}x{h}) k={k} differs after round trip"))?;
        }
    }
    Ok("4000 round trips".into())
}

fn fuse_mesh(scene: &semfuse_core::synth::SynthScene, poses: &[Pose], k: &Intrinsics) -> Result<Vec<Vector3<f64>>, String> {
    let frames: Vec<Frame> = render_frames(scene, poses, k).into_iter().map(|f| f.0).collect();
    let vol = integrate_scene(&frames, k, TsdfConfig::default()).map_err(|e| e.to_string())?;
    let mesh = extract_mesh(&vol);
    check(!mesh.vertices.is_empty(), || "empty mesh".into())?;
    Ok(mesh.vertices)
}

fn tsdf_geometry() -> Outcome {
    let k = Intrinsics::new(150.0, 150.0, 79.5, 59.5, 160, 120).unwrap();
    let offsets = [(0.0, 0.0), (0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1)];
    let poses: Vec<Pose> = offsets
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Pose::new(UnitQuaternion::identity(), Vector3::new(x, y, 0.0), i as f64))
        .collect();
    let plane = fuse_mesh(&plane_scene(1.0), &poses, &k)?;
    let plane_err = plane.iter().map(|v| (v.z - 1.0).abs()).fold(0.0, f64::max);
    check(plane_err <= 0.008, || format!("plane vertex {plane_err:.4} m off the plane"))?;

    let k = Intrinsics::new(200.0, 200.0, 99.5, 99.5, 200, 200).unwrap();
    let c = Vector3::zeros();
    let sphere = fuse_mesh(&sphere_scene(c, 0.5), &orbit(c, 1.5, 0.4, 20, 0.0), &k)?;
    let ms = sphere.iter().map(|v| ((v - c).norm() - 0.5).powi(2)).sum::<f64>() / sphere.len() as f64;
    let rms = ms.sqrt();
    check(rms <= 0.008, || format!("sphere radius RMS {rms:.4} m"))?;
    Ok(format!(
        "plane max {:.1} mm over {} vertices, sphere RMS {:.1} mm over {}",
        plane_err * 1e3,
        plane.len(),
        rms * 1e3,
        sphere.len()
    ))
}

/// Weighted tally by hand: (top1, top2) as (id, weight), 0 abstaining.
fn brute_force(stack: &[(u16, f64)], min_votes: f64) -> ((u16, f64), (u16, f64)) {
    let mut sums: BTreeMap<u16, f64> = BTreeMap::new();
    for &(id, w) in stack {
        if id != 0 {
            *sums.entry(id).or_default() += w;
        }
    }
    let best = |skip: Option<u16>| {
        sums.iter()
            .filter(|(id, _)| Some(**id) != skip)
            .fold(None, |acc: Option<(u16, f64)>, (&id, &w)| match acc {
                Some((_, bw)) if bw >= w => acc,
                _ => Some((id, w)),
            })
            .unwrap_or((0, 0.0))
    };
    let a = best(None);
    if a.0 == 0 || a.1 < min_votes {
        return ((0, 0.0), (0, 0.0));
    }
    (a, best(Some(a.0)))
}

fn consensus_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..500 {
        let n = rng.gen_range(1..=7);
        // quarter multiples keep every sum exact, whatever the order
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=12) as f64 * 0.25).collect();
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let labels: Vec<u16> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        let min_votes = [0.0, 0.5, 1.0, 2.0, 2.5][rng.gen_range(0..5)];
        let names: Vec<String> = (0..n).map(|s| format!("m{s}")).collect();
        let cfg = VoteConfig {
            weights: names.iter().cloned().zip(weights.iter().copied()).collect(),
            min_votes,
        };
        let mut preds: Vec<(String, LabelMap)> = names
            .iter()
            .zip(&labels)
            .map(|(s, &id)| (s.clone(), LabelMap::filled(1, 1, id, "s")))
            .collect();
        let map = aggregate(&preds, &cfg).map_err(|e| e.to_string())?;
        let (a, b) = map.pixel(0, 0);
        let stack: Vec<(u16, f64)> = labels.iter().copied().zip(weights.iter().copied()).collect();
        let want = brute_force(&stack, min_votes);
        check(((a.id, a.count), (b.id, b.count)) == want, || {
            format!("stack {i} {stack:?} min {min_votes}: got {:?} want {want:?}", ((a.id, a.count), (b.id, b.count)))
        })?;
        preds.shuffle(&mut rng);
        let shuffled = aggregate(&preds, &cfg).map_err(|e| e.to_string())?;
        check(shuffled == map, || format!("stack {i} changes under permutation"))?;
    }
    Ok("500 stacks agree".into())
}

fn lifting_exactness() -> Outcome {
    let k = Intrinsics::new(200.0, 200.0, 99.5, 99.5, 200, 200).unwrap();
    let c = Vector3::zeros();
    let scene = cube_scene(c, 1.0);
    let mut poses = Vec::new();
    for h in [-1.2, 0.0, 1.2] {
        // offset so no camera looks at a face edge-on
        for p in orbit(c, 2.5, h, 8, 0.3) {
            let a = TAU / 16.0;
            let eye = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a) * p.translation;
            poses.push(Pose::look_at(Point3::from(eye), Point3::origin(), Vector3::z(), 0.0, poses.len() as f64));
        }
    }
    let rendered = render_frames(&scene, &poses, &k);
    // face samples kept 0.1 m from every edge; labels 1..6 for -x,+x,-y,+y,-z,+z
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for axis in 0..3 {
        for (side, sign) in [(0u16, -1.0), (1, 1.0)] {
            for i in 0..9 {
                for j in 0..9 {
                    let (s, t) = (-0.4 + 0.1 * i as f64, -0.4 + 0.1 * j as f64);
                    let mut p = Vector3::zeros();
                    p[axis] = 0.5 * sign;
                    p[(axis + 1) % 3] = s;
                    p[(axis + 2) % 3] = t;
                    pts.push(p);
                    truth.push(2 * axis as u16 + side + 1);
                }
            }
        }
    }
    let cloud = LabeledCloud::from_geometry(pts.clone(), vec![Vector3::z(); pts.len()], "cube");
    let maps: Vec<LabelMap> = rendered.iter().map(|(_, g)| LabelMap::new(g.clone(), "cube")).collect();
    let mut views: Vec<(&Frame, &LabelMap)> = rendered.iter().map(|f| &f.0).zip(&maps).collect();
    let cfg = LiftConfig::default();
    let out = lift(&cloud, &views, &k, &cfg).map_err(|e| e.to_string())?;
    let mut seen = 0;
    for (i, p) in pts.iter().enumerate() {
        if !views.iter().any(|(f, _)| visible(p, f, &k, cfg.occlusion_tol, 0).is_some()) {
            continue;
        }
        seen += 1;
        check(out.top1[i].id == truth[i], || {
            format!("point {p:?} labeled {} instead of {}", out.top1[i].id, truth[i])
        })?;
    }
    check(seen == pts.len(), || format!("only {seen}/{} samples visible", pts.len()))?;
    views.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let permuted = lift(&cloud, &views, &k, &cfg).map_err(|e| e.to_string())?;
    check(permuted == out, || "frame permutation changes the output".into())?;
    Ok(format!("{seen} visible samples correct"))
}

fn metrics_example() -> Outcome {
    let m = evaluate(&[1, 1, 2, 2], &[1, 2, 2, 2], None).map_err(|e| e.to_string())?;
    check(m.per_class_iou.get(&1) == Some(&0.5), || format!("IoU1 {:?}", m.per_class_iou.get(&1)))?;
    check(m.per_class_iou.get(&2) == Some(&(2.0 / 3.0)), || format!("IoU2 {:?}", m.per_class_iou.get(&2)))?;
    check(m.miou == 7.0 / 12.0, || format!("mIoU {}", m.miou))?;
    check(m.tacc == 0.75, || format!("tAcc {}", m.tacc))?;
    let p = evaluate(&[1, 1, 2, 3], &[1, 1, 2, 3], None).map_err(|e| e.to_string())?;
    check(
        p.miou == 1.0 && p.macc == 1.0 && p.tacc == 1.0 && p.per_class_iou.values().all(|&v| v == 1.0),
        || format!("perfect prediction scored {p:?}"),
    )?;
    Ok("exact".into())
}

fn random_dag(rng: &mut impl Rng) -> TaskGraph {
    let n = rng.gen_range(2..=12);
    let p = rng.gen_range(0.1..0.5);
    let tasks = (0..n)
        .map(|i| TaskSpec {
            name: format!("t{i:02}"),
            kind: TaskKind::Builtin {
                stage: BuiltinStage::Postprocess,
            },
            deps: (0..i).filter(|_| rng.gen_bool(p)).map(|j| format!("t{j:02}")).collect(),
            resources: ResourceModel::minimal(),
            visualizable: false,
        })
        .collect();
    TaskGraph::new(tasks).expect("valid dag")
}

#[derive(Default)]
struct Trace {
    done: BTreeSet<String>,
    order: Vec<String>,
    violation: Option<String>,
}

fn scheduler_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rounds = 0;
    for d in 0..200 {
        let graph = random_dag(&mut rng);
        let store = StateStore::new(tmp.path().join(format!("dag{d}")));
        let failing: BTreeSet<String> = graph
            .tasks()
            .iter()
            .filter(|_| rng.gen_bool(0.2))
            .map(|t| t.name.clone())
            .collect();
        let trace = Mutex::new(Trace::default());
        let parallel = rng.gen_range(1..=4);

        // first pass: failures only, from a clean state
        let first = |t: &TaskSpec, _: &Path| -> semfuse_core::Result<i32> {
            let mut tr = trace.lock().unwrap();
            if failing.contains(&t.name) {
                return Ok(1);
            }
            tr.done.insert(t.name.clone());
            tr.order.push(t.name.clone());
            Ok(0)
        };
        execute(&graph, &store, &first, parallel).map_err(|e| e.to_string())?;
        let runnable: BTreeSet<String> = graph
            .tasks()
            .iter()
            .filter(|t| !failing.contains(&t.name) && graph.ancestors(&t.name).is_disjoint(&failing))
            .map(|t| t.name.clone())
            .collect();
        let oracle: Vec<String> = graph
            .topo_order()
            .iter()
            .filter(|t| !runnable.contains(&t.name))
            .map(|t| t.name.clone())
            .collect();
        check(trace.lock().unwrap().done == runnable, || format!("dag {d}: executed set differs from oracle"))?;
        check(compute_pending(&graph, &store) == oracle, || format!("dag {d}: pending differs from oracle"))?;

        // recovery passes with random failures and crashes
        let fail_rng = Mutex::new(ChaCha8Rng::seed_from_u64(1000 + d));
        let retry = |t: &TaskSpec, _: &Path| -> semfuse_core::Result<i32> {
            let mut tr = trace.lock().unwrap();
            if tr.done.contains(&t.name) {
                tr.violation.get_or_insert(format!("{} executed again", t.name));
            }
            if let Some(dep) = t.deps.iter().find(|x| !tr.done.contains(*x)) {
                tr.violation.get_or_insert(format!("{} started before {dep}", t.name));
            }
            let r: f64 = fail_rng.lock().unwrap().gen();
            if r < 0.15 {
                return Err(Error::Aborted(t.name.clone()));
            }
            if r < 0.3 {
                return Ok(2);
            }
            tr.done.insert(t.name.clone());
            tr.order.push(t.name.clone());
            Ok(0)
        };
        let mut passes = 0;
        while !compute_pending(&graph, &store).is_empty() {
            passes += 1;
            check(passes <= 200, || format!("dag {d}: no convergence"))?;
            match execute(&graph, &store, &retry, parallel) {
                Ok(_) | Err(Error::Aborted(_)) => {}
                Err(e) => return Err(format!("dag {d}: {e}")),
            }
            let tr = trace.lock().unwrap();
            if let Some(v) = &tr.violation {
                return Err(format!("dag {d}: {v}"));
            }
            let expect: Vec<String> = graph
                .topo_order()
                .iter()
                .filter(|t| !tr.done.contains(&t.name))
                .map(|t| t.name.clone())
                .collect();
            check(compute_pending(&graph, &store) == expect, || format!("dag {d}: pending drifted"))?;
        }
        rounds += passes;
        let tr = trace.lock().unwrap();
        check(tr.order.len() == graph.len(), || format!("dag {d}: {} completions", tr.order.len()))?;
        check(graph.is_linear_extension(&tr.order), || format!("dag {d}: order {:?}", tr.order))?;
    }
    Ok(format!("200 DAGs, {rounds} recovery passes"))
}

/// mIoU of `pred` against `gt` over points.
fn point_miou(gt: &[u16], pred: &LabeledCloud) -> f64 {
    miou(&confusion(gt, &pred.labels()).expect("same length")).expect("nonempty")
}

fn ensemble_benefit() -> Outcome {
    let k = Intrinsics::new(104.0, 104.0, 63.5, 47.5, 128, 96).unwrap();
    let swaps = [(3, 4), (5, 6), (7, 8), (9, 10), (1, 2)];
    let mut margins = Vec::new();
    for s in 0..3u64 {
        let scene = room(s + 1);
        let poses: Vec<Pose> = (0..48).map(|i| room_pose(i as f64 * 2.0 / 48.0, 2.0)).collect();
        let frames = render_frames(&scene, &poses, &k);
        // ground-truth cloud: back-projected depth, voxel majority label
        let mut raw = LabeledCloud::default();
        for (f, gt) in frames.iter().step_by(4) {
            for y in (0..k.height).step_by(2) {
                for x in (0..k.width).step_by(2) {
                    let d = *f.depth.get(x, y) as f64;
                    if d > 0.0 {
                        raw.points.push(f.pose.camera_to_world(&(k.ray(x as f64, y as f64) * d)));
                        raw.normals.push(Vector3::z());
                        raw.top1.push(semfuse_core::votes::Vote { id: *gt.get(x, y), count: 1 });
                        raw.top2.push(Default::default());
                    }
                }
            }
        }
        let cloud = downsample(&raw, 0.04).map_err(|e| e.to_string())?;
        let gt = cloud.labels();
        let cfg = LiftConfig::default();
        for seed in 0..5u64 {
            let names: Vec<String> = (0..swaps.len()).map(|m| format!("model{m}")).collect();
            let models: Vec<Vec<LabelMap>> = swaps
                .iter()
                .enumerate()
                .map(|(m, &pair)| {
                    let c = Corruption { noise: 0.3, swaps: vec![pair], classes: 10, offset: 0 };
                    let mseed = seed * 1000 + s * 100 + m as u64;
                    frames.iter().map(|(f, g)| LabelMap::new(corrupt(g, &c, mseed, f.index), "room")).collect()
                })
                .collect();
            let mut best = 0.0f64;
            for maps in &models {
                let views: Vec<(&Frame, &LabelMap)> = frames.iter().map(|f| &f.0).zip(maps).collect();
                best = best.max(point_miou(&gt, &lift(&cloud, &views, &k, &cfg).map_err(|e| e.to_string())?));
            }
            let vote = VoteConfig::equal(&names);
            let consensus: Vec<LabelMap> = (0..frames.len())
                .map(|i| {
                    let preds: Vec<(String, LabelMap)> =
                        names.iter().cloned().zip(models.iter().map(|m| m[i].clone())).collect();
                    aggregate(&preds, &vote).map(|c| c.labels())
                })
                .collect::<semfuse_core::Result<_>>()
                .map_err(|e| e.to_string())?;
            let views: Vec<(&Frame, &LabelMap)> = frames.iter().map(|f| &f.0).zip(&consensus).collect();
            let fused = point_miou(&gt, &lift(&cloud, &views, &k, &cfg).map_err(|e| e.to_string())?);
            check(fused >= best + 0.05, || {
                format!("scene {s} seed {seed}: consensus {fused:.3} vs best single {best:.3}")
            })?;
            margins.push((fused - best) * 100.0);
        }
    }
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("smallest margin {min:.1} mIoU points over {} runs", margins.len()))
}

fn anchor(frames: u64, cpus: u32, ram_gb: f64, hours: f64, gpus: u32) -> ResourceAnchor {
    ResourceAnchor { frames, cpus, ram_gb, hours, gpus }
}

fn resource_estimation() -> Outcome {
    let e = |m: &ResourceModel, n: u64| estimate(m, n).map_err(|e| e.to_string());
    let single = ResourceModel::new(vec![anchor(500, 4, 16.0, 2.0, 1)]).unwrap();
    for n in [1, 65, 500, 13796, 100_000] {
        let r = e(&single, n)?;
        check((r.cpus, r.ram_gb, r.hours, r.gpus) == (4, 16.0, 2.0, 1), || format!("single anchor at {n}: {r:?}"))?;
    }
    let two = ResourceModel::new(vec![anchor(100, 2, 8.0, 1.0, 0), anchor(300, 4, 16.0, 3.0, 2)]).unwrap();
    let mid = e(&two, 200)?;
    check((mid.cpus, mid.ram_gb, mid.hours, mid.gpus) == (3, 12.0, 2.0, 1), || format!("midpoint {mid:?}"))?;
    let range = ResourceModel::new(vec![anchor(65, 2, 4.0, 0.5, 1), anchor(13796, 16, 64.0, 12.0, 2)]).unwrap();
    for (n, want) in [(1, 65), (64, 65), (65, 65), (13796, 13796), (13797, 13796), (50_000, 13796)] {
        let (r, w) = (e(&range, n)?, e(&range, want)?);
        check(r == w, || format!("{n} frames gave {r:?}, expected the {want}-frame anchor"))?;
    }
    let lo = e(&range, 65)?;
    let hi = e(&range, 13796)?;
    check(lo.cpus == 2 && hi.cpus == 16 && lo.ram_gb == 4.0 && hi.ram_gb == 64.0, || "anchor values".into())?;
    Ok("constants, midpoint and clamps exact".into())
}

fn bundled_scene() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic_room")
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        let dst = to.join(e.file_name());
        if e.file_type()?.is_dir() {
            copy_dir(&e.path(), &dst)?;
        } else {
            std::fs::copy(e.path(), dst)?;
        }
    }
    Ok(())
}

/// Relative path to contents of every PLY and PNG under `dir`.
fn outputs(dir: &Path, root: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            outputs(&p, root, into)?;
        } else if matches!(p.extension().and_then(|x| x.to_str()), Some("ply" | "png")) {
            into.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p)?);
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let src = bundled_scene();
    check(src.join("pipeline.json").exists(), || format!("bundled scene missing at {}", src.display()))?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for i in 0..2 {
        let scene = tmp.path().join(format!("run{i}"));
        copy_dir(&src, &scene).map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_semfuse"))
            .args(["run", "--scene"])
            .arg(&scene)
            .env("SEMFUSE_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || {
            format!("run {i} failed: {}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
        })?;
        let mut files = BTreeMap::new();
        outputs(&scene, &scene, &mut files).map_err(|e| e.to_string())?;
        runs.push(files);
    }
    let (a, b) = (&runs[0], &runs[1]);
    check(a.keys().eq(b.keys()), || "runs wrote different file sets".into())?;
    if let Some((p, _)) = a.iter().find(|(p, bytes)| b[*p] != **bytes) {
        return Err(format!("{} differs between runs", p.display()));
    }
    check(a.keys().any(|p| p.ends_with("labeled_cloud.ply")), || "no labeled cloud written".into())?;
    Ok(format!("{} PLY/PNG files identical", a.len()))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 10] = [
        ("gravity formula", Some(Duration::from_secs(5)), gravity_formula),
        ("rotation round trip", Some(Duration::from_secs(5)), rotation_roundtrip),
        ("TSDF and marching cubes", Some(Duration::from_secs(60)), tsdf_geometry),
        ("consensus oracle", Some(Duration::from_secs(5)), consensus_oracle),
        ("lifting exactness", Some(Duration::from_secs(30)), lifting_exactness),
        ("metrics example", None, metrics_example),
        ("scheduler recovery", Some(Duration::from_secs(60)), scheduler_recovery),
        ("ensemble benefit", Some(Duration::from_secs(300)), ensemble_benefit),
        ("resource estimation", Some(Duration::from_secs(1)), resource_estimation),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let mut result = f();
        let secs = t0.elapsed();
        if let (Ok(_), Some(limit)) = (&result, limit) {
            if secs > *limit {
                result = Err(format!("took {:.1}s, limit {}s", secs.as_secs_f64(), limit.as_secs()));
            }
        }
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => {
                failed += 1;
                ("FAIL", d.clone())
            }
        };
        println!("{tag} {:>2} {name} ({:.2}s): {detail}", i + 1, secs.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
