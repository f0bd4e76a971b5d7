use std::path::Path;

use semfuse_core::orchestrator::{
    compute_pending, default_graph, emit_batch_scripts, estimate, execute, parse_script_header, ResourceAnchor,
    ResourceModel, ScriptScene, StateStore, TaskSpec,
};
use semfuse_core::Result;

fn ok(_: &TaskSpec, _: &Path) -> Result<i32> {
    Ok(0)
}

#[test]
fn pending_tracks_failures_in_the_default_graph() {
    let dir = tempfile::tempdir().unwrap();
    let store = StateStore::new(dir.path());
    let graph = default_graph();
    let all: Vec<String> = graph.topo_order().iter().map(|t| t.name.clone()).collect();
    assert_eq!(compute_pending(&graph, &store), all);

    let fail_gsam = |t: &TaskSpec, _: &Path| -> Result<i32> { Ok(if t.name == "gsam" { 3 } else { 0 }) };
    let report = execute(&graph, &store, &fail_gsam, 2).unwrap();
    assert!(!report.succeeded());
    let blocked = graph.descendants("gsam");
    let mut expect = vec!["gsam".to_string()];
    expect.extend(all.iter().filter(|t| blocked.contains(*t)).cloned());
    let pending = compute_pending(&graph, &store);
    assert_eq!(pending.iter().collect::<std::collections::BTreeSet<_>>(), expect.iter().collect());
    assert_eq!(store.read("gsam").exit_code, Some(3));

    let report = execute(&graph, &store, &ok, 2).unwrap();
    assert!(report.succeeded());
    assert!(compute_pending(&graph, &store).is_empty());
}

#[test]
fn scripts_rebuild_the_pending_dag() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene0");
    std::fs::create_dir_all(&scene).unwrap();
    let graph = default_graph();
    let scenes = [ScriptScene {
        id: "scene0".into(),
        dir: scene.clone(),
        frames: 1200,
    }];
    let out = dir.path().join("scripts");
    let files = emit_batch_scripts(&graph, &scenes, &out, &|t, s| format!("echo {} {}", s.id, t.name)).unwrap();
    assert_eq!(files.len(), graph.len());
    for task in graph.tasks() {
        let text = std::fs::read_to_string(out.join("scene0").join(format!("{}.sh", task.name))).unwrap();
        let header = parse_script_header(&text).unwrap();
        let mut deps = task.deps.clone();
        deps.sort();
        let mut got = header.deps.clone();
        got.sort();
        assert_eq!(got, deps, "{}", task.name);
        assert_eq!(header.resources, estimate(&task.resources, 1200).unwrap());
    }

    // once preprocess is done it drops out, along with the #DEP lines naming it
    execute_preprocess(&graph, &scene);
    std::fs::remove_dir_all(&out).unwrap();
    let files = emit_batch_scripts(&graph, &scenes, &out, &|t, _| format!("echo {}", t.name)).unwrap();
    assert_eq!(files.len(), graph.len() - 1);
    for f in files {
        let header = parse_script_header(&std::fs::read_to_string(f).unwrap()).unwrap();
        assert!(!header.deps.iter().any(|d| d == "preprocess"));
    }
}

fn execute_preprocess(graph: &semfuse_core::orchestrator::TaskGraph, scene: &Path) {
    let store = StateStore::for_scene(scene);
    semfuse_core::orchestrator::execute_task(graph, &store, &ok, "preprocess").unwrap();
}

#[test]
fn estimates_clamp_at_the_measured_range() {
    let a = |frames, cpus, ram_gb, hours| ResourceAnchor {
        frames,
        cpus,
        ram_gb,
        hours,
        gpus: 1,
    };
    let m = ResourceModel::new(vec![a(13796, 32, 128.0, 20.0), a(65, 4, 16.0, 1.0), a(1000, 8, 32.0, 4.0)]).unwrap();
    assert_eq!(estimate(&m, 10).unwrap(), estimate(&m, 65).unwrap());
    assert_eq!(estimate(&m, 1_000_000).unwrap(), estimate(&m, 13796).unwrap());
    assert_eq!(estimate(&m, 13796).unwrap().cpus, 32);
    let between = estimate(&m, 5000).unwrap();
    assert!(between.ram_gb > 32.0 && between.ram_gb < 128.0);
    assert!(estimate(&m, 0).is_err());
}
