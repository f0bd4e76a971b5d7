use std::path::{Path, PathBuf};

use super::graph::{TaskGraph, TaskSpec};
use super::resources::{estimate, ResourceEstimate};
use super::state::{compute_pending, StateStore};
use crate::error::{Error, Result};
use crate::io::{ensure_dir, write_atomic};

/// One scene to emit scripts for.
#[derive(Debug, Clone)]
pub struct ScriptScene {
    pub id: String,
    pub dir: PathBuf,
    pub frames: u64,
}

/// Parsed header of an emitted script.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptHeader {
    pub resources: ResourceEstimate,
    pub deps: Vec<String>,
}

/// Writes `<out>/<scene>/<task>.sh` for every pending task of every scene.
/// Each script carries a `#RES` line with the estimated requirement and one
/// `#DEP` line per dependency that is itself still pending; a scheduler
/// submits them in that order.
pub fn emit_batch_scripts(
    graph: &TaskGraph,
    scenes: &[ScriptScene],
    out_dir: &Path,
    command: &dyn Fn(&TaskSpec, &ScriptScene) -> String,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for scene in scenes {
        let store = StateStore::for_scene(&scene.dir);
        let pending = compute_pending(graph, &store);
        if pending.is_empty() {
            continue;
        }
        let dir = out_dir.join(&scene.id);
        ensure_dir(&dir)?;
        for name in &pending {
            let task = graph.get(name).expect("pending tasks come from the graph");
            let res = estimate(&task.resources, scene.frames)?;
            let mut text = String::from("#!/bin/sh\n");
            text += &format!("# scene {} task {}\n", scene.id, task.name);
            text += &format!(
                "#RES cpus={} ram_gb={} hours={} gpus={}\n",
                res.cpus, res.ram_gb, res.hours, res.gpus
            );
            for d in task.deps.iter().filter(|d| pending.contains(d)) {
                text += &format!("#DEP {d}\n");
            }
            text += "set -e\n";
            text += &command(task, scene);
            text.push('\n');
            let path = dir.join(format!("{}.sh", task.name));
            write_atomic(&path, text.as_bytes())?;
            make_executable(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(unix)]
fn make_executable(path: &Path) -> Result<()> {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755)).map_err(Error::io(path))
}

#[cfg(not(unix))]
fn make_executable(_: &Path) -> Result<()> {
    Ok(())
}

pub fn parse_script_header(text: &str) -> Result<ScriptHeader> {
    let mut resources = None;
    let mut deps = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("#RES ") {
            let mut r = ResourceEstimate {
                cpus: 0,
                ram_gb: 0.0,
                hours: 0.0,
                gpus: 0,
            };
            for kv in rest.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidInput(format!("bad #RES field {kv}")))?;
                let bad = |_| Error::InvalidInput(format!("bad #RES value {kv}"));
                match k {
                    "cpus" => r.cpus = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    "gpus" => r.gpus = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    "ram_gb" => r.ram_gb = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                    "hours" => r.hours = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                    _ => return Err(Error::InvalidInput(format!("unknown #RES field {k}"))),
                }
            }
            resources = Some(r);
        } else if let Some(d) = line.strip_prefix("#DEP ") {
            deps.push(d.trim().to_owned());
        }
    }
    Ok(ScriptHeader {
        resources: resources.ok_or_else(|| Error::InvalidInput("script has no #RES line".into()))?,
        deps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::graph::default_graph;
    use std::fs;

    #[test]
    fn emits_pending_tasks_with_pending_deps() {
        let dir = tempfile::tempdir().unwrap();
        let scene_dir = dir.path().join("s1");
        let store = StateStore::for_scene(&scene_dir);
        let s = store.begin("preprocess").unwrap();
        store.finish("preprocess", s, 0).unwrap();
        let g = default_graph();
        let scenes = [ScriptScene {
            id: "s1".into(),
            dir: scene_dir.clone(),
            frames: 100,
        }];
        let out = dir.path().join("scripts");
        let files = emit_batch_scripts(&g, &scenes, &out, &|t, s| format!("semfuse run --scene {} --stage {}", s.dir.display(), t.name)).unwrap();
        assert_eq!(files.len(), g.len() - 1);
        assert!(!out.join("s1/preprocess.sh").exists());
        let gsam = parse_script_header(&fs::read_to_string(out.join("s1/gsam.sh")).unwrap()).unwrap();
        assert!(gsam.deps.is_empty());
        assert_eq!(gsam.resources.gpus, 1);
        assert_eq!(gsam.resources.ram_gb, 12.0);
        let cons = parse_script_header(&fs::read_to_string(out.join("s1/consensus.sh")).unwrap()).unwrap();
        assert_eq!(cons.deps.len(), 5);
    }
}
