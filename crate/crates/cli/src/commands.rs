use std::path::{Path, PathBuf};

use semfuse_core::error::{Error, Result};
use semfuse_core::eval::{evaluate, ClassGroups};
use semfuse_core::io;
use semfuse_core::labelspace::LabelMap;
use semfuse_core::orchestrator::{
    emit_batch_scripts, execute, execute_task, Outcome, RunReport, ScriptScene, StateStore, TaskReport,
    TaskStatus,
};
use semfuse_core::pipeline::{self, LocalRunner, PipelineConfig, SceneDir};
use semfuse_core::ply;
use semfuse_core::render::{colorize, Colormap};

use crate::Overrides;

pub fn parse_swap(s: &str) -> std::result::Result<(u16, u16), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s}"))?;
    let p = |x: &str| x.trim().parse::<u16>().map_err(|e| format!("{x}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Missing(p.to_path_buf()))
    }
}

pub fn load_config(scene: &Path, o: &Overrides) -> Result<PipelineConfig> {
    require_dir(scene)?;
    let mut cfg = PipelineConfig::load(scene, o.config.as_deref())?;
    if let Some(v) = o.voxel {
        cfg.fusion.tsdf.voxel_size = v;
    }
    if let Some(v) = o.trunc {
        cfg.fusion.tsdf.truncation = v;
    }
    if let Some(v) = o.downsample {
        cfg.fusion.downsample = v;
    }
    if let Some(v) = o.occlusion_tol {
        cfg.lift.occlusion_tol = v;
    }
    if let Some(v) = o.min_votes {
        cfg.vote.min_votes = v;
    }
    if let Some(p) = &o.colormap {
        let abs = std::path::absolute(p).map_err(Error::io(p))?;
        cfg.colormap = Some(abs.to_string_lossy().into_owned());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn sync(scene: &Path) -> Result<bool> {
    require_dir(scene)?;
    pipeline::sync_stage(&SceneDir::new(scene))?;
    Ok(true)
}

pub fn fuse(scene: &Path, o: &Overrides) -> Result<bool> {
    let cfg = load_config(scene, o)?;
    pipeline::fuse_stage(&SceneDir::new(scene), &cfg)?;
    Ok(true)
}

pub fn consensus(scene: &Path, o: &Overrides) -> Result<bool> {
    let cfg = load_config(scene, o)?;
    pipeline::consensus_stage(&SceneDir::new(scene), &cfg, &cfg.graph()?)?;
    Ok(true)
}

pub fn lift(scene: &Path, o: &Overrides) -> Result<bool> {
    let cfg = load_config(scene, o)?;
    let stats = pipeline::lift_stage(&SceneDir::new(scene), &cfg)?;
    println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    Ok(true)
}

/// Label arrays from a labeled PLY or a directory of 16-bit PNGs.
fn read_labels(path: &Path) -> Result<Vec<Vec<u16>>> {
    if path.is_dir() {
        io::list_frames(path, "png")?
            .into_iter()
            .map(|(_, p)| Ok(io::read_u16_png(&p)?.into_vec()))
            .collect()
    } else if path.exists() {
        Ok(vec![ply::read_labeled_cloud(path, "")?.labels()])
    } else {
        Err(Error::Missing(path.to_path_buf()))
    }
}

pub fn eval(gt: &Path, pred: &Path, groups: Option<&Path>, out: Option<&Path>) -> Result<bool> {
    if gt.is_dir() != pred.is_dir() && pred.exists() && gt.exists() {
        return Err(Error::InvalidInput(
            "ground truth and prediction must both be PLY files or both directories".into(),
        ));
    }
    let (g, p) = (read_labels(gt)?, read_labels(pred)?);
    if gt.is_dir() {
        let names = |d: &Path| -> Result<Vec<usize>> { Ok(io::list_frames(d, "png")?.into_iter().map(|f| f.0).collect()) };
        let (gn, pn) = (names(gt)?, names(pred)?);
        if let Some(missing) = gn.iter().find(|i| !pn.contains(i)) {
            return Err(Error::Missing(pred.join(io::frame_name(*missing, "png"))));
        }
        if gn.len() != pn.len() {
            return Err(Error::InvalidInput(format!(
                "{} ground-truth frames but {} predicted frames",
                gn.len(),
                pn.len()
            )));
        }
    }
    if g.len() != p.len() || g.iter().zip(&p).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::InvalidInput("ground truth and prediction differ in size".into()));
    }
    let groups = groups
        .map(|p| if p.exists() { ClassGroups::load(p) } else { Err(Error::Missing(p.to_path_buf())) })
        .transpose()?;
    let (g, p): (Vec<u16>, Vec<u16>) = (g.concat(), p.concat());
    let m = evaluate(&g, &p, groups.as_ref())?;
    let json = serde_json::to_string_pretty(&m).expect("metrics serialize");
    match out {
        Some(path) => io::write_atomic(path, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(true)
}

fn print_report(r: &RunReport) {
    for t in &r.tasks {
        print_task(t);
    }
}

fn print_task(t: &TaskReport) {
    let outcome = match t.outcome {
        Outcome::Skipped => "skipped",
        Outcome::Done => "done",
        Outcome::Failed => "failed",
        Outcome::Blocked => "blocked",
        Outcome::NotRun => "not-run",
    };
    let secs = t.seconds.map(|s| format!("{s:.2}s")).unwrap_or_default();
    println!("{:<14} {:<8} {secs}", t.name, outcome);
}

fn frame_estimate(scene: &SceneDir) -> u64 {
    if let Ok(n) = scene.frame_count() {
        return n.max(1) as u64;
    }
    let ts: Result<semfuse_core::ingest::StreamTimestamps> = io::read_json(&scene.root().join("timestamps.json"));
    ts.map(|t| t.color.len().max(1) as u64).unwrap_or(1)
}

pub fn run(
    scene: &Path,
    stage: Option<&str>,
    max_parallel: Option<usize>,
    emit_scripts: Option<&Path>,
    o: &Overrides,
) -> Result<bool> {
    let cfg = load_config(scene, o)?;
    let graph = cfg.graph()?;
    let store = StateStore::for_scene(scene);
    let exe = std::env::current_exe().map_err(Error::io("current executable"))?;
    if let Some(out) = emit_scripts {
        let dir = std::path::absolute(scene).map_err(Error::io(scene))?;
        let sd = SceneDir::new(&dir);
        let scenes = [ScriptScene {
            id: sd.id(),
            dir: dir.clone(),
            frames: frame_estimate(&sd),
        }];
        let files = emit_batch_scripts(&graph, &scenes, out, &|task, s| {
            format!("{} run --scene {} --stage {}", exe.display(), s.dir.display(), task.name)
        })?;
        for f in files {
            println!("{}", f.display());
        }
        return Ok(true);
    }
    let max_parallel = max_parallel.unwrap_or(cfg.max_parallel);
    let runner = LocalRunner::new(scene, cfg, PathBuf::from(&exe))?;
    match stage {
        Some(name) => {
            let r = execute_task(&graph, &store, &runner, name)?;
            print_task(&r);
            Ok(matches!(r.outcome, Outcome::Done | Outcome::Skipped))
        }
        None => {
            let r = execute(&graph, &store, &runner, max_parallel)?;
            print_report(&r);
            Ok(r.succeeded())
        }
    }
}

pub fn status(scene: &Path, config: Option<&Path>) -> Result<bool> {
    require_dir(scene)?;
    let cfg = PipelineConfig::load(scene, config)?;
    let graph = cfg.graph()?;
    let store = StateStore::for_scene(scene);
    println!("{:<14} {:<8} {:>5} {:>9}", "task", "status", "exit", "seconds");
    for t in graph.topo_order() {
        let s = store.read(&t.name);
        let status = match s.status {
            TaskStatus::Done if !store.is_done(&t.name) => "stale",
            TaskStatus::Pending => "pending",
            TaskStatus::Running => "running",
            TaskStatus::Done => "done",
            TaskStatus::Failed => "failed",
        };
        let exit = s.exit_code.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
        let secs = match (s.start, s.end) {
            (Some(a), Some(b)) => format!("{:.2}", b - a),
            _ => "-".into(),
        };
        println!("{:<14} {:<8} {:>5} {:>9}", t.name, status, exit, secs);
    }
    Ok(true)
}

pub fn render(scene: Option<&Path>, input: Option<&Path>, output: Option<&Path>, o: &Overrides) -> Result<bool> {
    match (scene, input, output) {
        (Some(scene), _, _) => {
            let cfg = load_config(scene, o)?;
            pipeline::render_stage(&SceneDir::new(scene), &cfg, &cfg.graph()?)?;
        }
        (None, Some(input), Some(output)) => {
            require_dir(input)?;
            let cmap_path = o
                .colormap
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("--colormap is required with --input".into()))?;
            if !cmap_path.exists() {
                return Err(Error::Missing(cmap_path.to_path_buf()));
            }
            let cmap = Colormap::load(cmap_path)?;
            io::ensure_dir(output)?;
            for (i, p) in io::list_frames(input, "png")? {
                let lm = LabelMap::new(io::read_u16_png(&p)?, "");
                io::write_rgb_png(&output.join(io::frame_name(i, "png")), &colorize(&lm, &cmap))?;
            }
        }
        _ => return Err(Error::InvalidInput("render needs --scene or --input and --output".into())),
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_syntax() {
        assert_eq!(parse_swap("3:4"), Ok((3, 4)));
        assert!(parse_swap("3-4").is_err());
        assert!(parse_swap("a:4").is_err());
    }
}
