//! Built-in stages bound to a scene directory, and the runner that executes
//! a task graph's builtin and external tasks against it.
//!
//! Scene layout:
//!
//! ```text
//! <scene>/pipeline.json            optional config
//! <scene>/color depth pose ...     raw recording (see ingest)
//! <scene>/synced/                  synchronized frames
//! <scene>/gravity.json  mesh.ply  cloud.ply
//! <scene>/work/<task>/{input,output}
//! <scene>/predictions/<task>/%06d.png
//! <scene>/consensus/
//! <scene>/labeled_cloud.ply  lift_stats.json
//! <scene>/render/<source>/%06d.png
//! <scene>/state/
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{aggregate, write_consensus, VoteConfig};
use crate::error::{Error, Result};
use crate::fusion::{downsample, extract_mesh, integrate_scene, LabeledCloud, TsdfConfig};
use crate::gravity::{compute_alignment, read_gravity, rotate_quarter, unrotate, write_gravity};
use crate::ingest::{load_synced_scene, sync_directory, SYNCED_DIR};
use crate::io;
use crate::labelspace::{apply_mapping, load_label_space, load_mapping, LabelMap, LabelSpace};
use crate::lift::{lift, LiftConfig, LiftStats};
use crate::orchestrator::{
    default_graph, render_command, run_shell, BuiltinStage, OutputMapping, TaskGraph, TaskKind, TaskRunner,
    TaskSpec,
};
use crate::ply;
use crate::render::{colorize, Colormap};

pub const CONFIG_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    pub tsdf: TsdfConfig,
    /// Point cloud voxel size, meters.
    pub downsample: f64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            tsdf: TsdfConfig::default(),
            downsample: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Task definitions; the default graph when absent.
    pub tasks: Option<Vec<TaskSpec>>,
    /// Unified label space CSV, relative to the scene directory.
    pub label_space: String,
    /// `id,r,g,b` colormap, relative to the scene directory.
    pub colormap: Option<String>,
    /// Empty weights mean unit weight for every label-producing task.
    pub vote: VoteConfig,
    pub lift: LiftConfig,
    pub fusion: FusionSettings,
    pub max_parallel: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tasks: None,
            label_space: "label_space.csv".into(),
            colormap: None,
            vote: VoteConfig::default(),
            lift: LiftConfig::default(),
            fusion: FusionSettings::default(),
            max_parallel: 4,
        }
    }
}

impl PipelineConfig {
    /// `explicit`, else `<scene>/pipeline.json`, else defaults.
    pub fn load(scene_dir: &Path, explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) if !p.exists() => Err(Error::Missing(p.to_path_buf())),
            Some(p) => io::read_json(p),
            None => {
                let p = scene_dir.join(CONFIG_FILE);
                if p.exists() {
                    io::read_json(&p)
                } else {
                    Ok(Self::default())
                }
            }
        }
    }

    pub fn graph(&self) -> Result<TaskGraph> {
        match &self.tasks {
            Some(tasks) => TaskGraph::new(tasks.clone()),
            None => Ok(default_graph()),
        }
    }

    pub fn vote_config(&self, graph: &TaskGraph) -> VoteConfig {
        if !self.vote.weights.is_empty() {
            return self.vote.clone();
        }
        let mut v = VoteConfig::equal(label_sources(graph));
        v.min_votes = self.vote.min_votes;
        v
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.tsdf.validate()?;
        if !(self.fusion.downsample > 0.0) {
            return Err(Error::InvalidInput("downsample voxel must be positive".into()));
        }
        self.lift.validate()?;
        if self.max_parallel == 0 {
            return Err(Error::InvalidInput("max_parallel must be positive".into()));
        }
        Ok(())
    }
}

/// Tasks whose outputs take part in the vote, sorted by name.
pub fn label_sources(graph: &TaskGraph) -> Vec<String> {
    let mut v: Vec<String> = graph
        .tasks()
        .iter()
        .filter(|t| t.produces_labels())
        .map(|t| t.name.clone())
        .collect();
    v.sort();
    v
}

/// Paths inside a scene directory.
#[derive(Debug, Clone)]
pub struct SceneDir {
    root: PathBuf,
}

impl SceneDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn id(&self) -> String {
        self.root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into())
    }

    pub fn synced(&self) -> PathBuf {
        self.root.join(SYNCED_DIR)
    }

    pub fn gravity(&self) -> PathBuf {
        self.root.join("gravity.json")
    }

    pub fn mesh(&self) -> PathBuf {
        self.root.join("mesh.ply")
    }

    pub fn cloud(&self) -> PathBuf {
        self.root.join("cloud.ply")
    }

    pub fn work(&self, task: &str) -> PathBuf {
        self.root.join("work").join(task)
    }

    pub fn predictions(&self, task: &str) -> PathBuf {
        self.root.join("predictions").join(task)
    }

    pub fn consensus(&self) -> PathBuf {
        self.root.join("consensus")
    }

    pub fn labeled_cloud(&self) -> PathBuf {
        self.root.join("labeled_cloud.ply")
    }

    pub fn lift_stats(&self) -> PathBuf {
        self.root.join("lift_stats.json")
    }

    pub fn render(&self, source: &str) -> PathBuf {
        self.root.join("render").join(source)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Number of synchronized frames.
    pub fn frame_count(&self) -> Result<usize> {
        let dir = self.synced().join("depth");
        if !dir.exists() {
            return Err(Error::Missing(dir));
        }
        Ok(io::list_frames(&dir, "png")?.len())
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Missing(path.to_path_buf()))
    }
}

fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(Error::io(dir))?;
    }
    io::ensure_dir(dir)
}

fn load_space(scene: &SceneDir, cfg: &PipelineConfig) -> Result<LabelSpace> {
    let p = scene.resolve(&cfg.label_space);
    require(&p)?;
    load_label_space(&p)
}

/// Synchronizes the raw recording in the scene directory.
pub fn sync_stage(scene: &SceneDir) -> Result<()> {
    let raw = scene.root().join("timestamps.json");
    require(&raw)?;
    sync_directory(scene.root()).map(|_| ())
}

/// Writes `gravity.json`, the fused `mesh.ply` and the downsampled,
/// unlabeled `cloud.ply` from the synchronized frames.
pub fn fuse_stage(scene: &SceneDir, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    require(&scene.synced().join("intrinsics.txt"))?;
    let space = load_space(scene, cfg)?;
    let s = load_synced_scene(scene.root())?;
    let gravity: Vec<_> = s.frames.iter().map(|f| compute_alignment(&f.pose)).collect();
    write_gravity(&scene.gravity(), &gravity)?;
    let vol = integrate_scene(&s.frames, &s.intrinsics, cfg.fusion.tsdf)?;
    let mesh = extract_mesh(&vol);
    info!(
        "fused {} frames: {} vertices, {} faces",
        s.frames.len(),
        mesh.vertices.len(),
        mesh.faces.len()
    );
    ply::write_mesh(&scene.mesh(), &mesh)?;
    let cloud = downsample(&LabeledCloud::from_mesh(&mesh, space.name()), cfg.fusion.downsample)?;
    ply::write_labeled_cloud(&scene.cloud(), &cloud)
}

/// Sync when a raw recording is present, then fuse.
pub fn preprocess(scene: &SceneDir, cfg: &PipelineConfig) -> Result<()> {
    if scene.root().join("timestamps.json").exists() {
        sync_stage(scene)?;
    }
    fuse_stage(scene, cfg)
}

fn gravity_turns(scene: &SceneDir, frames: usize) -> Result<Vec<i64>> {
    require(&scene.gravity())?;
    let g = read_gravity(&scene.gravity())?;
    if g.len() != frames {
        return Err(Error::InvalidInput(format!(
            "gravity.json has {} entries for {frames} frames",
            g.len()
        )));
    }
    Ok(g.iter().map(|r| r.k as i64).collect())
}

/// Input directory handed to an external task: gravity-aligned copies of
/// the synchronized color frames, or the synchronized frames themselves.
pub fn prepare_external(scene: &SceneDir, task: &TaskSpec) -> Result<(PathBuf, PathBuf)> {
    let TaskKind::External { gravity_align, .. } = &task.kind else {
        return Err(Error::InvalidInput(format!("{} is not an external task", task.name)));
    };
    let color = scene.synced().join("color");
    require(&color)?;
    let work = scene.work(&task.name);
    let output = work.join("output");
    reset_dir(&output)?;
    if !gravity_align {
        return Ok((color, output));
    }
    let input = work.join("input");
    reset_dir(&input)?;
    let frames = io::list_frames(&color, "png")?;
    let turns = gravity_turns(scene, frames.len())?;
    frames.par_iter().try_for_each(|(i, path)| {
        let img = io::read_rgb_png(path)?;
        io::write_rgb_png(&input.join(io::frame_name(*i, "png")), &rotate_quarter(&img, turns[*i])?)
    })?;
    Ok((input, output))
}

/// Moves an external task's label maps into `predictions/<task>`, undoing
/// the gravity rotation and applying its output mapping.
pub fn finalize_external(scene: &SceneDir, task: &TaskSpec, space: &LabelSpace) -> Result<()> {
    let TaskKind::External {
        gravity_align,
        produces_labels,
        mapping,
        ..
    } = &task.kind
    else {
        return Err(Error::InvalidInput(format!("{} is not an external task", task.name)));
    };
    if !produces_labels {
        return Ok(());
    }
    let n = scene.frame_count()?;
    let k = io::read_intrinsics(&scene.synced().join("intrinsics.txt"))?;
    let turns = if *gravity_align { gravity_turns(scene, n)? } else { vec![0; n] };
    let table = mapping
        .as_ref()
        .map(|m: &OutputMapping| -> Result<_> {
            let src = load_label_space(&scene.resolve(&m.source_space))?;
            let dst = load_label_space(&scene.resolve(&m.target_space))?;
            if dst.name() != space.name() {
                return Err(Error::SpaceMismatch {
                    expected: space.name().into(),
                    found: dst.name().into(),
                });
            }
            Ok((load_mapping(&scene.resolve(&m.csv), &src, &dst)?.table, src))
        })
        .transpose()?;
    let out = scene.work(&task.name).join("output");
    let dst = scene.predictions(&task.name);
    reset_dir(&dst)?;
    (0..n).into_par_iter().try_for_each(|i| {
        let p = out.join(io::frame_name(i, "png"));
        require(&p)?;
        let grid = unrotate(&io::read_u16_png(&p)?, turns[i])?;
        let lm = match &table {
            Some((m, src)) => {
                let lm = LabelMap::new(grid, src.name());
                lm.validate(src)?;
                apply_mapping(m, &lm)?
            }
            None => LabelMap::new(grid, space.name()),
        };
        if lm.dims() != (k.width, k.height) {
            return Err(Error::DimMismatch {
                expected: (k.width, k.height),
                found: lm.dims(),
            });
        }
        lm.validate(space)?;
        io::write_u16_png(&dst.join(io::frame_name(i, "png")), &lm.grid)
    })
}

fn read_labels(path: &Path, space: &str) -> Result<LabelMap> {
    require(path)?;
    Ok(LabelMap::new(io::read_u16_png(path)?, space))
}

/// Votes every label source per frame into `consensus/`.
pub fn consensus_stage(scene: &SceneDir, cfg: &PipelineConfig, graph: &TaskGraph) -> Result<()> {
    let space = load_space(scene, cfg)?;
    let vote = cfg.vote_config(graph);
    vote.validate()?;
    let n = scene.frame_count()?;
    let sources: Vec<&String> = vote.weights.keys().collect();
    for s in &sources {
        require(&scene.predictions(s))?;
    }
    let out = scene.consensus();
    reset_dir(&out)?;
    (0..n).into_par_iter().try_for_each(|i| {
        let preds = sources
            .iter()
            .map(|s| Ok(((*s).clone(), read_labels(&scene.predictions(s).join(io::frame_name(i, "png")), space.name())?)))
            .collect::<Result<Vec<_>>>()?;
        write_consensus(&out, i, &aggregate(&preds, &vote)?)
    })
}

/// Lifts consensus labels onto `cloud.ply`, writing `labeled_cloud.ply`
/// and `lift_stats.json`.
pub fn lift_stage(scene: &SceneDir, cfg: &PipelineConfig) -> Result<LiftStats> {
    let space = load_space(scene, cfg)?;
    require(&scene.cloud())?;
    let cloud = ply::read_labeled_cloud(&scene.cloud(), space.name())?;
    let s = load_synced_scene(scene.root())?;
    let maps = s
        .frames
        .par_iter()
        .map(|f| read_labels(&scene.consensus().join(io::frame_name(f.index, "png")), space.name()))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = s.frames.iter().zip(&maps).collect();
    let labeled = lift(&cloud, &views, &s.intrinsics, &cfg.lift)?;
    ply::write_labeled_cloud(&scene.labeled_cloud(), &labeled)?;
    let stats = LiftStats::of(&labeled);
    io::write_json(&scene.lift_stats(), &stats)?;
    info!(
        "lifted {} points, {:.1}% unlabeled",
        stats.points,
        stats.unlabeled_fraction * 100.0
    );
    Ok(stats)
}

pub fn colormap(scene: &SceneDir, cfg: &PipelineConfig, space: &LabelSpace) -> Result<Colormap> {
    match &cfg.colormap {
        Some(p) => {
            let p = scene.resolve(p);
            require(&p)?;
            Colormap::load(&p)
        }
        None => Ok(Colormap::default_for(space.max_id())),
    }
}

/// Writes color PNGs for the consensus and every label source.
pub fn render_stage(scene: &SceneDir, cfg: &PipelineConfig, graph: &TaskGraph) -> Result<()> {
    let space = load_space(scene, cfg)?;
    let cmap = colormap(scene, cfg, &space)?;
    let mut sources: Vec<(String, PathBuf)> = vec![("consensus".into(), scene.consensus())];
    sources.extend(label_sources(graph).into_iter().map(|s| {
        let p = scene.predictions(&s);
        (s, p)
    }));
    let n = scene.frame_count()?;
    for (name, dir) in sources {
        require(&dir)?;
        let out = scene.render(&name);
        reset_dir(&out)?;
        (0..n).into_par_iter().try_for_each(|i| {
            let lm = read_labels(&dir.join(io::frame_name(i, "png")), space.name())?;
            io::write_rgb_png(&out.join(io::frame_name(i, "png")), &colorize(&lm, &cmap))
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub frames: usize,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub points: usize,
    pub unlabeled_fraction: f64,
}

/// Removes `work/` and writes `stats.json`.
pub fn postprocess(scene: &SceneDir) -> Result<SceneStats> {
    let work = scene.root().join("work");
    if work.exists() {
        fs::remove_dir_all(&work).map_err(Error::io(&work))?;
    }
    require(&scene.mesh())?;
    require(&scene.lift_stats())?;
    let mesh = ply::read_mesh(&scene.mesh())?;
    let lift: LiftStats = io::read_json(&scene.lift_stats())?;
    let stats = SceneStats {
        frames: scene.frame_count()?,
        mesh_vertices: mesh.vertices.len(),
        mesh_faces: mesh.faces.len(),
        points: lift.points,
        unlabeled_fraction: lift.unlabeled_fraction,
    };
    io::write_json(&scene.root().join("stats.json"), &stats)?;
    Ok(stats)
}

/// Runs tasks of one scene in this process, external commands through
/// `sh`.
pub struct LocalRunner {
    pub scene: SceneDir,
    pub config: PipelineConfig,
    pub graph: TaskGraph,
    /// Substituted for `{exe}` in command templates.
    pub exe: PathBuf,
}

impl LocalRunner {
    pub fn new(scene_dir: &Path, config: PipelineConfig, exe: PathBuf) -> Result<Self> {
        let graph = config.graph()?;
        Ok(Self {
            scene: SceneDir::new(scene_dir),
            config,
            graph,
            exe,
        })
    }

    pub fn run_builtin(&self, stage: BuiltinStage) -> Result<()> {
        match stage {
            BuiltinStage::Preprocess => preprocess(&self.scene, &self.config),
            BuiltinStage::Consensus => consensus_stage(&self.scene, &self.config, &self.graph),
            BuiltinStage::Lift => lift_stage(&self.scene, &self.config).map(|_| ()),
            BuiltinStage::Render => render_stage(&self.scene, &self.config, &self.graph),
            BuiltinStage::Postprocess => postprocess(&self.scene).map(|_| ()),
        }
    }

    fn run_external(&self, task: &TaskSpec, command: &str, log: &Path) -> Result<i32> {
        let (input, output) = prepare_external(&self.scene, task)?;
        let cmd = render_command(
            command,
            &[
                ("exe", shell_quote(&self.exe)),
                ("scene_dir", shell_quote(self.scene.root())),
                ("frames", self.scene.frame_count()?.to_string()),
                ("input_dir", shell_quote(&input)),
                ("output_dir", shell_quote(&output)),
            ],
        );
        log::debug!("{}: {cmd}", task.name);
        let code = run_shell(&cmd, log)?;
        if code == 0 {
            let space = load_space(&self.scene, &self.config)?;
            finalize_external(&self.scene, task, &space)?;
        }
        Ok(code)
    }
}

fn shell_quote(p: &Path) -> String {
    let s = p.to_string_lossy();
    if s.chars().all(|c| c.is_ascii_alphanumeric() || "/._-+=:,".contains(c)) {
        s.into_owned()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

impl TaskRunner for LocalRunner {
    fn run(&self, task: &TaskSpec, log: &Path) -> Result<i32> {
        info!("{}: starting {}", self.scene.id(), task.name);
        match &task.kind {
            TaskKind::Builtin { stage } => self.run_builtin(*stage).map(|_| 0),
            TaskKind::External { command, .. } => self.run_external(task, command, log),
        }
    }
}
