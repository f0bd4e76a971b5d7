use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::resources::{ResourceAnchor, ResourceModel};
use crate::error::{Error, Result};

/// Stages implemented inside this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinStage {
    /// Sync, gravity alignment, TSDF fusion and point downsampling.
    Preprocess,
    Consensus,
    Lift,
    Render,
    Postprocess,
}

impl BuiltinStage {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinStage::Preprocess => "preprocess",
            BuiltinStage::Consensus => "consensus",
            BuiltinStage::Lift => "lift",
            BuiltinStage::Render => "render",
            BuiltinStage::Postprocess => "postprocess",
        }
    }
}

/// Relabels an external model's output into the unified space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputMapping {
    pub csv: String,
    pub source_space: String,
    pub target_space: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskKind {
    Builtin {
        stage: BuiltinStage,
    },
    /// Shell command template. Placeholders: `{scene_dir}`, `{frames}`,
    /// `{input_dir}`, `{output_dir}`, `{exe}`.
    External {
        command: String,
        /// Feed gravity-aligned color frames and un-rotate the outputs.
        #[serde(default)]
        gravity_align: bool,
        /// Outputs are per-frame label maps that take part in the vote.
        #[serde(default)]
        produces_labels: bool,
        #[serde(default)]
        mapping: Option<OutputMapping>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub deps: Vec<String>,
    #[serde(default = "ResourceModel::minimal")]
    pub resources: ResourceModel,
    #[serde(default)]
    pub visualizable: bool,
}

impl TaskSpec {
    pub fn produces_labels(&self) -> bool {
        matches!(self.kind, TaskKind::External { produces_labels: true, .. })
    }
}

/// Validated, acyclic task set.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    tasks: Vec<TaskSpec>,
    index: HashMap<String, usize>,
}

impl TaskGraph {
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            if t.name.is_empty() || t.name.contains(['/', '\\']) {
                return Err(Error::Graph(format!("invalid task name {:?}", t.name)));
            }
            if index.insert(t.name.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate task {}", t.name)));
            }
        }
        for t in &tasks {
            for d in &t.deps {
                if !index.contains_key(d) {
                    return Err(Error::Graph(format!("task {} depends on unknown task {d}", t.name)));
                }
            }
            t.resources.validate().map_err(|e| Error::Graph(format!("task {}: {e}", t.name)))?;
        }
        let g = Self { tasks, index };
        if g.topo_indices().len() != g.tasks.len() {
            return Err(Error::Graph("dependency cycle".into()));
        }
        Ok(g)
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TaskSpec> {
        self.index.get(name).map(|&i| &self.tasks[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Kahn's algorithm, always releasing the earliest-declared ready task.
    fn topo_indices(&self) -> Vec<usize> {
        let n = self.tasks.len();
        let mut indegree = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for (i, t) in self.tasks.iter().enumerate() {
            for d in &t.deps {
                let j = self.index[d];
                indegree[i] += 1;
                children[j].push(i);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    pub fn topo_order(&self) -> Vec<&TaskSpec> {
        self.topo_indices().into_iter().map(|i| &self.tasks[i]).collect()
    }

    /// Every task reachable backwards from `name` through deps.
    pub fn ancestors(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&str> = self.get(name).map(|t| t.deps.iter().map(String::as_str).collect()).unwrap_or_default();
        while let Some(d) = stack.pop() {
            if out.insert(d.to_owned()) {
                if let Some(t) = self.get(d) {
                    stack.extend(t.deps.iter().map(String::as_str));
                }
            }
        }
        out
    }

    /// Every task that depends on `name`, directly or not.
    pub fn descendants(&self, name: &str) -> BTreeSet<String> {
        self.tasks
            .iter()
            .filter(|t| self.ancestors(&t.name).contains(name))
            .map(|t| t.name.clone())
            .collect()
    }

    /// Consecutive pairs respect every edge.
    pub fn is_linear_extension(&self, order: &[String]) -> bool {
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        order.iter().all(|n| {
            self.get(n).is_some_and(|t| {
                t.deps.iter().all(|d| pos.get(d.as_str()).is_none_or(|&pd| pd < pos[n.as_str()]))
            })
        })
    }
}

fn single(cpus: u32, ram_gb: f64, hours: f64, gpus: u32) -> ResourceModel {
    ResourceModel::new(vec![ResourceAnchor {
        frames: 1,
        cpus,
        ram_gb,
        hours,
        gpus,
    }])
    .expect("default anchors are valid")
}

pub const BASE_MODELS: [&str; 5] = ["gsam", "mask3d", "ovseg", "internimage", "cmx"];

/// The per-scene pipeline: preprocessing, five base models (CMX fed by
/// OmniData normals through HHA), consensus, lifting, rendering and
/// cleanup. Resource anchors are the published per-task averages.
pub fn default_graph() -> TaskGraph {
    let builtin = |name: &str, stage, deps: &[&str], res, vis| TaskSpec {
        name: name.into(),
        kind: TaskKind::Builtin { stage },
        deps: deps.iter().map(|s| s.to_string()).collect(),
        resources: res,
        visualizable: vis,
    };
    let external = |name: &str, deps: &[&str], res, labels: bool| TaskSpec {
        name: name.into(),
        kind: TaskKind::External {
            command: format!("{name} --scene {{scene_dir}} --input {{input_dir}} --output {{output_dir}}"),
            gravity_align: labels,
            produces_labels: labels,
            mapping: None,
        },
        deps: deps.iter().map(|s| s.to_string()).collect(),
        resources: res,
        visualizable: labels,
    };
    let tasks = vec![
        builtin("preprocess", BuiltinStage::Preprocess, &[], single(2, 24.0, 4.0, 0), false),
        external("gsam", &["preprocess"], single(2, 12.0, 6.0, 1), true),
        external("mask3d", &["preprocess"], single(8, 16.0, 1.5, 1), true),
        external("ovseg", &["preprocess"], single(2, 8.0, 8.0, 1), true),
        external("internimage", &["preprocess"], single(2, 10.0, 8.0, 1), true),
        external("omnidata", &["preprocess"], single(8, 8.0, 2.0, 1), false),
        external("hha", &["omnidata"], single(18, 9.0, 2.0, 0), false),
        external("cmx", &["hha"], single(2, 8.0, 3.0, 1), true),
        builtin(
            "consensus",
            BuiltinStage::Consensus,
            &BASE_MODELS,
            single(16, 16.0, 2.0, 0),
            true,
        ),
        builtin("lift", BuiltinStage::Lift, &["consensus"], single(2, 72.0, 4.0, 0), true),
        builtin("render", BuiltinStage::Render, &["lift"], single(8, 32.0, 0.5, 0), false),
        builtin("postprocess", BuiltinStage::Postprocess, &["lift"], single(1, 4.0, 0.5, 0), false),
    ];
    TaskGraph::new(tasks).expect("default graph is valid")
}
