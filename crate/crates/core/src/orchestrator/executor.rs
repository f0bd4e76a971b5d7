use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Instant;

use serde::Serialize;

use super::graph::{TaskGraph, TaskSpec};
use super::state::{SceneLock, StateStore};
use crate::error::{Error, Result};

/// Runs one task to completion.
///
/// `Ok(code)` is the task's exit status. `Err(Error::Aborted)` means the
/// executor itself died mid-task: nothing is recorded and scheduling stops.
/// Any other error is a task failure.
pub trait TaskRunner: Sync {
    fn run(&self, task: &TaskSpec, log: &Path) -> Result<i32>;
}

impl<F> TaskRunner for F
where
    F: Fn(&TaskSpec, &Path) -> Result<i32> + Sync,
{
    fn run(&self, task: &TaskSpec, log: &Path) -> Result<i32> {
        self(task, log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Already done before this run.
    Skipped,
    Done,
    Failed,
    /// A dependency failed.
    Blocked,
    /// Not reached because the executor aborted.
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub name: String,
    pub outcome: Outcome,
    pub exit_code: Option<i32>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tasks: Vec<TaskReport>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.tasks
            .iter()
            .all(|t| matches!(t.outcome, Outcome::Done | Outcome::Skipped))
    }

    pub fn outcome(&self, task: &str) -> Option<Outcome> {
        self.tasks.iter().find(|t| t.name == task).map(|t| t.outcome)
    }
}

/// Runs every pending task of `graph` whose dependencies are done, at most
/// `max_parallel` at a time. Failed tasks block their dependents; other
/// branches continue. Holds the scene lock for the duration.
pub fn execute(
    graph: &TaskGraph,
    store: &StateStore,
    runner: &dyn TaskRunner,
    max_parallel: usize,
) -> Result<RunReport> {
    let _lock = SceneLock::acquire(store)?;
    let max_parallel = max_parallel.max(1);
    let order: Vec<&TaskSpec> = graph.topo_order();
    let mut outcome: HashMap<&str, Outcome> = HashMap::new();
    let mut exit: HashMap<&str, i32> = HashMap::new();
    let mut secs: HashMap<&str, f64> = HashMap::new();
    for t in &order {
        if store.is_done(&t.name) {
            outcome.insert(&t.name, Outcome::Skipped);
        }
    }
    let mut running: BTreeSet<&str> = BTreeSet::new();
    let mut aborted: Option<String> = None;

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(&str, Result<i32>, f64)>();
        loop {
            if aborted.is_none() {
                for t in &order {
                    if running.len() >= max_parallel {
                        break;
                    }
                    let name = t.name.as_str();
                    if outcome.contains_key(name) || running.contains(name) {
                        continue;
                    }
                    let dep_states: Vec<Option<&Outcome>> = t.deps.iter().map(|d| outcome.get(d.as_str())).collect();
                    if dep_states
                        .iter()
                        .any(|o| matches!(o, Some(Outcome::Failed | Outcome::Blocked)))
                    {
                        outcome.insert(name, Outcome::Blocked);
                        continue;
                    }
                    if !dep_states
                        .iter()
                        .all(|o| matches!(o, Some(Outcome::Done | Outcome::Skipped)))
                    {
                        continue;
                    }
                    store.begin(name)?;
                    running.insert(name);
                    let tx = tx.clone();
                    let log = store.log_path(name);
                    scope.spawn(move || {
                        let t0 = Instant::now();
                        let r = runner.run(t, &log);
                        let _ = tx.send((name, r, t0.elapsed().as_secs_f64()));
                    });
                }
            }
            if running.is_empty() {
                break;
            }
            let (name, result, elapsed) = rx.recv().expect("worker channel closed");
            running.remove(name);
            let code = match result {
                Ok(code) => code,
                Err(Error::Aborted(task)) => {
                    log::error!("executor aborted during {task}");
                    aborted.get_or_insert(task);
                    continue;
                }
                Err(e) => {
                    log::error!("task {name} failed: {e}");
                    append_log(&store.log_path(name), &format!("error: {e}\n"));
                    1
                }
            };
            let state = store.read(name);
            store.finish(name, state, code)?;
            exit.insert(name, code);
            secs.insert(name, elapsed);
            outcome.insert(name, if code == 0 { Outcome::Done } else { Outcome::Failed });
            if code != 0 {
                log::warn!("task {name} exited with {code}");
            }
        }
        Ok(())
    })?;

    if let Some(task) = aborted {
        return Err(Error::Aborted(task));
    }
    Ok(RunReport {
        tasks: order
            .iter()
            .map(|t| {
                let n = t.name.as_str();
                TaskReport {
                    name: t.name.clone(),
                    outcome: outcome.get(n).copied().unwrap_or(Outcome::NotRun),
                    exit_code: exit.get(n).copied(),
                    seconds: secs.get(n).copied(),
                }
            })
            .collect(),
    })
}

/// Runs the single task `name`, whose dependencies must already be done.
/// A task that is already done is skipped.
pub fn execute_task(
    graph: &TaskGraph,
    store: &StateStore,
    runner: &dyn TaskRunner,
    name: &str,
) -> Result<TaskReport> {
    let task = graph
        .get(name)
        .ok_or_else(|| Error::Graph(format!("unknown task {name}")))?;
    let _lock = SceneLock::acquire(store)?;
    if store.is_done(name) {
        return Ok(TaskReport {
            name: name.into(),
            outcome: Outcome::Skipped,
            exit_code: Some(0),
            seconds: None,
        });
    }
    if let Some(d) = task.deps.iter().find(|d| !store.is_done(d)) {
        return Err(Error::Graph(format!("task {name} depends on unfinished task {d}")));
    }
    let state = store.begin(name)?;
    let t0 = Instant::now();
    let code = match runner.run(task, &store.log_path(name)) {
        Ok(code) => code,
        Err(e @ Error::Aborted(_)) => return Err(e),
        Err(e) => {
            log::error!("task {name} failed: {e}");
            append_log(&store.log_path(name), &format!("error: {e}\n"));
            1
        }
    };
    store.finish(name, state, code)?;
    Ok(TaskReport {
        name: name.into(),
        outcome: if code == 0 { Outcome::Done } else { Outcome::Failed },
        exit_code: Some(code),
        seconds: Some(t0.elapsed().as_secs_f64()),
    })
}

fn append_log(path: &Path, text: &str) {
    if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(path) {
        let _ = f.write_all(text.as_bytes());
    }
}

/// Runs `command` through `sh -c` with stdout and stderr appended to `log`.
pub fn run_shell(command: &str, log: &Path) -> Result<i32> {
    let out = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(log)
        .map_err(Error::io(log))?;
    let err = out.try_clone().map_err(Error::io(log))?;
    let status = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .status()
        .map_err(Error::io("sh"))?;
    Ok(status.code().unwrap_or(-1))
}

/// Substitutes `{key}` placeholders.
pub fn render_command(template: &str, vars: &[(&str, String)]) -> String {
    let mut s = template.to_owned();
    for (k, v) in vars {
        s = s.replace(&format!("{{{k}}}"), v);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::graph::{BuiltinStage, TaskKind};
    use crate::orchestrator::resources::ResourceModel;
    use std::sync::Mutex;

    fn graph() -> TaskGraph {
        let t = |name: &str, deps: &[&str]| TaskSpec {
            name: name.into(),
            kind: TaskKind::Builtin {
                stage: BuiltinStage::Postprocess,
            },
            deps: deps.iter().map(|s| s.to_string()).collect(),
            resources: ResourceModel::minimal(),
            visualizable: false,
        };
        TaskGraph::new(vec![
            t("a", &[]),
            t("b", &["a"]),
            t("c", &["a"]),
            t("d", &["b"]),
            t("e", &["c"]),
        ])
        .unwrap()
    }

    #[test]
    fn failure_blocks_only_dependents() {
        let dir = tempfile::tempdir().unwrap();
        let store = StateStore::new(dir.path());
        let ran = Mutex::new(Vec::new());
        let runner = |t: &TaskSpec, _: &Path| -> Result<i32> {
            ran.lock().unwrap().push(t.name.clone());
            Ok(if t.name == "b" { 2 } else { 0 })
        };
        let r = execute(&graph(), &store, &runner, 3).unwrap();
        assert_eq!(r.outcome("b"), Some(Outcome::Failed));
        assert_eq!(r.outcome("d"), Some(Outcome::Blocked));
        assert_eq!(r.outcome("e"), Some(Outcome::Done));
        assert!(!r.succeeded());
        assert!(!ran.lock().unwrap().contains(&"d".to_string()));

        // second run retries only the failed branch
        ran.lock().unwrap().clear();
        let ok = |t: &TaskSpec, _: &Path| -> Result<i32> {
            ran.lock().unwrap().push(t.name.clone());
            Ok(0)
        };
        let r = execute(&graph(), &store, &ok, 3).unwrap();
        assert!(r.succeeded());
        assert_eq!(*ran.lock().unwrap(), vec!["b", "d"]);
    }

    #[test]
    fn runner_errors_are_failures() {
        let dir = tempfile::tempdir().unwrap();
        let store = StateStore::new(dir.path());
        let runner = |t: &TaskSpec, _: &Path| -> Result<i32> {
            if t.name == "a" {
                Err(Error::Missing("x".into()))
            } else {
                Ok(0)
            }
        };
        let r = execute(&graph(), &store, &runner, 1).unwrap();
        assert_eq!(r.outcome("a"), Some(Outcome::Failed));
        assert_eq!(r.outcome("e"), Some(Outcome::Blocked));
        let log = fs::read_to_string(store.log_path("a")).unwrap();
        assert!(log.contains("missing artifact"));
    }

    #[test]
    fn shell_commands() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("x.log");
        assert_eq!(run_shell("echo hi; exit 3", &log).unwrap(), 3);
        assert_eq!(fs::read_to_string(&log).unwrap(), "hi\n");
        let cmd = render_command("run {a} {b} {a}", &[("a", "1".into()), ("b", "2".into())]);
        assert_eq!(cmd, "run 1 2 1");
    }
}
