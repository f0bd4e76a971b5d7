use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::graph::TaskGraph;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

pub const STATE_DIR: &str = "state";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    #[default]
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskState {
    pub status: TaskStatus,
    /// Seconds since the Unix epoch.
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub exit_code: Option<i32>,
    pub log: Option<String>,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl TaskState {
    /// pending -> running -> done | failed, failed -> pending.
    pub fn transition(&mut self, to: TaskStatus) -> Result<()> {
        use TaskStatus::*;
        let ok = matches!(
            (self.status, to),
            (Pending, Running) | (Running, Done) | (Running, Failed) | (Failed, Pending)
        );
        if !ok {
            return Err(Error::InvalidInput(format!(
                "invalid task transition {:?} -> {:?}",
                self.status, to
            )));
        }
        self.status = to;
        match to {
            Running => {
                self.start = Some(now());
                self.end = None;
                self.exit_code = None;
            }
            Done | Failed => self.end = Some(now()),
            Pending => {}
        }
        Ok(())
    }
}

/// Per-task JSON state plus `.done` markers under `<scene>/state`.
#[derive(Debug, Clone)]
pub struct StateStore {
    dir: PathBuf,
}

impl StateStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn for_scene(scene_dir: &Path) -> Self {
        Self::new(scene_dir.join(STATE_DIR))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state_path(&self, task: &str) -> PathBuf {
        self.dir.join(format!("{task}.json"))
    }

    pub fn marker_path(&self, task: &str) -> PathBuf {
        self.dir.join(format!("{task}.done"))
    }

    pub fn log_path(&self, task: &str) -> PathBuf {
        self.dir.join(format!("{task}.log"))
    }

    /// Missing or unreadable state reads as pending.
    pub fn read(&self, task: &str) -> TaskState {
        let path = self.state_path(task);
        if !path.exists() {
            return TaskState::default();
        }
        match read_json(&path) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("treating task {task} as pending: {e}");
                TaskState::default()
            }
        }
    }

    pub fn write(&self, task: &str, state: &TaskState) -> Result<()> {
        write_json(&self.state_path(task), state)
    }

    /// Done needs both the state record and the marker.
    pub fn is_done(&self, task: &str) -> bool {
        let s = self.read(task);
        s.status == TaskStatus::Done && s.exit_code == Some(0) && self.marker_path(task).exists()
    }

    /// Brings a task to `running`, first recovering stale `running`,
    /// `failed` or half-written `done` records.
    pub fn begin(&self, task: &str) -> Result<TaskState> {
        let mut s = self.read(task);
        match s.status {
            TaskStatus::Running => {
                log::warn!("task {task} was left running; marking failed");
                s.transition(TaskStatus::Failed)?;
                s.transition(TaskStatus::Pending)?;
            }
            TaskStatus::Failed => s.transition(TaskStatus::Pending)?,
            TaskStatus::Done => {
                log::warn!("task {task} has an incomplete done record; resetting");
                s = TaskState::default();
            }
            TaskStatus::Pending => {}
        }
        remove_if_exists(&self.marker_path(task))?;
        s.transition(TaskStatus::Running)?;
        s.log = Some(self.log_path(task).to_string_lossy().into_owned());
        self.write(task, &s)?;
        Ok(s)
    }

    pub fn finish(&self, task: &str, mut state: TaskState, exit_code: i32) -> Result<TaskState> {
        state.exit_code = Some(exit_code);
        if exit_code == 0 {
            state.transition(TaskStatus::Done)?;
            self.write(task, &state)?;
            fs::write(self.marker_path(task), b"").map_err(Error::io(self.marker_path(task)))?;
        } else {
            state.transition(TaskStatus::Failed)?;
            self.write(task, &state)?;
        }
        Ok(state)
    }

    /// Forgets a task's outcome so it runs again.
    pub fn reset(&self, task: &str) -> Result<()> {
        remove_if_exists(&self.marker_path(task))?;
        remove_if_exists(&self.state_path(task))
    }
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != ErrorKind::NotFound => Err(Error::io(path)(e)),
        _ => Ok(()),
    }
}

/// Tasks not yet done, in topological order.
pub fn compute_pending(graph: &TaskGraph, store: &StateStore) -> Vec<String> {
    graph
        .topo_order()
        .into_iter()
        .filter(|t| !store.is_done(&t.name))
        .map(|t| t.name.clone())
        .collect()
}

/// Exclusive claim on a scene's state directory. Holds the owner's pid; a
/// lock whose process no longer exists is taken over.
#[derive(Debug)]
pub struct SceneLock {
    path: PathBuf,
}

impl SceneLock {
    pub fn acquire(store: &StateStore) -> Result<Self> {
        fs::create_dir_all(store.dir()).map_err(Error::io(store.dir()))?;
        let path = store.dir().join(LOCK_FILE);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(Error::io(&path))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let owner = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    if owner.is_some_and(process_alive) {
                        return Err(Error::Locked(store.dir().to_path_buf()));
                    }
                    log::warn!("removing stale lock {}", path.display());
                    remove_if_exists(&path)?;
                }
                Err(e) => return Err(Error::io(&path)(e)),
            }
        }
        Err(Error::Locked(store.dir().to_path_buf()))
    }
}

impl Drop for SceneLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    if proc_root.is_dir() {
        proc_root.join(pid.to_string()).exists()
    } else {
        // Without procfs assume the owner is alive.
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions() {
        let mut s = TaskState::default();
        assert!(s.transition(TaskStatus::Done).is_err());
        s.transition(TaskStatus::Running).unwrap();
        s.transition(TaskStatus::Failed).unwrap();
        assert!(s.transition(TaskStatus::Running).is_err());
        s.transition(TaskStatus::Pending).unwrap();
        s.transition(TaskStatus::Running).unwrap();
        s.transition(TaskStatus::Done).unwrap();
        assert!(s.transition(TaskStatus::Pending).is_err());
    }

    #[test]
    fn done_requires_marker_and_record() {
        let dir = tempfile::tempdir().unwrap();
        let store = StateStore::new(dir.path());
        assert!(!store.is_done("a"));
        let s = store.begin("a").unwrap();
        assert_eq!(store.read("a").status, TaskStatus::Running);
        store.finish("a", s, 0).unwrap();
        assert!(store.is_done("a"));
        fs::remove_file(store.marker_path("a")).unwrap();
        assert!(!store.is_done("a"));
        // incomplete done record can be restarted
        let s = store.begin("a").unwrap();
        store.finish("a", s, 3).unwrap();
        assert_eq!(store.read("a").status, TaskStatus::Failed);
        assert!(!store.is_done("a"));
    }

    #[test]
    fn corrupt_state_is_pending() {
        let dir = tempfile::tempdir().unwrap();
        let store = StateStore::new(dir.path());
        fs::write(store.state_path("a"), "{not json").unwrap();
        assert_eq!(store.read("a"), TaskState::default());
        store.begin("a").unwrap();
    }

    #[test]
    fn lock_is_exclusive_and_stale_locks_are_taken() {
        let dir = tempfile::tempdir().unwrap();
        let store = StateStore::new(dir.path());
        let lock = SceneLock::acquire(&store).unwrap();
        assert!(matches!(SceneLock::acquire(&store), Err(Error::Locked(_))));
        drop(lock);
        fs::write(dir.path().join(LOCK_FILE), format!("{}", u32::MAX - 1)).unwrap();
        let _lock = SceneLock::acquire(&store).unwrap();
    }
}
