//! In-memory session registry backed by one json file per session.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use displaylab::session::SessionState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub session_id: String,
    pub created_at: String,
    /// Dataset locator the session was created from, if not synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub state: SessionState,
}

/// A session file that could not be restored at startup.
#[derive(Debug, Clone)]
pub struct LoadFailure {
    pub path: PathBuf,
    pub message: String,
}

pub type Entry = Arc<Mutex<SessionFile>>;

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Entry>>,
}

impl Store {
    /// Creates `dir` if needed and restores every `*.json` session in it.
    pub fn open(dir: &Path) -> io::Result<(Self, Vec<LoadFailure>)> {
        fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        let mut failures = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            match read_session(&path) {
                Ok(file) => {
                    sessions.insert(file.session_id.clone(), Arc::new(Mutex::new(file)));
                }
                Err(message) => failures.push(LoadFailure { path, message }),
            }
        }
        let store = Self { dir: dir.to_path_buf(), sessions: RwLock::new(sessions) };
        Ok((store, failures))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn get(&self, id: &str) -> Option<Entry> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Persists a new session, then registers it.
    pub fn insert(&self, file: SessionFile) -> io::Result<Entry> {
        self.persist(&file)?;
        let entry = Arc::new(Mutex::new(file));
        let id = entry.lock().unwrap_or_else(|e| e.into_inner()).session_id.clone();
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, entry.clone());
        Ok(entry)
    }

    /// Atomically replaces the session's file on disk.
    pub fn persist(&self, file: &SessionFile) -> io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            serde_json::to_writer(&mut w, file)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(self.path_of(&file.session_id)).map_err(|e| e.error)?;
        Ok(())
    }
}

fn read_session(path: &Path) -> Result<SessionFile, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    let file: SessionFile = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    file.state.check_invariants().map_err(|e| e.to_string())?;
    if path.file_stem().and_then(|s| s.to_str()) != Some(file.session_id.as_str()) {
        return Err(format!("file name does not match session id {:?}", file.session_id));
    }
    Ok(file)
}
