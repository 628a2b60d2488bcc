use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::session::{CreateRequest, Session, Snapshot, StoredSession};
use crate::ApiError;

/// In-memory sessions, each behind its own lock, mirrored to one JSON file
/// per session in a directory.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    /// Store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Store backed by `dir`, loading every session file already there.
    pub fn open(dir: PathBuf) -> Result<Self, ApiError> {
        fs::create_dir_all(&dir).map_err(|e| ApiError::Core(e.into()))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| ApiError::Core(e.into()))? {
            let path = entry.map_err(|e| ApiError::Core(e.into()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| ApiError::Core(e.into()))?;
            let stored: StoredSession = serde_json::from_str(&text)
                .map_err(|e| ApiError::Core(liftcap_core::Error::Parse(format!("{}: {e}", path.display()))))?;
            let s = Session::from_stored(stored)?;
            sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(Self {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, req: CreateRequest) -> Result<Snapshot, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::create(id.clone(), req)?;
        self.persist(&session)?;
        let snap = session.snapshot();
        self.sessions.write().insert(id, Arc::new(Mutex::new(session)));
        Ok(snap)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    /// Writes the session to a temporary file and renames it into place.
    pub fn persist(&self, session: &Session) -> Result<(), ApiError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        write_atomic(&dir.join(format!("{}.json", session.id)), &session.to_stored())
    }
}

fn write_atomic(path: &Path, stored: &StoredSession) -> Result<(), ApiError> {
    let io = |e: std::io::Error| ApiError::Core(e.into());
    let text = serde_json::to_vec(stored).map_err(|e| ApiError::Internal(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&text).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
