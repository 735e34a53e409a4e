//! Append-only session files, one per session, in the ingest line format.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::distr::{Alphanumeric, SampleString};
use serde::{Deserialize, Serialize};

use pinlogger::ingest::{encode_record, parse_session, HeaderRecord, KeyRecord, Record, SampleRecord};
use pinlogger::model::KeyEvent;
use pinlogger::pipeline::session_file_name;

pub const ID_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub user: String,
    pub device: String,
    pub created: String,
    pub state: SessionState,
    pub samples: u64,
    pub events: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("session {0} is closed")]
    Closed(String),
    #[error("item {index}: t = {t} does not follow {last}")]
    OutOfOrder { index: usize, t: f64, last: f64 },
    #[error("item {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("storage failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Index of the first rejected item, for batch errors.
    pub fn index(&self) -> Option<usize> {
        match self {
            StoreError::OutOfOrder { index, .. } | StoreError::Invalid { index, .. } => Some(*index),
            _ => None,
        }
    }
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

struct Entry {
    session: Session,
    path: PathBuf,
    last_sample_t: Option<f64>,
    last_event_t: Option<f64>,
}

impl Entry {
    /// Writes `lines` in one call; on failure the file is cut back to its
    /// previous length so a batch is never partially persisted.
    fn append(&mut self, lines: &str) -> StoreResult<()> {
        let mut file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| StoreError::io(&self.path, e))?;
        let before = file.metadata().map_err(|e| StoreError::io(&self.path, e))?.len();
        if let Err(e) = file.write_all(lines.as_bytes()).and_then(|_| file.flush()) {
            let _ = file.set_len(before);
            return Err(StoreError::io(&self.path, e));
        }
        Ok(())
    }

    fn ensure_open(&self) -> StoreResult<()> {
        match self.session.state {
            SessionState::Open => Ok(()),
            SessionState::Closed => Err(StoreError::Closed(self.session.id.clone())),
        }
    }
}

/// Sessions live in memory for bookkeeping and on disk as `<id>.jsonl`.
/// Each session has its own lock, so requests for different sessions never
/// wait on each other.
pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<Entry>>>>,
}

impl SessionStore {
    /// Opens `dir`, creating it if needed. Session files already present are
    /// registered as closed so they stay readable but are never reopened.
    pub fn open(dir: impl Into<PathBuf>) -> StoreResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        let mut sessions = HashMap::new();
        for item in fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))? {
            let path = item.map_err(|e| StoreError::io(&dir, e))?.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
            let parsed = match parse_session(&bytes) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("skipping unreadable session file {}: {e}", path.display());
                    continue;
                }
            };
            let session = Session {
                id: parsed.meta.session_id.clone(),
                user: parsed.meta.user_id,
                device: parsed.meta.device_label,
                created: parsed.meta.created,
                state: SessionState::Closed,
                samples: parsed.trace.samples.len() as u64,
                events: parsed.events.len() as u64,
            };
            let entry = Entry {
                last_sample_t: parsed.trace.samples.last().map(|s| s.t),
                last_event_t: parsed.events.last().map(|e| e.t),
                session,
                path,
            };
            sessions.insert(parsed.meta.session_id, Arc::new(Mutex::new(entry)));
        }
        log::info!("session store at {} ({} existing sessions)", dir.display(), sessions.len());
        Ok(SessionStore {
            dir,
            sessions: Mutex::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(session_file_name(id))
    }

    fn entry(&self, id: &str) -> StoreResult<Arc<Mutex<Entry>>> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Creates the session file holding only the header line.
    pub fn create(&self, user: &str, device: &str) -> StoreResult<Session> {
        let created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        loop {
            let id = Alphanumeric.sample_string(&mut rand::rng(), ID_LEN);
            let path = self.path_of(&id);
            let mut file = match File::create_new(&path) {
                Ok(f) => f,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(StoreError::io(&path, e)),
            };
            let header = Record::Header(HeaderRecord {
                session: id.clone(),
                user: user.to_string(),
                device: device.to_string(),
                created: created.clone(),
            });
            let line = encode_record(&header) + "\n";
            if let Err(e) = file.write_all(line.as_bytes()) {
                let _ = fs::remove_file(&path);
                return Err(StoreError::io(&path, e));
            }
            let session = Session {
                id: id.clone(),
                user: user.to_string(),
                device: device.to_string(),
                created: created.clone(),
                state: SessionState::Open,
                samples: 0,
                events: 0,
            };
            let entry = Entry {
                session: session.clone(),
                path,
                last_sample_t: None,
                last_event_t: None,
            };
            // create_new above guarantees the id is not taken.
            self.sessions.lock().expect("session map lock").insert(id, Arc::new(Mutex::new(entry)));
            return Ok(session);
        }
    }

    /// Appends a batch of samples. Times must be strictly increasing, within
    /// the batch and after the last stored sample. Nothing is written unless
    /// every sample passes.
    pub fn append_samples(&self, id: &str, samples: &[SampleRecord]) -> StoreResult<usize> {
        let entry = self.entry(id)?;
        let mut entry = entry.lock().expect("session lock");
        entry.ensure_open()?;
        let mut last = entry.last_sample_t;
        let mut lines = String::new();
        for (index, s) in samples.iter().enumerate() {
            s.check().map_err(|e| StoreError::Invalid {
                index,
                message: e.to_string(),
            })?;
            if let Some(prev) = last {
                if s.t <= prev {
                    return Err(StoreError::OutOfOrder { index, t: s.t, last: prev });
                }
            }
            last = Some(s.t);
            lines.push_str(&encode_record(&Record::Sample(s.clone())));
            lines.push('\n');
        }
        entry.append(&lines)?;
        entry.last_sample_t = last;
        entry.session.samples += samples.len() as u64;
        Ok(samples.len())
    }

    /// Appends key events. Times must not decrease. A typed PIN that differs
    /// from the expected one is stored as is.
    pub fn append_events(&self, id: &str, events: &[KeyRecord]) -> StoreResult<usize> {
        let entry = self.entry(id)?;
        let mut entry = entry.lock().expect("session lock");
        entry.ensure_open()?;
        let mut last = entry.last_event_t;
        let mut lines = String::new();
        for (index, k) in events.iter().enumerate() {
            KeyEvent::try_from(k.clone()).map_err(|e| StoreError::Invalid {
                index,
                message: e.to_string(),
            })?;
            if let Some(prev) = last {
                if k.t < prev {
                    return Err(StoreError::OutOfOrder { index, t: k.t, last: prev });
                }
            }
            last = Some(k.t);
            lines.push_str(&encode_record(&Record::Key(k.clone())));
            lines.push('\n');
        }
        entry.append(&lines)?;
        entry.last_event_t = last;
        entry.session.events += events.len() as u64;
        Ok(events.len())
    }

    /// Closing twice is not an error.
    pub fn close(&self, id: &str) -> StoreResult<Session> {
        let entry = self.entry(id)?;
        let mut entry = entry.lock().expect("session lock");
        entry.session.state = SessionState::Closed;
        Ok(entry.session.clone())
    }

    pub fn get(&self, id: &str) -> StoreResult<Session> {
        let entry = self.entry(id)?;
        let entry = entry.lock().expect("session lock");
        Ok(entry.session.clone())
    }
}
