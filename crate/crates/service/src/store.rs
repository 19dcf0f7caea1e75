//! On-disk layout, one directory per user:
//!
//! ```text
//! <root>/pool.json              microtask pool shared by every user
//! <root>/users/<id>/state       snapshot (see below), replaced atomically
//! <root>/users/<id>/events.jsonl append-only event log
//! <root>/users/<id>/lock        advisory lock held for one request
//! <root>/users/<id>/quarantined present once the user's state is unusable
//! ```
//!
//! Snapshot container, little-endian:
//!
//! ```text
//! magic    b"NUSR"
//! version  u32
//! crc32    u32      over everything after this field
//! meta_len u64
//! meta     JSON     engine, policy (minus A2C weights), committed log length
//! blob     bytes    A2C policy state, empty for other policies
//! ```
//!
//! The snapshot is the commit point. Events are appended and synced first;
//! `log_bytes` in the snapshot records how much of the log is committed, so
//! a tail left by a crash between the two writes is cut off on next load.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nudge_core::a2c::{self, A2cAgent, A2cError, Hyperparameters};
use nudge_core::engine::{EngineConfig, EventRecord, Policy, UserEngine};
use nudge_core::persist::write_atomic;
use nudge_core::study::{self, AgentKind, ReportError, SupervisedConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"NUSR";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("user {0} is not registered")]
    NotRegistered(String),
    #[error("user {0} is already registered")]
    Duplicate(String),
    #[error("user {0} has a request in flight")]
    Busy(String),
    #[error("user {user} is quarantined: {reason}")]
    Quarantined { user: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotError {
    #[error("snapshot truncated")]
    Truncated,
    #[error("bad snapshot magic")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("snapshot metadata: {0}")]
    Meta(String),
    #[error("policy blob: {0}")]
    Blob(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-user settings fixed at registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserSettings {
    /// Engine and policy seeds are derived from this and the user id.
    pub seed: u64,
    pub engine: EngineConfig,
    pub hyperparameters: Hyperparameters,
    pub supervised: SupervisedConfig,
}

impl Default for UserSettings {
    fn default() -> Self {
        UserSettings {
            seed: 0,
            engine: EngineConfig::default(),
            hyperparameters: Hyperparameters::default(),
            supervised: SupervisedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StoredPolicy {
    /// Weights live in the binary blob.
    A2c { hp: Hyperparameters },
    Inline(Policy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    user: String,
    agent: AgentKind,
    settings: UserSettings,
    engine: UserEngine,
    policy: StoredPolicy,
    log_bytes: u64,
    requests: u64,
}

/// Everything needed to serve the next request for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user: String,
    pub agent: AgentKind,
    pub settings: UserSettings,
    pub engine: UserEngine,
    pub policy: Policy,
    /// Committed length of the event log.
    pub log_bytes: u64,
    pub requests: u64,
}

pub fn encode_snapshot(state: &UserState) -> Result<Vec<u8>, serde_json::Error> {
    let (policy, blob) = match &state.policy {
        Policy::A2c(agent) => (StoredPolicy::A2c { hp: agent.hp.clone() }, a2c::save(&agent.state)),
        other => (StoredPolicy::Inline(other.clone()), Vec::new()),
    };
    let meta = serde_json::to_vec(&Meta {
        user: state.user.clone(),
        agent: state.agent,
        settings: state.settings.clone(),
        engine: state.engine.clone(),
        policy,
        log_bytes: state.log_bytes,
        requests: state.requests,
    })?;
    let mut body = Vec::with_capacity(8 + meta.len() + blob.len());
    body.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    body.extend_from_slice(&meta);
    body.extend_from_slice(&blob);

    let mut out = Vec::with_capacity(12 + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<UserState, SnapshotError> {
    if bytes.len() < HEADER_LEN {
        return Err(SnapshotError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(SnapshotError::Magic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version(version));
    }
    let crc = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let body = &bytes[12..];
    let meta_len = u64::from_le_bytes(body[..8].try_into().unwrap());
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|n| n.checked_add(8))
        .filter(|&end| end <= body.len())
        .ok_or(SnapshotError::Truncated)?;
    if crc32fast::hash(body) != crc {
        return Err(SnapshotError::Checksum);
    }
    let meta: Meta = serde_json::from_slice(&body[8..meta_end]).map_err(|e| SnapshotError::Meta(e.to_string()))?;
    let blob = &body[meta_end..];
    let policy = match meta.policy {
        StoredPolicy::A2c { hp } => Policy::A2c(A2cAgent {
            state: a2c::load(blob).map_err(|e: A2cError| SnapshotError::Blob(e.to_string()))?,
            hp,
        }),
        StoredPolicy::Inline(p) => p,
    };
    Ok(UserState {
        user: meta.user,
        agent: meta.agent,
        settings: meta.settings,
        engine: meta.engine,
        policy,
        log_bytes: meta.log_bytes,
        requests: meta.requests,
    })
}

/// Exclusive access to one user for the duration of a request. Dropping it
/// releases the OS lock, including when the process dies.
#[derive(Debug)]
pub struct UserLock {
    user: String,
    dir: PathBuf,
    _file: File,
}

impl UserLock {
    pub fn user(&self) -> &str {
        &self.user
    }
}

pub fn valid_user_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let users = root.join("users");
        fs::create_dir_all(&users).map_err(io_err(&users))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn user_dir(&self, user: &str) -> PathBuf {
        self.root.join("users").join(user)
    }

    pub fn events_path(&self, user: &str) -> PathBuf {
        self.user_dir(user).join("events.jsonl")
    }

    pub fn state_path(&self, user: &str) -> PathBuf {
        self.user_dir(user).join("state")
    }

    pub fn is_registered(&self, user: &str) -> bool {
        valid_user_id(user) && self.state_path(user).is_file()
    }

    /// Writes the initial state into a scratch directory and renames it into
    /// place, so a user directory either exists complete or not at all.
    pub fn create(&self, state: &UserState) -> Result<(), StoreError> {
        let users = self.root.join("users");
        let target = self.user_dir(&state.user);
        if target.exists() {
            return Err(StoreError::Duplicate(state.user.clone()));
        }
        let scratch = tempfile::Builder::new()
            .prefix(".register-")
            .tempdir_in(&users)
            .map_err(io_err(&users))?;
        let events = scratch.path().join("events.jsonl");
        File::create(&events).map_err(io_err(&events))?;
        let lock = scratch.path().join("lock");
        File::create(&lock).map_err(io_err(&lock))?;
        let mut initial = state.clone();
        initial.log_bytes = 0;
        let snap = scratch.path().join("state");
        write_atomic(&snap, &encode_snapshot(&initial)?).map_err(io_err(&snap))?;

        let path = scratch.keep();
        match fs::rename(&path, &target) {
            Ok(()) => Ok(()),
            Err(e) => {
                let _ = fs::remove_dir_all(&path);
                if target.exists() {
                    Err(StoreError::Duplicate(state.user.clone()))
                } else {
                    Err(StoreError::Io { path: target, source: e })
                }
            }
        }
    }

    /// Takes the user's lock without waiting.
    pub fn lock(&self, user: &str) -> Result<UserLock, StoreError> {
        if !self.is_registered(user) {
            return Err(StoreError::NotRegistered(user.to_string()));
        }
        let dir = self.user_dir(user);
        let path = dir.join("lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(UserLock {
                user: user.to_string(),
                dir,
                _file: file,
            }),
            Err(TryLockError::WouldBlock) => Err(StoreError::Busy(user.to_string())),
            Err(TryLockError::Error(e)) => Err(StoreError::Io { path, source: e }),
        }
    }

    pub fn quarantine_reason(&self, user: &str) -> Option<String> {
        fs::read_to_string(self.user_dir(user).join("quarantined")).ok()
    }

    /// Marks the user unusable. Their files are left in place for inspection.
    pub fn quarantine(&self, lock: &UserLock, reason: &str) -> Result<(), StoreError> {
        let path = lock.dir.join("quarantined");
        write_atomic(&path, reason.as_bytes()).map_err(io_err(&path))
    }

    /// Loads the committed state, discarding any uncommitted log tail. A
    /// state that cannot be read back quarantines the user.
    pub fn load(&self, lock: &UserLock) -> Result<UserState, StoreError> {
        let user = lock.user();
        if let Some(reason) = self.quarantine_reason(user) {
            return Err(StoreError::Quarantined {
                user: user.to_string(),
                reason,
            });
        }
        let path = lock.dir.join("state");
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let fault = match decode_snapshot(&bytes) {
            Ok(state) if state.user != user => format!("snapshot belongs to {}", state.user),
            Ok(state) => match self.trim_log(lock, state.log_bytes) {
                Ok(true) => return Ok(state),
                Ok(false) => format!("event log shorter than committed length {}", state.log_bytes),
                Err(e) => return Err(e),
            },
            Err(e) => e.to_string(),
        };
        tracing::warn!(user, %fault, "quarantining user");
        self.quarantine(lock, &fault)?;
        Err(StoreError::Quarantined {
            user: user.to_string(),
            reason: fault,
        })
    }

    fn trim_log(&self, lock: &UserLock, committed: u64) -> Result<bool, StoreError> {
        let path = lock.dir.join("events.jsonl");
        let file = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
        let len = file.metadata().map_err(io_err(&path))?.len();
        if len < committed {
            return Ok(false);
        }
        if len > committed {
            file.set_len(committed).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        }
        Ok(true)
    }

    /// Appends `events` to the log and then replaces the snapshot.
    pub fn commit(&self, lock: &UserLock, state: &mut UserState, events: &[EventRecord]) -> Result<(), StoreError> {
        let path = lock.dir.join("events.jsonl");
        if !events.is_empty() {
            let mut buf = Vec::new();
            for e in events {
                serde_json::to_writer(&mut buf, e)?;
                buf.push(b'\n');
            }
            let mut file = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
            file.write_all(&buf).map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
            state.log_bytes += buf.len() as u64;
        }
        let snap = lock.dir.join("state");
        write_atomic(&snap, &encode_snapshot(state)?).map_err(io_err(&snap))
    }

    /// The committed part of a user's event log.
    pub fn events(&self, user: &str) -> Result<Vec<EventRecord>, ReportError> {
        study::read_events(&self.events_path(user))
    }
}
