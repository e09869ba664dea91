use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use artiscope::config::Config;
use artiscope::engine::Session;
use artiscope::llm::{client_from_config, ChatClient};

use crate::error::Failure;
use crate::ServeError;

pub type SharedSession = Arc<Mutex<Session>>;

/// Everything the handlers share: configuration, the chat client and the
/// live sessions, each behind its own lock.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: Config,
    client: Arc<dyn ChatClient>,
    sessions: RwLock<HashMap<String, SharedSession>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn from_config(config: Config) -> Result<Self, ServeError> {
        config.rule_set()?;
        let client: Arc<dyn ChatClient> = Arc::from(client_from_config(&config.llm)?);
        Ok(Self::with_client(config, client))
    }

    pub fn with_client(config: Config, client: Arc<dyn ChatClient>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                config,
                client,
                sessions: RwLock::new(HashMap::new()),
                next_session: AtomicU64::new(1),
            }),
        }
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    pub fn client(&self) -> Arc<dyn ChatClient> {
        Arc::clone(&self.inner.client)
    }

    pub fn new_session(&self) -> Result<(String, Session), Failure> {
        let n = self.inner.next_session.fetch_add(1, Ordering::Relaxed);
        let id = format!("s{n}");
        let session = self
            .inner
            .config
            .new_session(id.clone())
            .map_err(|e| Failure::internal(e.to_string()))?;
        Ok((id, session))
    }

    pub fn insert(&self, id: String, session: Session) {
        self.inner
            .sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(Mutex::new(session)));
    }

    pub fn session(&self, id: &str) -> Result<SharedSession, Failure> {
        self.inner
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Failure::not_found(format!("session {id}")))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .inner
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort_by_key(|id| id[1..].parse::<u64>().unwrap_or(u64::MAX));
        ids
    }

    pub fn save_path(&self, id: &str) -> PathBuf {
        PathBuf::from(&self.inner.config.server.data_dir).join(format!("{id}.{}", artiscope::store::EXTENSION))
    }
}

/// Locks a session; a panic in an earlier holder does not poison it for good.
pub fn lock(session: &SharedSession) -> MutexGuard<'_, Session> {
    session.lock().unwrap_or_else(|p| p.into_inner())
}
