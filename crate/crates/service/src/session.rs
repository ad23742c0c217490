use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use soel_core::{QueryPlan, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    WarmingUp,
    AwaitingLabels,
    Estimating,
    Training,
    Done,
    Failed,
}

impl SessionState {
    pub fn can_become(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (WarmingUp, AwaitingLabels)
                | (AwaitingLabels, Estimating)
                | (Estimating, Training)
                | (Training, Done)
        ) || (next == Failed && !self.is_terminal())
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Done | SessionState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingItem {
    pub index: usize,
    /// Raw features for 2-D data, otherwise the first two embedding
    /// coordinates.
    pub coords: [f64; 2],
    pub projection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub alpha_hat: Option<f64>,
    pub alpha_tilde: f64,
    pub test_auc: Option<f64>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub dataset: String,
    pub plan: QueryPlan,
    pub train: TrainConfig,
    pub require_finalize: bool,
    pub state: SessionState,
    /// Query indices in selection order; empty while warming up.
    pub queries: Vec<usize>,
    pub pending: Vec<PendingItem>,
    pub received: BTreeMap<usize, u8>,
    pub created_at: u64,
    pub updated_at: u64,
    pub result: Option<SessionResult>,
    pub error: Option<String>,
}

pub(crate) fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Session {
    pub(crate) fn new(
        id: String,
        dataset: String,
        plan: QueryPlan,
        train: TrainConfig,
        require_finalize: bool,
    ) -> Self {
        let t = now_millis();
        Session {
            id,
            dataset,
            plan,
            train,
            require_finalize,
            state: SessionState::WarmingUp,
            queries: Vec::new(),
            pending: Vec::new(),
            received: BTreeMap::new(),
            created_at: t,
            updated_at: t,
            result: None,
            error: None,
        }
    }

    /// Moves to `next`; illegal transitions are logged and ignored.
    pub(crate) fn transition(&mut self, next: SessionState) -> bool {
        if !self.state.can_become(next) {
            log::error!(
                "session {}: refused transition {:?} -> {next:?}",
                self.id,
                self.state
            );
            return false;
        }
        self.state = next;
        self.updated_at = now_millis();
        true
    }

    pub(crate) fn fail(&mut self, message: String) {
        log::warn!("session {} failed: {message}", self.id);
        if self.transition(SessionState::Failed) {
            self.error = Some(message);
        }
    }

    /// Labels in query order, once every query is answered.
    pub(crate) fn ordered_labels(&self) -> Option<Vec<u8>> {
        self.queries
            .iter()
            .map(|i| self.received.get(i).copied())
            .collect()
    }
}

/// Sessions persisted as one JSON file per id.
#[derive(Debug, Clone, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        SessionStore { dir: None }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir: Some(dir) })
    }

    fn path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    pub(crate) fn save(&self, session: &Session) {
        let Some(dir) = &self.dir else { return };
        let path = Self::path(dir, &session.id);
        let tmp = path.with_extension("json.tmp");
        let write = serde_json::to_vec_pretty(session)
            .map_err(std::io::Error::other)
            .and_then(|bytes| fs::write(&tmp, bytes))
            .and_then(|()| fs::rename(&tmp, &path));
        if let Err(e) = write {
            log::error!("cannot persist session {}: {e}", session.id);
        }
    }

    pub(crate) fn load_all(&self) -> std::io::Result<Vec<Session>> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                match serde_json::from_slice(&fs::read(&path)?) {
                    Ok(s) => out.push(s),
                    Err(e) => {
                        log::warn!("skipping unreadable session file {}: {e}", path.display())
                    }
                }
            }
        }
        out.sort_by_key(|s: &Session| s.created_at);
        Ok(out)
    }
}
