use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use log::info;

pub const DEFAULT_TTL: Duration = Duration::from_secs(2 * 60 * 60);
pub const DEFAULT_CAPACITY: usize = 256;

/// Artifact kinds exchanged between chains.
pub mod kinds {
    pub const LAX_LANDMARKS: &str = "lax_landmarks";
    pub const PERF_REST_SECTORS: &str = "perf_rest_sectors";
    pub const PERF_STRESS_SECTORS: &str = "perf_stress_sectors";
}

type Key = (String, String);

/// Cross-connection artifact store keyed by (session key, artifact kind).
#[derive(Debug)]
pub struct SessionStore {
    ttl: Duration,
    capacity: usize,
    entries: Mutex<HashMap<Key, (Vec<u8>, Instant)>>,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(DEFAULT_TTL, DEFAULT_CAPACITY)
    }
}

impl SessionStore {
    pub fn new(ttl: Duration, capacity: usize) -> Self {
        Self { ttl, capacity: capacity.max(1), entries: Mutex::new(HashMap::new()) }
    }

    pub fn put(&self, session_key: &str, kind: &str, payload: Vec<u8>) {
        self.put_at(session_key, kind, payload, Instant::now())
    }

    fn put_at(&self, session_key: &str, kind: &str, payload: Vec<u8>, now: Instant) {
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        entries.retain(|_, (_, t)| now.duration_since(*t) < self.ttl);
        let key = (session_key.to_string(), kind.to_string());
        if !entries.contains_key(&key) && entries.len() >= self.capacity {
            if let Some(oldest) = entries.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k.clone()) {
                info!("session store full, evicting {}/{}", oldest.0, oldest.1);
                entries.remove(&oldest);
            }
        }
        entries.insert(key, (payload, now));
    }

    pub fn get(&self, session_key: &str, kind: &str) -> Option<Vec<u8>> {
        self.get_at(session_key, kind, Instant::now())
    }

    fn get_at(&self, session_key: &str, kind: &str, now: Instant) -> Option<Vec<u8>> {
        let entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        let (payload, t) = entries.get(&(session_key.to_string(), kind.to_string()))?;
        (now.duration_since(*t) < self.ttl).then(|| payload.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
