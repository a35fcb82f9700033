//! The persistent information-screening logic the evaluator revises.
//!
//! One snapshot per revision is kept (current included), so the full
//! revision history is always reconstructible and `history.len()`
//! equals the revision counter.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GLOBAL_LOGIC: &str = "Treat the 90 minutes before an event start as the \
ingress build-up window and the 45 minutes after the end as the egress window. Weight \
attendance-scale signals (stated figures, crowd descriptors) above venue amenities. Prefer \
texts naming roads, directions, or timing over general enthusiasm. Flag weekend evening \
events for extended build-up.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicSnapshot {
    pub revision: u64,
    pub logic_global: String,
    pub logic_venue: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicStore {
    pub logic_global: String,
    pub logic_venue: BTreeMap<String, String>,
    pub revision: u64,
    history: Vec<LogicSnapshot>,
}

impl LogicStore {
    pub fn new(logic_global: &str) -> Self {
        let mut store = LogicStore {
            logic_global: logic_global.to_string(),
            logic_venue: BTreeMap::new(),
            revision: 1,
            history: Vec::new(),
        };
        store.history.push(store.snapshot());
        store
    }

    pub fn seeded() -> Self {
        LogicStore::new(DEFAULT_GLOBAL_LOGIC)
    }

    fn snapshot(&self) -> LogicSnapshot {
        LogicSnapshot {
            revision: self.revision,
            logic_global: self.logic_global.clone(),
            logic_venue: self.logic_venue.clone(),
        }
    }

    pub fn history(&self) -> &[LogicSnapshot] {
        &self.history
    }

    pub fn venue_logic(&self, venue_id: &str) -> Option<&str> {
        self.logic_venue.get(venue_id).map(String::as_str)
    }

    /// One atomic revision: replace the global text and/or any venue
    /// texts, bump the counter, archive the new state.
    pub fn apply_update(
        &mut self,
        new_global: Option<String>,
        venue_updates: BTreeMap<String, String>,
    ) {
        if let Some(g) = new_global {
            self.logic_global = g;
        }
        for (venue, text) in venue_updates {
            self.logic_venue.insert(venue, text);
        }
        self.revision += 1;
        self.history.push(self.snapshot());
    }

    /// Persist as logic_store.json, atomically (write-then-rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let store: LogicStore =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if store.history.len() as u64 != store.revision {
            return Err(Error::Data(format!(
                "{}: logic store history ({}) does not match revision {}",
                path.display(),
                store.history.len(),
                store.revision
            )));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn revisions_archive_every_version() {
        let mut store = LogicStore::seeded();
        assert_eq!(store.revision, 1);
        assert_eq!(store.history().len(), 1);

        store.apply_update(Some("v2 logic".into()), BTreeMap::new());
        let mut venue = BTreeMap::new();
        venue.insert("V0".to_string(), "venue logic".to_string());
        store.apply_update(None, venue);

        assert_eq!(store.revision, 3);
        assert_eq!(store.history().len(), 3);
        assert_eq!(store.history()[0].logic_global, DEFAULT_GLOBAL_LOGIC);
        assert_eq!(store.history()[1].logic_global, "v2 logic");
        assert_eq!(store.history()[2].logic_venue["V0"], "venue logic");
        assert_eq!(store.logic_global, "v2 logic");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logic_store.json");
        let mut store = LogicStore::seeded();
        store.apply_update(Some("revised".into()), BTreeMap::new());
        store.save(&path).unwrap();
        let loaded = LogicStore::load(&path).unwrap();
        assert_eq!(loaded, store);
    }
}
