//! Live session state: variable freshness, per-operation memo records and a
//! content-addressed value store that can be backed by a cache directory.
//!
//! Cache layout:
//!
//! ```text
//! <cache>/values/<hex-digest>   canonical serialization of one value
//! <cache>/session.json          variables, freshness and operation records
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::dsl::VarName;
use crate::error::{Error, Result};
use crate::fingerprint::{self, Fingerprint};
use crate::graph::{NodeSignature, OpId};
use crate::purity::HiddenArgument;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freshness {
    UpToDate,
    PotentiallyStale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub digest: Fingerprint,
    pub freshness: Freshness,
}

/// What an operation saw the last time it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub signature: NodeSignature,
    pub outputs: Vec<VarName>,
    pub inputs: Vec<(VarName, Fingerprint)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<HiddenArgument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub op: OpId,
    /// Microseconds since the Unix epoch.
    pub started_at: u64,
    pub skipped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ValueStore {
    memory: Arc<RwLock<HashMap<Fingerprint, Arc<Value>>>>,
    dir: Option<PathBuf>,
}

impl ValueStore {
    pub fn in_memory() -> Self {
        ValueStore::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ValueStore {
            memory: Arc::default(),
            dir: Some(dir),
        })
    }

    fn path(&self, digest: &Fingerprint) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(digest.to_hex()))
    }

    pub fn put(&self, value: Value) -> Result<(Fingerprint, Arc<Value>)> {
        let bytes = fingerprint::encode(&value);
        let digest = fingerprint::fingerprint_bytes(&bytes);
        if let Some(path) = self.path(&digest) {
            if !path.exists() {
                let tmp = path.with_extension("tmp");
                std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
                std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
            }
        }
        let value = Arc::new(value);
        self.memory
            .write()
            .unwrap()
            .insert(digest, Arc::clone(&value));
        Ok((digest, value))
    }

    pub fn get(&self, digest: &Fingerprint) -> Result<Option<Arc<Value>>> {
        if let Some(v) = self.memory.read().unwrap().get(digest) {
            return Ok(Some(Arc::clone(v)));
        }
        let Some(path) = self.path(digest) else {
            return Ok(None);
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        if fingerprint::fingerprint_bytes(&bytes) != *digest {
            return Err(Error::Decode(format!(
                "{} does not match its digest",
                path.display()
            )));
        }
        let value = Arc::new(fingerprint::decode(&bytes)?);
        self.memory
            .write()
            .unwrap()
            .insert(*digest, Arc::clone(&value));
        Ok(Some(value))
    }

    pub fn contains(&self, digest: &Fingerprint) -> bool {
        self.memory.read().unwrap().contains_key(digest)
            || self.path(digest).is_some_and(|p| p.exists())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct SessionFile {
    variables: BTreeMap<VarName, Entry>,
    operations: BTreeMap<OpId, NodeRecord>,
    next_seq: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Session {
    entries: BTreeMap<VarName, Entry>,
    records: BTreeMap<OpId, NodeRecord>,
    log: Vec<LogEntry>,
    next_seq: u64,
    store: ValueStore,
    cache_dir: Option<PathBuf>,
}

impl Session {
    pub fn in_memory() -> Self {
        Session::default()
    }

    /// Opens (or creates) a session persisted in `cache_dir`.
    pub fn open(cache_dir: &Path) -> Result<Self> {
        let store = ValueStore::on_disk(cache_dir.join("values"))?;
        let file = cache_dir.join("session.json");
        let state: SessionFile = match std::fs::read_to_string(&file) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => SessionFile::default(),
            Err(e) => return Err(Error::io(&file, e)),
        };
        Ok(Session {
            entries: state.variables,
            records: state.operations,
            log: Vec::new(),
            next_seq: state.next_seq,
            store,
            cache_dir: Some(cache_dir.to_path_buf()),
        })
    }

    /// Writes `session.json`; a no-op for in-memory sessions.
    pub fn save(&self) -> Result<()> {
        let Some(dir) = &self.cache_dir else {
            return Ok(());
        };
        let state = SessionFile {
            variables: self.entries.clone(),
            operations: self.records.clone(),
            next_seq: self.next_seq,
        };
        let file = dir.join("session.json");
        let tmp = dir.join("session.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&state)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &file).map_err(|e| Error::io(&file, e))
    }

    pub fn store(&self) -> &ValueStore {
        &self.store
    }

    pub fn entries(&self) -> &BTreeMap<VarName, Entry> {
        &self.entries
    }

    pub fn entry(&self, var: &str) -> Option<&Entry> {
        self.entries.get(var)
    }

    pub fn freshness(&self, var: &str) -> Option<Freshness> {
        self.entries.get(var).map(|e| e.freshness)
    }

    pub fn is_up_to_date(&self, var: &str) -> bool {
        self.freshness(var) == Some(Freshness::UpToDate)
    }

    pub fn digest(&self, var: &str) -> Option<Fingerprint> {
        self.entries.get(var).map(|e| e.digest)
    }

    pub fn value(&self, var: &str) -> Result<Arc<Value>> {
        let entry = self
            .entries
            .get(var)
            .ok_or_else(|| Error::UnknownVariable(var.to_string()))?;
        self.store
            .get(&entry.digest)?
            .ok_or_else(|| Error::MissingValue(var.to_string()))
    }

    pub fn records(&self) -> &BTreeMap<OpId, NodeRecord> {
        &self.records
    }

    pub fn record(&self, op: &OpId) -> Option<&NodeRecord> {
        self.records.get(op)
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn mark_stale<'a>(&mut self, vars: impl IntoIterator<Item = &'a VarName>) {
        for v in vars {
            if let Some(e) = self.entries.get_mut(v) {
                e.freshness = Freshness::PotentiallyStale;
            }
        }
    }

    pub(crate) fn mark_fresh(&mut self, var: &VarName) {
        if let Some(e) = self.entries.get_mut(var) {
            e.freshness = Freshness::UpToDate;
        }
    }

    pub(crate) fn set_output(&mut self, var: VarName, digest: Fingerprint) {
        self.entries.insert(
            var,
            Entry {
                digest,
                freshness: Freshness::UpToDate,
            },
        );
    }

    pub(crate) fn set_record(&mut self, op: OpId, record: NodeRecord) {
        self.records.insert(op, record);
    }

    /// Forgets an operation and the variables it produced.
    pub fn evict(&mut self, op: &OpId) {
        if let Some(record) = self.records.remove(op) {
            for out in &record.outputs {
                self.entries.remove(out);
            }
        }
    }

    /// Drops variables that no operation record accounts for.
    pub fn evict_orphans(&mut self) {
        let produced: std::collections::BTreeSet<&VarName> = self
            .records
            .values()
            .flat_map(|r| r.outputs.iter())
            .collect();
        let orphans: Vec<VarName> = self
            .entries
            .keys()
            .filter(|v| !produced.contains(v))
            .cloned()
            .collect();
        for v in orphans {
            self.entries.remove(&v);
        }
    }

    pub(crate) fn append_log(&mut self, op: OpId, started_at: u64, skipped: bool) -> LogEntry {
        let entry = LogEntry {
            seq: self.next_seq,
            op,
            started_at,
            skipped,
        };
        self.next_seq += 1;
        self.log.push(entry.clone());
        entry
    }

    /// Digest of every variable, for comparing sessions.
    pub fn digests(&self) -> BTreeMap<VarName, Fingerprint> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.digest))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Scalar;

    #[test]
    fn disk_store_round_trips_values() {
        let dir = tempfile::tempdir().unwrap();
        let store = ValueStore::on_disk(dir.path().join("values")).unwrap();
        let (digest, _) = store.put(Value::Scalar(Scalar::Str("x".into()))).unwrap();
        assert!(dir.path().join("values").join(digest.to_hex()).exists());

        let fresh = ValueStore::on_disk(dir.path().join("values")).unwrap();
        let back = fresh.get(&digest).unwrap().unwrap();
        assert_eq!(*back, Value::Scalar(Scalar::Str("x".into())));
    }

    #[test]
    fn tampered_cache_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = ValueStore::on_disk(dir.path()).unwrap();
        let (digest, _) = store.put(Value::Scalar(Scalar::Bool(true))).unwrap();
        std::fs::write(dir.path().join(digest.to_hex()), b"garbage").unwrap();
        let fresh = ValueStore::on_disk(dir.path()).unwrap();
        assert!(fresh.get(&digest).is_err());
    }

    #[test]
    fn session_persists_entries_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut session = Session::open(dir.path()).unwrap();
        let (digest, _) = session
            .store()
            .put(Value::Scalar(Scalar::Number(1.0)))
            .unwrap();
        session.set_output("x".into(), digest);
        session.set_record(
            "x".into(),
            NodeRecord {
                signature: NodeSignature {
                    callee: "<literal>".into(),
                    args: vec![],
                },
                outputs: vec!["x".into()],
                inputs: vec![],
                hidden: None,
            },
        );
        session.save().unwrap();

        let reopened = Session::open(dir.path()).unwrap();
        assert_eq!(reopened.digest("x"), Some(digest));
        assert!(reopened.is_up_to_date("x"));
        assert_eq!(
            *reopened.value("x").unwrap(),
            Value::Scalar(Scalar::Number(1.0))
        );
        assert!(reopened.record(&"x".into()).is_some());
    }

    #[test]
    fn evict_removes_outputs() {
        let mut session = Session::in_memory();
        let (d, _) = session
            .store()
            .put(Value::Scalar(Scalar::Bool(false)))
            .unwrap();
        session.set_output("a".into(), d);
        session.set_output("b".into(), d);
        session.set_record(
            "a".into(),
            NodeRecord {
                signature: NodeSignature {
                    callee: "split".into(),
                    args: vec![],
                },
                outputs: vec!["a".into(), "b".into()],
                inputs: vec![],
                hidden: None,
            },
        );
        session.evict(&"a".into());
        assert!(session.entries().is_empty());
    }
}
