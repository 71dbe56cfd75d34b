use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub type TxnId = u64;

/// A version of an object, labelled by the transaction that installed it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VersionRef {
    pub obj: String,
    pub version: TxnId,
}

impl VersionRef {
    pub fn new(obj: impl Into<String>, version: TxnId) -> Self {
        VersionRef { obj: obj.into(), version }
    }
}

impl std::fmt::Display for VersionRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.obj, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Read { obj: String, version: TxnId },
    Write { obj: String, version: TxnId },
    Derive { obj: String, version: TxnId, inputs: Vec<VersionRef> },
    Commit,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub txn: TxnId,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn read(txn: TxnId, obj: &str, version: TxnId) -> Self {
        Event { txn, kind: EventKind::Read { obj: obj.into(), version } }
    }

    pub fn write(txn: TxnId, obj: &str) -> Self {
        Event { txn, kind: EventKind::Write { obj: obj.into(), version: txn } }
    }

    pub fn derive(txn: TxnId, obj: &str, inputs: Vec<VersionRef>) -> Self {
        Event { txn, kind: EventKind::Derive { obj: obj.into(), version: txn, inputs } }
    }

    pub fn commit(txn: TxnId) -> Self {
        Event { txn, kind: EventKind::Commit }
    }

    pub fn abort(txn: TxnId) -> Self {
        Event { txn, kind: EventKind::Abort }
    }

    /// The version this event installs, if any.
    pub fn installs(&self) -> Option<VersionRef> {
        match &self.kind {
            EventKind::Write { obj, version } | EventKind::Derive { obj, version, .. } => {
                Some(VersionRef::new(obj.clone(), *version))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("malformed history: {0}")]
    Malformed(String),
    #[error("unknown version {0}")]
    UnknownVersion(String),
    #[error("invalid move: {0}")]
    InvalidMove(String),
    #[error("derivation is not encapsulated: {0}")]
    NotEncapsulated(String),
    #[error("history line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A history: events in a total order consistent with the partial order,
/// plus a per-object version order over committed versions. Transaction
/// `0` is the initializing transaction that installs every object's first
/// version.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pub events: Vec<Event>,
    pub version_order: BTreeMap<String, Vec<TxnId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Committed,
    Aborted,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    /// Outcome per transaction.
    pub fn outcomes(&self) -> BTreeMap<TxnId, Outcome> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            match e.kind {
                EventKind::Commit => {
                    out.insert(e.txn, Outcome::Committed);
                }
                EventKind::Abort => {
                    out.insert(e.txn, Outcome::Aborted);
                }
                _ => {}
            }
        }
        out
    }

    pub fn txns(&self) -> BTreeSet<TxnId> {
        self.events.iter().map(|e| e.txn).collect()
    }

    pub fn committed(&self) -> BTreeSet<TxnId> {
        self.outcomes().into_iter().filter(|(_, o)| *o == Outcome::Committed).map(|(t, _)| t).collect()
    }

    /// Every installed version with the index of its (last) installing event.
    pub fn installed(&self) -> BTreeMap<VersionRef, usize> {
        let mut out = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            if let Some(v) = e.installs() {
                out.insert(v, i);
            }
        }
        out
    }

    /// Derivation inputs of every derived version.
    pub fn derivations(&self) -> BTreeMap<VersionRef, Vec<VersionRef>> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            if let EventKind::Derive { obj, version, inputs } = &e.kind {
                out.insert(VersionRef::new(obj.clone(), *version), inputs.clone());
            }
        }
        out
    }

    /// Checks the structural invariants: every transaction ends exactly once
    /// and nothing follows its end, installed versions carry their
    /// installer's index, reads and derivation inputs reference installed
    /// versions, and version orders list exactly the committed installs.
    pub fn validate(&self) -> Result<(), HistoryError> {
        let mut ended = BTreeSet::new();
        let installed = self.installed();
        for e in &self.events {
            if ended.contains(&e.txn) {
                return Err(HistoryError::Malformed(format!("event after end of T{}", e.txn)));
            }
            match &e.kind {
                EventKind::Commit | EventKind::Abort => {
                    ended.insert(e.txn);
                }
                EventKind::Write { version, .. } | EventKind::Derive { version, .. } if *version != e.txn => {
                    return Err(HistoryError::Malformed(format!("T{} installs version index {version}", e.txn)));
                }
                EventKind::Read { obj, version } => {
                    if !installed.contains_key(&VersionRef::new(obj.clone(), *version)) {
                        return Err(HistoryError::UnknownVersion(format!("{obj}{version}")));
                    }
                }
                _ => {}
            }
            if let EventKind::Derive { inputs, .. } = &e.kind {
                for i in inputs {
                    if !installed.contains_key(i) {
                        return Err(HistoryError::UnknownVersion(i.to_string()));
                    }
                }
            }
        }
        for t in self.txns() {
            if !ended.contains(&t) {
                return Err(HistoryError::Malformed(format!("T{t} neither commits nor aborts")));
            }
        }
        let committed = self.committed();
        let mut expected: BTreeMap<String, BTreeSet<TxnId>> = BTreeMap::new();
        for v in installed.keys() {
            if committed.contains(&v.version) {
                expected.entry(v.obj.clone()).or_default().insert(v.version);
            }
        }
        for (obj, set) in &expected {
            let order: BTreeSet<TxnId> = self.version_order.get(obj).map(|o| o.iter().copied().collect()).unwrap_or_default();
            if &order != set {
                return Err(HistoryError::Malformed(format!("version order of {obj} does not match committed installs")));
            }
        }
        for (obj, order) in &self.version_order {
            if !expected.contains_key(obj) && !order.is_empty() {
                return Err(HistoryError::Malformed(format!("version order lists uninstalled versions of {obj}")));
            }
        }
        Ok(())
    }

    /// One event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON lines; version orders follow commit order.
    pub fn from_jsonl(text: &str) -> Result<History, HistoryError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Event =
                serde_json::from_str(line).map_err(|err| HistoryError::Parse { line: i + 1, message: err.to_string() })?;
            events.push(e);
        }
        let h = History::with_commit_order(events);
        h.validate()?;
        Ok(h)
    }

    /// Builds a history whose version orders follow commit order.
    pub fn with_commit_order(events: Vec<Event>) -> History {
        let mut h = History { events, version_order: BTreeMap::new() };
        let mut written: BTreeMap<TxnId, BTreeSet<String>> = BTreeMap::new();
        for e in &h.events {
            if let Some(v) = e.installs() {
                written.entry(e.txn).or_default().insert(v.obj);
            }
        }
        let mut order: BTreeMap<String, Vec<TxnId>> = BTreeMap::new();
        for e in &h.events {
            if e.kind == EventKind::Commit {
                for obj in written.get(&e.txn).into_iter().flatten() {
                    order.entry(obj.clone()).or_default().push(e.txn);
                }
            }
        }
        h.version_order = order;
        h
    }
}
