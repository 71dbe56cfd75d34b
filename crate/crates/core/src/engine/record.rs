use std::collections::BTreeMap;

use crate::iso::{Event, History, TxnId, VersionRef};
use crate::store::{TableId, VersionId};

/// How refreshes appear in a recorded history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    /// Each refresh is a transaction holding one derivation.
    Dvs,
    /// Each refresh reads its sources and writes the dynamic table.
    Persisted,
}

impl RecordMode {
    pub fn parse(s: &str) -> Option<RecordMode> {
        match s.to_ascii_lowercase().as_str() {
            "dvs" => Some(RecordMode::Dvs),
            "persisted" => Some(RecordMode::Persisted),
            _ => None,
        }
    }
}

/// Collects engine transactions as history events. Every base table's
/// initial version belongs to transaction 0; a dynamic table has no
/// version until its first refresh.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    mode: Option<RecordMode>,
    events: Vec<Event>,
    next_txn: TxnId,
    installers: BTreeMap<(TableId, VersionId), TxnId>,
    names: BTreeMap<TableId, String>,
    base: Vec<TableId>,
}

impl Recorder {
    pub fn new(mode: Option<RecordMode>) -> Self {
        Recorder { mode, next_txn: 1, ..Default::default() }
    }

    pub fn mode(&self) -> Option<RecordMode> {
        self.mode
    }

    pub fn enabled(&self) -> bool {
        self.mode.is_some()
    }

    pub fn table_created(&mut self, id: TableId, name: &str, base: bool) {
        let name = if self.names.values().any(|n| n == name) { format!("{name}#{id}") } else { name.to_string() };
        self.names.insert(id, name);
        if base {
            self.base.push(id);
            self.installers.insert((id, 0), 0);
        }
    }

    fn name(&self, id: TableId) -> String {
        self.names.get(&id).cloned().unwrap_or_else(|| format!("t{id}"))
    }

    fn input(&self, (t, v): (TableId, VersionId)) -> VersionRef {
        VersionRef::new(self.name(t), self.installers.get(&(t, v)).copied().unwrap_or(0))
    }

    fn begin(&mut self) -> TxnId {
        let t = self.next_txn;
        self.next_txn += 1;
        t
    }

    /// A user transaction that read `reads` and installed `writes`.
    pub fn user_txn(&mut self, reads: &[(TableId, VersionId)], writes: &[(TableId, VersionId)]) {
        if !self.enabled() || (reads.is_empty() && writes.is_empty()) {
            return;
        }
        let t = self.begin();
        for r in reads {
            let v = self.input(*r);
            self.events.push(Event::read(t, &v.obj, v.version));
        }
        for w in writes {
            self.events.push(Event::write(t, &self.name(w.0)));
            self.installers.insert(*w, t);
        }
        self.events.push(Event::commit(t));
    }

    /// A refresh that produced `output` from exactly `inputs`.
    pub fn refresh_txn(&mut self, inputs: &[(TableId, VersionId)], output: (TableId, VersionId)) {
        let Some(mode) = self.mode else { return };
        let t = self.begin();
        let name = self.name(output.0);
        match mode {
            RecordMode::Dvs => {
                let ins = inputs.iter().map(|i| self.input(*i)).collect();
                self.events.push(Event::derive(t, &name, ins));
            }
            RecordMode::Persisted => {
                for i in inputs {
                    let v = self.input(*i);
                    self.events.push(Event::read(t, &v.obj, v.version));
                }
                self.events.push(Event::write(t, &name));
            }
        }
        self.installers.insert(output, t);
        self.events.push(Event::commit(t));
    }

    pub fn history(&self) -> History {
        let mut events: Vec<Event> = self.base.iter().map(|id| Event::write(0, &self.name(*id))).collect();
        events.push(Event::commit(0));
        events.extend(self.events.iter().cloned());
        History::with_commit_order(events)
    }
}
