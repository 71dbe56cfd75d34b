use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::rowid::RowId;
use super::StoreError;
use crate::types::Value;

/// Row contents keyed by row id; the physical form of one table version.
pub type RowMap = BTreeMap<RowId, Vec<Value>>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Row {
    pub row_id: RowId,
    pub values: Vec<Value>,
}

impl Row {
    pub fn new(row_id: RowId, values: Vec<Value>) -> Self {
        Row { row_id, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Delete,
    Insert,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Insert => "INSERT",
            Action::Delete => "DELETE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Change {
    pub action: Action,
    pub row: Row,
}

/// A multiset of row changes. Updates appear as a DELETE and an INSERT of the
/// same row id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub changes: Vec<Change>,
}

impl ChangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_changes(mut changes: Vec<Change>) -> Self {
        changes.sort();
        ChangeSet { changes }
    }

    pub fn push(&mut self, action: Action, row: Row) {
        self.changes.push(Change { action, row });
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn inserts(&self) -> impl Iterator<Item = &Row> {
        self.changes.iter().filter(|c| c.action == Action::Insert).map(|c| &c.row)
    }

    pub fn deletes(&self) -> impl Iterator<Item = &Row> {
        self.changes.iter().filter(|c| c.action == Action::Delete).map(|c| &c.row)
    }

    pub fn insert_count(&self) -> usize {
        self.inserts().count()
    }

    pub fn delete_count(&self) -> usize {
        self.deletes().count()
    }

    pub fn is_insert_only(&self) -> bool {
        self.changes.iter().all(|c| c.action == Action::Insert)
    }

    /// Canonical order: deletes before inserts, each by row id.
    pub fn sort(&mut self) {
        self.changes.sort();
    }

    /// Checks the consolidation invariant: at most one change per
    /// (row id, action).
    pub fn is_consolidated(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.changes.iter().all(|c| seen.insert((c.row.row_id, c.action)))
    }

    /// Applies deletes, then inserts. A delete must name a present row with
    /// identical contents; an insert must not collide with a present row.
    pub fn apply_to(&self, table: &str, rows: &mut RowMap) -> Result<(), StoreError> {
        for row in self.deletes() {
            match rows.get(&row.row_id) {
                Some(v) if *v == row.values => {
                    rows.remove(&row.row_id);
                }
                Some(_) => {
                    return Err(StoreError::DeleteMissingRow {
                        table: table.to_string(),
                        row_id: row.row_id,
                        detail: "stored contents differ".into(),
                    })
                }
                None => {
                    return Err(StoreError::DeleteMissingRow {
                        table: table.to_string(),
                        row_id: row.row_id,
                        detail: "row id absent".into(),
                    })
                }
            }
        }
        for row in self.inserts() {
            if rows.insert(row.row_id, row.values.clone()).is_some() {
                return Err(StoreError::DuplicateRowId { table: table.to_string(), row_id: row.row_id });
            }
        }
        Ok(())
    }

    /// Net changes turning `old` into `new`; unchanged rows are omitted.
    pub fn diff(old: &RowMap, new: &RowMap) -> ChangeSet {
        let mut out = ChangeSet::new();
        for (id, vals) in old {
            match new.get(id) {
                Some(nv) if nv == vals => {}
                _ => out.push(Action::Delete, Row::new(*id, vals.clone())),
            }
        }
        for (id, vals) in new {
            match old.get(id) {
                Some(ov) if ov == vals => {}
                _ => out.push(Action::Insert, Row::new(*id, vals.clone())),
            }
        }
        out.sort();
        out
    }
}

/// Folds a sequence of per-version deltas into their net effect.
#[derive(Debug, Default)]
pub(crate) struct NetChanges {
    // row id -> (contents before the first change, contents after the last)
    entries: BTreeMap<RowId, (Option<Vec<Value>>, Option<Vec<Value>>)>,
}

impl NetChanges {
    pub(crate) fn add(&mut self, delta: &ChangeSet) {
        for row in delta.deletes() {
            self.entries
                .entry(row.row_id)
                .and_modify(|e| e.1 = None)
                .or_insert_with(|| (Some(row.values.clone()), None));
        }
        for row in delta.inserts() {
            self.entries
                .entry(row.row_id)
                .and_modify(|e| e.1 = Some(row.values.clone()))
                .or_insert_with(|| (None, Some(row.values.clone())));
        }
    }

    pub(crate) fn finish(self) -> ChangeSet {
        let mut out = ChangeSet::new();
        for (id, (before, after)) in self.entries {
            if before == after {
                continue;
            }
            if let Some(v) = before {
                out.push(Action::Delete, Row::new(id, v));
            }
            if let Some(v) = after {
                out.push(Action::Insert, Row::new(id, v));
            }
        }
        out.sort();
        out
    }
}
