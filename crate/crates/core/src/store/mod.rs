//! Multi-versioned in-memory table storage.
//!
//! Every commit appends a [`TableVersion`] holding the full row map and the
//! delta from the previous version. Versions are ordered by an HLC commit
//! timestamp; dynamic tables additionally keep a map from refresh timestamp
//! to the version that refresh produced, which is how downstream refreshes
//! find the exact upstream state for their own data timestamp.

mod change;
mod hlc;
mod lock;
mod rowid;
mod snapshot;
mod table;

use std::collections::BTreeMap;

pub use change::{Action, Change, ChangeSet, Row, RowMap};
pub use hlc::{Hlc, HlcClock, MICROS_PER_SECOND};
pub use lock::{LockOwner, LockTable};
pub use rowid::{RowId, RowIdParseError};
pub use snapshot::{ChangeDoc, SnapshotDoc, TableDoc, VersionDoc};
pub use table::{TableKind, TableVersion, VersionedTable};

use crate::types::Schema;

pub type TableId = u64;
pub type VersionId = u64;

#[derive(Debug, Clone, thiserror::Error)]
pub enum StoreError {
    #[error("unknown table id {0}")]
    UnknownTable(TableId),
    #[error("table {table} has no version {version}")]
    UnknownVersion { table: String, version: VersionId },
    #[error("commit timestamp {commit_ts} of {table} is not after latest {latest}")]
    StaleCommit { table: String, commit_ts: Hlc, latest: Hlc },
    #[error("refresh timestamp {refresh_ts} of {table} is not after {last}")]
    StaleRefreshTimestamp { table: String, refresh_ts: i64, last: i64 },
    #[error("delete of missing row {row_id} in {table} ({detail})")]
    DeleteMissingRow { table: String, row_id: RowId, detail: String },
    #[error("insert of existing row {row_id} in {table}")]
    DuplicateRowId { table: String, row_id: RowId },
    #[error("no version of {table} visible at {at}")]
    NoVersionVisible { table: String, at: i64 },
    #[error("{table} has no version for refresh timestamp {refresh_ts}")]
    ExactVersionMissing { table: String, refresh_ts: i64 },
    #[error("{table}: expected {expected} values, found {found}")]
    ArityMismatch { table: String, expected: usize, found: usize },
    #[error("table {table} is locked by {holder}")]
    WouldBlock { table: TableId, holder: LockOwner },
    #[error("owner {owner} cannot unlock table {table} (holder {holder:?})")]
    LockProtocolViolation { table: TableId, owner: LockOwner, holder: Option<LockOwner> },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

impl StoreError {
    /// Errors that indicate an engine bug rather than a user mistake.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            StoreError::DeleteMissingRow { .. }
                | StoreError::DuplicateRowId { .. }
                | StoreError::ExactVersionMissing { .. }
                | StoreError::StaleCommit { .. }
                | StoreError::StaleRefreshTimestamp { .. }
        )
    }
}

#[derive(Debug, Default)]
pub struct Store {
    tables: BTreeMap<TableId, VersionedTable>,
    locks: LockTable,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_table(
        &mut self,
        id: TableId,
        name: &str,
        kind: TableKind,
        schema: Schema,
        created: Hlc,
    ) -> &mut VersionedTable {
        self.tables.entry(id).or_insert_with(|| VersionedTable::new(id, name, kind, schema, created))
    }

    pub(crate) fn insert_table(&mut self, table: VersionedTable) {
        self.tables.insert(table.id, table);
    }

    pub(crate) fn remove_table(&mut self, id: TableId) {
        self.tables.remove(&id);
    }

    pub fn table(&self, id: TableId) -> Result<&VersionedTable, StoreError> {
        self.tables.get(&id).ok_or(StoreError::UnknownTable(id))
    }

    pub fn table_mut(&mut self, id: TableId) -> Result<&mut VersionedTable, StoreError> {
        self.tables.get_mut(&id).ok_or(StoreError::UnknownTable(id))
    }

    pub fn tables(&self) -> impl Iterator<Item = &VersionedTable> {
        self.tables.values()
    }

    pub fn locks(&self) -> &LockTable {
        &self.locks
    }

    pub fn commit_dml(
        &mut self,
        id: TableId,
        changes: ChangeSet,
        commit_ts: Hlc,
        refresh_ts: Option<i64>,
    ) -> Result<VersionId, StoreError> {
        self.table_mut(id)?.commit(changes, commit_ts, refresh_ts)
    }

    pub fn resolve_version_at(&self, id: TableId, t: i64) -> Result<VersionId, StoreError> {
        self.table(id)?.resolve_version_at(t)
    }

    pub fn resolve_dt_version_for_refresh_ts(&self, id: TableId, refresh_ts: i64) -> Result<VersionId, StoreError> {
        self.table(id)?.resolve_refresh_ts(refresh_ts)
    }

    pub fn changes_between(&self, id: TableId, v0: VersionId, v1: VersionId) -> Result<ChangeSet, StoreError> {
        self.table(id)?.changes_between(v0, v1)
    }

    pub fn scan_at(&self, id: TableId, v: VersionId) -> Result<Vec<Row>, StoreError> {
        self.table(id)?.scan_at(v)
    }
}
