use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::change::{ChangeSet, NetChanges, Row, RowMap};
use super::hlc::Hlc;
use super::rowid::RowId;
use super::{StoreError, TableId, VersionId};
use crate::types::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Base,
    Dynamic,
}

#[derive(Debug, Clone)]
pub struct TableVersion {
    pub version_id: VersionId,
    pub commit_ts: Hlc,
    pub schema: Arc<Schema>,
    pub delta: ChangeSet,
    rows: Arc<RowMap>,
}

impl TableVersion {
    pub fn rows(&self) -> &Arc<RowMap> {
        &self.rows
    }
}

/// A multi-versioned table. Version 0 is the empty table at creation.
#[derive(Debug, Clone)]
pub struct VersionedTable {
    pub id: TableId,
    pub name: String,
    pub kind: TableKind,
    versions: Vec<TableVersion>,
    refresh_ts_map: BTreeMap<i64, VersionId>,
    next_row: u64,
}

impl VersionedTable {
    pub fn new(id: TableId, name: impl Into<String>, kind: TableKind, schema: Schema, created: Hlc) -> Self {
        let v0 = TableVersion {
            version_id: 0,
            commit_ts: created,
            schema: Arc::new(schema),
            delta: ChangeSet::new(),
            rows: Arc::new(RowMap::new()),
        };
        VersionedTable {
            id,
            name: name.into(),
            kind,
            versions: vec![v0],
            refresh_ts_map: BTreeMap::new(),
            next_row: 1,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.latest().schema
    }

    pub fn latest(&self) -> &TableVersion {
        self.versions.last().expect("table has version 0")
    }

    pub fn latest_version(&self) -> VersionId {
        self.latest().version_id
    }

    pub fn versions(&self) -> &[TableVersion] {
        &self.versions
    }

    pub fn version(&self, v: VersionId) -> Result<&TableVersion, StoreError> {
        self.versions
            .get(v as usize)
            .ok_or_else(|| StoreError::UnknownVersion { table: self.name.clone(), version: v })
    }

    pub fn refresh_ts_map(&self) -> &BTreeMap<i64, VersionId> {
        &self.refresh_ts_map
    }

    /// Allocates a fresh base-table row id.
    pub fn next_row_id(&mut self) -> RowId {
        let id = RowId::table(self.id, self.next_row);
        self.next_row += 1;
        id
    }

    pub(crate) fn set_next_row(&mut self, next: u64) {
        self.next_row = self.next_row.max(next);
    }

    /// Appends a new version holding `changes`, optionally recording the
    /// refresh timestamp that produced it.
    pub fn commit(
        &mut self,
        changes: ChangeSet,
        commit_ts: Hlc,
        refresh_ts: Option<i64>,
    ) -> Result<VersionId, StoreError> {
        self.commit_with_schema(None, changes, commit_ts, refresh_ts)
    }

    pub fn commit_with_schema(
        &mut self,
        schema: Option<Schema>,
        mut changes: ChangeSet,
        commit_ts: Hlc,
        refresh_ts: Option<i64>,
    ) -> Result<VersionId, StoreError> {
        let latest = self.latest();
        if commit_ts <= latest.commit_ts {
            return Err(StoreError::StaleCommit {
                table: self.name.clone(),
                commit_ts,
                latest: latest.commit_ts,
            });
        }
        if let Some(ts) = refresh_ts {
            self.check_refresh_ts(ts)?;
        }
        let schema = match schema {
            Some(s) if s != *latest.schema => Arc::new(s),
            _ => latest.schema.clone(),
        };
        for c in &changes.changes {
            if c.action == super::Action::Insert && c.row.values.len() != schema.arity() {
                return Err(StoreError::ArityMismatch {
                    table: self.name.clone(),
                    expected: schema.arity(),
                    found: c.row.values.len(),
                });
            }
        }
        let mut rows = (*latest.rows).clone();
        changes.apply_to(&self.name, &mut rows)?;
        changes.sort();
        let version_id = self.versions.len() as VersionId;
        self.versions.push(TableVersion { version_id, commit_ts, schema, delta: changes, rows: Arc::new(rows) });
        if let Some(ts) = refresh_ts {
            self.refresh_ts_map.insert(ts, version_id);
        }
        Ok(version_id)
    }

    fn check_refresh_ts(&self, ts: i64) -> Result<(), StoreError> {
        if let Some((&last, _)) = self.refresh_ts_map.last_key_value() {
            if ts <= last {
                return Err(StoreError::StaleRefreshTimestamp { table: self.name.clone(), refresh_ts: ts, last });
            }
        }
        Ok(())
    }

    /// Records that the current latest version also represents `refresh_ts`
    /// (a refresh that found nothing to do).
    pub fn map_refresh_ts(&mut self, refresh_ts: i64) -> Result<VersionId, StoreError> {
        self.check_refresh_ts(refresh_ts)?;
        let v = self.latest_version();
        self.refresh_ts_map.insert(refresh_ts, v);
        Ok(v)
    }

    /// Points an existing refresh timestamp at another version. Only the
    /// corruption test hook uses this; it breaks the DVS invariant on purpose.
    pub(crate) fn remap_refresh_ts(&mut self, refresh_ts: i64, v: VersionId) {
        self.refresh_ts_map.insert(refresh_ts, v);
    }

    /// The version with the greatest commit timestamp at or before data
    /// timestamp `t`.
    pub fn resolve_version_at(&self, t: i64) -> Result<VersionId, StoreError> {
        self.resolve_version_at_hlc(Hlc::end_of_second(t))
            .ok_or(StoreError::NoVersionVisible { table: self.name.clone(), at: t })
    }

    pub fn resolve_version_at_hlc(&self, bound: Hlc) -> Option<VersionId> {
        let idx = self.versions.partition_point(|v| v.commit_ts <= bound);
        idx.checked_sub(1).map(|i| self.versions[i].version_id)
    }

    /// The version produced by the refresh at exactly `refresh_ts`.
    pub fn resolve_refresh_ts(&self, refresh_ts: i64) -> Result<VersionId, StoreError> {
        self.refresh_ts_map
            .get(&refresh_ts)
            .copied()
            .ok_or(StoreError::ExactVersionMissing { table: self.name.clone(), refresh_ts })
    }

    /// Latest refresh timestamp at or before `t`, with its version.
    pub fn refresh_ts_at_or_before(&self, t: i64) -> Option<(i64, VersionId)> {
        self.refresh_ts_map.range(..=t).next_back().map(|(k, v)| (*k, *v))
    }

    pub fn scan_at(&self, v: VersionId) -> Result<Vec<Row>, StoreError> {
        let version = self.version(v)?;
        Ok(version.rows.iter().map(|(id, vals)| Row::new(*id, vals.clone())).collect())
    }

    pub fn rows_at(&self, v: VersionId) -> Result<&Arc<RowMap>, StoreError> {
        Ok(&self.version(v)?.rows)
    }

    /// Net changes between two versions; deltas of intermediate versions are
    /// consolidated.
    pub fn changes_between(&self, v0: VersionId, v1: VersionId) -> Result<ChangeSet, StoreError> {
        self.version(v0)?;
        self.version(v1)?;
        if v0 > v1 {
            return Err(StoreError::UnknownVersion { table: self.name.clone(), version: v0 });
        }
        let mut net = NetChanges::default();
        for v in (v0 + 1)..=v1 {
            net.add(&self.versions[v as usize].delta);
        }
        Ok(net.finish())
    }

    pub(crate) fn restore(
        id: TableId,
        name: String,
        kind: TableKind,
        versions: Vec<(VersionId, Hlc, Schema, ChangeSet)>,
        refresh_ts_map: BTreeMap<i64, VersionId>,
    ) -> Result<Self, StoreError> {
        let mut iter = versions.into_iter();
        let (_, ts0, schema0, delta0) = iter.next().ok_or_else(|| StoreError::Snapshot("table without versions".into()))?;
        let mut table = VersionedTable::new(id, name, kind, schema0, ts0);
        if !delta0.is_empty() {
            return Err(StoreError::Snapshot("version 0 must be empty".into()));
        }
        for (vid, ts, schema, delta) in iter {
            let got = table.commit_with_schema(Some(schema), delta, ts, None)?;
            if got != vid {
                return Err(StoreError::Snapshot(format!("version ids out of order at {vid}")));
            }
        }
        let max_counter = table
            .versions
            .iter()
            .flat_map(|v| v.delta.changes.iter())
            .filter(|c| c.row.row_id.kind() == 't' && c.row.row_id.node() == id)
            .map(|c| c.row.row_id.payload() as u64)
            .max()
            .unwrap_or(0);
        table.set_next_row(max_counter + 1);
        table.refresh_ts_map = refresh_ts_map;
        Ok(table)
    }
}
