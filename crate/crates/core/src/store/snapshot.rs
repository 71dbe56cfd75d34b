//! Whole-store snapshot as a single JSON document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::change::{Action, Change, ChangeSet, Row};
use super::hlc::Hlc;
use super::rowid::RowId;
use super::table::{TableKind, VersionedTable};
use super::{Store, StoreError, VersionId};
use crate::types::{Column, Schema, Value};

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub tables: Vec<TableDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableDoc {
    pub id: u64,
    pub name: String,
    pub kind: TableKind,
    pub schema: Vec<Column>,
    pub versions: Vec<VersionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VersionDoc {
    pub version_id: VersionId,
    pub commit_ts: (i64, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_ts: Option<i64>,
    /// Further refresh timestamps that found no changes and reuse this version.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refresh_ts_aliases: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Vec<Column>>,
    pub delta: Vec<ChangeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChangeDoc {
    pub action: Action,
    pub row_id: RowId,
    pub values: Vec<Json>,
}

impl Store {
    pub fn to_snapshot(&self) -> SnapshotDoc {
        let tables = self
            .tables
            .values()
            .map(|t| {
                let mut by_version: BTreeMap<VersionId, Vec<i64>> = BTreeMap::new();
                for (ts, v) in t.refresh_ts_map() {
                    by_version.entry(*v).or_default().push(*ts);
                }
                let first_schema = &t.versions()[0].schema;
                let mut prev_schema = first_schema.clone();
                let versions = t
                    .versions()
                    .iter()
                    .map(|v| {
                        let mut stamps = by_version.remove(&v.version_id).unwrap_or_default().into_iter();
                        let schema = (v.schema != prev_schema).then(|| v.schema.columns.clone());
                        prev_schema = v.schema.clone();
                        VersionDoc {
                            version_id: v.version_id,
                            commit_ts: (v.commit_ts.physical, v.commit_ts.logical),
                            refresh_ts: stamps.next(),
                            refresh_ts_aliases: stamps.collect(),
                            schema,
                            delta: v
                                .delta
                                .changes
                                .iter()
                                .map(|c| ChangeDoc {
                                    action: c.action,
                                    row_id: c.row.row_id,
                                    values: c.row.values.iter().map(Value::to_json).collect(),
                                })
                                .collect(),
                        }
                    })
                    .collect();
                TableDoc { id: t.id, name: t.name.clone(), kind: t.kind, schema: first_schema.columns.clone(), versions }
            })
            .collect();
        SnapshotDoc { tables }
    }

    pub fn from_snapshot(doc: &SnapshotDoc) -> Result<Store, StoreError> {
        let mut store = Store::new();
        for t in &doc.tables {
            let mut schema = Schema::new(t.schema.clone());
            let mut versions = Vec::new();
            let mut map = BTreeMap::new();
            for v in &t.versions {
                if let Some(cols) = &v.schema {
                    schema = Schema::new(cols.clone());
                }
                let mut changes = Vec::new();
                for c in &v.delta {
                    if c.values.len() != schema.arity() {
                        return Err(StoreError::Snapshot(format!("arity mismatch in {} v{}", t.name, v.version_id)));
                    }
                    let values = c
                        .values
                        .iter()
                        .zip(&schema.columns)
                        .map(|(j, col)| {
                            Value::from_json(j, col.ty)
                                .ok_or_else(|| StoreError::Snapshot(format!("bad value {j} for column {}", col.name)))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    changes.push(Change { action: c.action, row: Row::new(c.row_id, values) });
                }
                for ts in v.refresh_ts.iter().chain(&v.refresh_ts_aliases) {
                    map.insert(*ts, v.version_id);
                }
                versions.push((
                    v.version_id,
                    Hlc::new(v.commit_ts.0, v.commit_ts.1),
                    schema.clone(),
                    ChangeSet::from_changes(changes),
                ));
            }
            let table = VersionedTable::restore(t.id, t.name.clone(), t.kind, versions, map)?;
            store.insert_table(table);
        }
        Ok(store)
    }

    pub fn save_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn load_json(text: &str) -> Result<Store, StoreError> {
        let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| StoreError::Snapshot(e.to_string()))?;
        Store::from_snapshot(&doc)
    }
}
