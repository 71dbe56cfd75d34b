//! Refresh execution for dynamic tables.
//!
//! A refresh at data timestamp `T` reads every base table at the version
//! visible at `T` and every upstream dynamic table at the version its own
//! refresh at exactly `T` produced, then commits the new contents together
//! with the `T` mapping. A failed refresh leaves contents and frontier as
//! they were.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::algebra::{Evaluator, NodeId, Plan, PlanKind, VersionBinding};
use crate::differ::{self, DeltaPlan, Interval, Signed};
use crate::engine::{Engine, EngineError};
use crate::sqlfront::ast::{FaultKind, InitializeSpec, ObjectKind, Query, TargetLag};
use crate::sqlfront::{bind_query, BindOptions, Bound, Catalog, DependencySet, ObjectInfo};
use crate::store::{Action, ChangeSet, Hlc, Row, RowId, TableId, VersionId, MICROS_PER_SECOND};
use crate::types::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RefreshMode {
    Full,
    Incremental,
}

impl fmt::Display for RefreshMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefreshMode::Full => "FULL",
            RefreshMode::Incremental => "INCREMENTAL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DtState {
    Uninitialized,
    Active,
    Suspended,
}

impl fmt::Display for DtState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DtState::Uninitialized => "UNINITIALIZED",
            DtState::Active => "ACTIVE",
            DtState::Suspended => "SUSPENDED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RefreshAction {
    NoData,
    Full,
    Incremental,
    Reinitialize,
}

impl fmt::Display for RefreshAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefreshAction::NoData => "NO_DATA",
            RefreshAction::Full => "FULL",
            RefreshAction::Incremental => "INCREMENTAL",
            RefreshAction::Reinitialize => "REINITIALIZE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RefreshKind {
    Scheduled,
    Manual,
    Initialization,
}

/// Source versions consumed by the last committed refresh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frontier {
    pub as_of: i64,
    pub versions: BTreeMap<TableId, VersionId>,
}

#[derive(Debug, Clone)]
pub struct DynamicTable {
    /// Also the id of the backing table.
    pub id: TableId,
    pub name: String,
    pub query: Query,
    pub plan: Plan,
    pub deps: DependencySet,
    pub target_lag: TargetLag,
    pub refresh_mode: RefreshMode,
    pub initialize: InitializeSpec,
    pub state: DtState,
    pub frontier: Option<Frontier>,
    pub error_count: u32,
    pub created_at: i64,
    /// Scripted refresh duration for the scheduler cost model.
    pub simulated_duration: Option<i64>,
    /// Armed test hooks, consumed by the next refresh.
    pub faults: Vec<FaultKind>,
    delta: Option<DeltaPlan>,
}

impl DynamicTable {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: TableId,
        name: String,
        query: Query,
        bound: Bound,
        target_lag: TargetLag,
        refresh_mode: RefreshMode,
        initialize: InitializeSpec,
        created_at: i64,
    ) -> Self {
        DynamicTable {
            id,
            name,
            query,
            plan: bound.plan,
            deps: bound.deps,
            target_lag,
            refresh_mode,
            initialize,
            state: DtState::Uninitialized,
            frontier: None,
            error_count: 0,
            created_at,
            simulated_duration: None,
            faults: Vec::new(),
            delta: None,
        }
    }

    pub fn data_timestamp(&self) -> Option<i64> {
        self.frontier.as_ref().map(|f| f.as_of)
    }

    pub fn upstream_dts(&self) -> Vec<TableId> {
        self.deps.dynamic_tables().collect()
    }

    fn delta_plan(&mut self) -> Result<DeltaPlan, differ::DiffError> {
        if self.delta.is_none() {
            self.delta = Some(differ::differentiate(&self.plan)?);
        }
        Ok(self.delta.clone().expect("delta plan cached"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefreshRecord {
    pub dt: String,
    pub refresh_ts: i64,
    pub kind: RefreshKind,
    pub action: Option<RefreshAction>,
    pub start: i64,
    pub end: i64,
    pub rows_inserted: u64,
    pub rows_deleted: u64,
    pub rows_scanned: u64,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The failure broke an engine invariant rather than a user constraint.
    #[serde(skip)]
    pub internal: bool,
}

impl RefreshRecord {
    pub fn succeeded(&self) -> bool {
        self.outcome == "SUCCEEDED"
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Isolation guaranteed to a read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Isolation {
    #[serde(rename = "PL-SI")]
    SnapshotIsolation,
    #[serde(rename = "PL-2")]
    ReadCommitted,
}

impl fmt::Display for Isolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Isolation::SnapshotIsolation => "PL-SI",
            Isolation::ReadCommitted => "PL-2",
        })
    }
}

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationEntry {
    pub dt: String,
    pub refresh_ts: i64,
    pub passed: bool,
}

struct Executed {
    action: RefreshAction,
    inserted: u64,
    deleted: u64,
    scanned: u64,
}

/// Catalog view that presents dynamic tables as views over their
/// definitions, so binding expands everything down to base tables.
struct Expanding<'e>(&'e Engine);

impl Catalog for Expanding<'_> {
    fn lookup(&self, name: &str) -> Option<ObjectInfo> {
        let mut info = self.0.lookup(name)?;
        if info.kind == ObjectKind::DynamicTable {
            let dt = self.0.dts.get(&info.id)?;
            info.kind = ObjectKind::View;
            info.view_query = Some(dt.query.clone());
        }
        Some(info)
    }

    fn upstream_dts(&self, _: u64) -> Vec<u64> {
        Vec::new()
    }

    fn object_name(&self, id: u64) -> Option<String> {
        self.0.object_name(id)
    }
}

fn signed_of(cs: &ChangeSet) -> Signed {
    cs.changes.iter().map(|c| (c.row.clone(), if c.action == Action::Insert { 1 } else { -1 })).collect()
}

/// Converts without summing or checking, for the consolidation-off hook.
fn raw_changes(delta: Signed) -> ChangeSet {
    let mut cs = ChangeSet::new();
    for (r, w) in delta {
        let action = if w > 0 { Action::Insert } else { Action::Delete };
        for _ in 0..w.unsigned_abs() {
            cs.push(action, r.clone());
        }
    }
    cs
}

fn corrupt_value(v: &Value) -> Value {
    match v {
        Value::Int64(i) => Value::Int64(i.wrapping_add(1)),
        Value::Float64(f) => Value::Float64(f + 1.0),
        Value::Text(s) => Value::Text(format!("{s}~")),
        Value::Bool(b) => Value::Bool(!b),
        Value::Timestamp(t) => Value::Timestamp(t + 1),
        Value::Null => Value::Int64(0),
    }
}

impl Engine {
    pub(crate) const REFRESH_LOCK_BASE: u64 = 1 << 40;

    /// Rebinds a dynamic table's definition against the current catalog.
    fn rebind(&self, dt: &DynamicTable) -> Result<Bound, EngineError> {
        bind_query(&dt.query, self, BindOptions { allow_at: false, defining: Some(dt.name.clone()) })
            .map_err(|source| EngineError::UnboundableDefinition { dt: dt.name.clone(), source })
    }

    /// Source versions a refresh at `ts` reads.
    fn bind_sources(&self, deps: &DependencySet, ts: i64) -> Result<BTreeMap<TableId, VersionId>, EngineError> {
        let mut out = BTreeMap::new();
        for (id, e) in &deps.entries {
            let v = match e.kind {
                ObjectKind::Table => self.store.resolve_version_at(*id, ts)?,
                ObjectKind::DynamicTable => self.store.resolve_dt_version_for_refresh_ts(*id, ts)?,
                ObjectKind::View => continue,
            };
            out.insert(*id, v);
        }
        Ok(out)
    }

    /// Action for a refresh at `ts`; the definition is checked for
    /// evolution before the sources are compared with the frontier.
    pub fn choose_action(&self, id: TableId, ts: i64) -> Result<RefreshAction, EngineError> {
        let dt = self.dt(id)?;
        let bound = self.rebind(dt)?;
        let versions = self.bind_sources(&bound.deps, ts)?;
        Ok(Self::action_for(dt, &bound, &versions))
    }

    fn action_for(dt: &DynamicTable, bound: &Bound, versions: &BTreeMap<TableId, VersionId>) -> RefreshAction {
        let Some(frontier) = &dt.frontier else { return RefreshAction::Full };
        let evolved = bound.deps.fingerprint != dt.deps.fingerprint;
        if evolved {
            return match dt.refresh_mode {
                RefreshMode::Full => RefreshAction::Full,
                RefreshMode::Incremental => RefreshAction::Reinitialize,
            };
        }
        if *versions == frontier.versions {
            return RefreshAction::NoData;
        }
        match dt.refresh_mode {
            RefreshMode::Full => RefreshAction::Full,
            RefreshMode::Incremental => RefreshAction::Incremental,
        }
    }

    /// True iff rebinding the definition gives a different plan.
    pub fn detect_query_evolution(&self, id: TableId) -> Result<bool, EngineError> {
        let dt = self.dt(id)?;
        Ok(self.rebind(dt)?.deps.fingerprint != dt.deps.fingerprint)
    }

    /// Runs one refresh starting at virtual second `start` and appends its
    /// record to the log. The refresh commits at `start`; callers with a
    /// duration model adjust `end` afterwards.
    pub fn execute_refresh(
        &mut self,
        id: TableId,
        ts: i64,
        kind: RefreshKind,
        start: i64,
    ) -> Result<RefreshRecord, EngineError> {
        let owner = Self::REFRESH_LOCK_BASE + id;
        self.store.locks().try_lock(id, owner)?;
        let result = self.refresh_locked(id, ts, kind, start);
        self.store.locks().unlock(id, owner)?;
        let name = self.dt(id)?.name.clone();
        let mut record = RefreshRecord {
            dt: name,
            refresh_ts: ts,
            kind,
            action: None,
            start,
            end: start,
            rows_inserted: 0,
            rows_deleted: 0,
            rows_scanned: 0,
            outcome: "SUCCEEDED".into(),
            error: None,
            internal: false,
        };
        match result {
            Ok(x) => {
                record.action = Some(x.action);
                record.rows_inserted = x.inserted;
                record.rows_deleted = x.deleted;
                record.rows_scanned = x.scanned;
                self.refresh_log.push(record.clone());
                Ok(record)
            }
            Err(e) => {
                record.outcome = "FAILED".into();
                record.error = Some(e.to_string());
                record.internal = e.is_internal();
                self.refresh_log.push(record);
                if e.is_user_error() {
                    self.handle_refresh_error(id);
                }
                Err(EngineError::Refresh { dt: self.dt(id)?.name.clone(), refresh_ts: ts, source: Box::new(e) })
            }
        }
    }

    /// Counts a user error; the table suspends once the count reaches the
    /// threshold.
    pub fn handle_refresh_error(&mut self, id: TableId) {
        let threshold = self.config.suspend_threshold;
        if let Some(dt) = self.dts.get_mut(&id) {
            dt.error_count += 1;
            if dt.error_count >= threshold && dt.state == DtState::Active {
                dt.state = DtState::Suspended;
            }
        }
    }

    fn refresh_locked(&mut self, id: TableId, ts: i64, kind: RefreshKind, exec_time: i64) -> Result<Executed, EngineError> {
        let dt = self.dt(id)?;
        match dt.state {
            DtState::Suspended => return Err(EngineError::Suspended(dt.name.clone())),
            DtState::Uninitialized if kind != RefreshKind::Initialization => {
                return Err(EngineError::UninitializedDt(dt.name.clone()))
            }
            _ => {}
        }
        if let Some(f) = &dt.frontier {
            if ts <= f.as_of {
                return Err(crate::store::StoreError::StaleRefreshTimestamp { table: dt.name.clone(), refresh_ts: ts, last: f.as_of }.into());
            }
        }
        let bound = self.rebind(dt)?;
        let versions = self.bind_sources(&bound.deps, ts)?;
        let action = Self::action_for(dt, &bound, &versions);
        let faults = dt.faults.clone();
        let evolved = bound.deps.fingerprint != dt.deps.fingerprint;

        if evolved {
            let dt = self.dts.get_mut(&id).expect("dt exists");
            dt.plan = bound.plan.clone();
            dt.deps = bound.deps.clone();
            dt.delta = None;
        }
        let mut binding = VersionBinding::new();
        for (t, v) in &versions {
            binding.bind(*t, *v);
        }
        if action == RefreshAction::NoData {
            self.store.table_mut(id)?.map_refresh_ts(ts)?;
            self.finish_refresh(id, ts, versions, None);
            return Ok(Executed { action, inserted: 0, deleted: 0, scanned: 0 });
        }

        let mut action = action;
        let (cs, scanned, schema) = {
            let dt = self.dts.get_mut(&id).expect("dt exists");
            let dp = if action == RefreshAction::Incremental {
                match dt.delta_plan() {
                    Ok(dp) => Some(dp),
                    Err(differ::DiffError::NotDifferentiable { .. }) => {
                        action = RefreshAction::Full;
                        None
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                None
            };
            let plan = dt.plan.clone();
            let frontier = dt.frontier.clone();
            let ev = Evaluator::new(&self.store);
            let current = self.store.table(id)?;
            let mut skip_consolidation = false;
            let delta: Signed = match (&dp, &frontier) {
                (Some(dp), Some(frontier)) => {
                    let mut before = VersionBinding::new();
                    for (t, v) in &frontier.versions {
                        before.bind(*t, *v);
                    }
                    let insert_only = self.insert_only_scans(&dp.plan, &frontier.versions, &versions)?;
                    let dp = differ::specialize_insert_only(dp.clone(), &insert_only);
                    skip_consolidation = differ::can_skip_consolidation(&dp.plan);
                    let interval = Interval { t0: frontier.as_of, t1: ts, before, after: binding.clone() };
                    differ::evaluate_delta(&ev, &dp, &interval)?
                }
                _ => {
                    let fresh = ev.evaluate(&plan, &binding)?.into_map();
                    signed_of(&ChangeSet::diff(current.latest().rows(), &fresh))
                }
            };
            let mut delta = delta;
            let mut faulted = false;
            for f in &faults {
                match f {
                    FaultKind::DuplicateDelta if !delta.is_empty() => {
                        let first = delta[0].clone();
                        delta.push(first);
                        faulted = true;
                    }
                    FaultKind::DeleteMissing => {
                        let ghost = RowId::digest(b'z', id, &ts.to_le_bytes());
                        delta.push((Row::new(ghost, vec![Value::Null; plan.schema.arity()]), -1));
                        faulted = true;
                    }
                    _ => {}
                }
            }
            if faulted {
                self.dts.get_mut(&id).expect("dt exists").faults.retain(|f| !matches!(f, FaultKind::DuplicateDelta | FaultKind::DeleteMissing));
            }
            let cs = if self.config.disable_consolidation {
                raw_changes(delta)
            } else if skip_consolidation && !faulted {
                differ::without_consolidation(delta)?
            } else {
                differ::consolidate(delta)?
            };
            let schema = (**current.schema() != plan.schema).then(|| plan.schema.clone());
            (cs, ev.stats().rows_scanned, schema)
        };
        let inserted = cs.insert_count() as u64;
        let deleted = cs.delete_count() as u64;
        let commit_ts = self.clock.tick(exec_time * MICROS_PER_SECOND, None);
        let version = self.store.table_mut(id)?.commit_with_schema(schema, cs, commit_ts, Some(ts))?;
        self.finish_refresh(id, ts, versions, Some(version));
        Ok(Executed { action, inserted, deleted, scanned })
    }

    /// Scan nodes whose table only gained rows between the two version maps.
    pub(crate) fn insert_only_scans(
        &self,
        plan: &Plan,
        before: &BTreeMap<TableId, VersionId>,
        after: &BTreeMap<TableId, VersionId>,
    ) -> Result<BTreeMap<NodeId, bool>, EngineError> {
        let mut scans = Vec::new();
        plan.walk(&mut |p| {
            if let PlanKind::Scan(s) = &p.kind {
                scans.push((p.id, s.table));
            }
        });
        let mut out = BTreeMap::new();
        for (node, table) in scans {
            let (Some(v0), Some(v1)) = (before.get(&table), after.get(&table)) else {
                out.insert(node, false);
                continue;
            };
            let t = self.store.table(table)?;
            let only = (*v0 + 1..=*v1).all(|v| t.versions()[v as usize].delta.delete_count() == 0);
            out.insert(node, only);
        }
        Ok(out)
    }

    fn finish_refresh(&mut self, id: TableId, ts: i64, versions: BTreeMap<TableId, VersionId>, produced: Option<VersionId>) {
        self.clock.fence(Hlc::start_of_second(ts + 1));
        if let Some(v) = produced {
            let inputs: Vec<(TableId, VersionId)> = versions.iter().map(|(t, v)| (*t, *v)).collect();
            self.recorder.refresh_txn(&inputs, (id, v));
        }
        let dt = self.dts.get_mut(&id).expect("dt exists");
        dt.frontier = Some(Frontier { as_of: ts, versions });
        dt.state = DtState::Active;
        dt.error_count = 0;
    }

    /// Upstream dynamic tables of `id`, transitively, upstream first.
    pub fn upstream_closure(&self, id: TableId) -> Vec<TableId> {
        fn visit(e: &Engine, id: TableId, seen: &mut BTreeSet<TableId>, out: &mut Vec<TableId>) {
            let Some(dt) = e.dts.get(&id) else { return };
            for u in dt.upstream_dts() {
                if seen.insert(u) {
                    visit(e, u, seen, out);
                    out.push(u);
                }
            }
        }
        let mut out = Vec::new();
        visit(self, id, &mut BTreeSet::new(), &mut out);
        out
    }

    /// Data timestamp for a refresh issued now: never before the current
    /// virtual second and always after every committed refresh.
    pub fn manual_refresh_ts(&self) -> i64 {
        self.now.max(self.clock.last().second())
    }

    /// Refreshes the upstream closure and then `id`, all at one timestamp.
    pub fn manual_refresh(&mut self, id: TableId) -> Result<RefreshRecord, EngineError> {
        let ts = self.manual_refresh_ts();
        let skip_upstream = self.dt(id)?.faults.contains(&FaultKind::SkipUpstream);
        if skip_upstream {
            self.dts.get_mut(&id).expect("dt exists").faults.retain(|f| *f != FaultKind::SkipUpstream);
        } else {
            self.refresh_closure(id, ts, RefreshKind::Manual)?;
        }
        let kind = if self.dt(id)?.state == DtState::Uninitialized { RefreshKind::Initialization } else { RefreshKind::Manual };
        let now = self.now;
        self.execute_refresh(id, ts, kind, now)
    }

    fn refresh_closure(&mut self, id: TableId, ts: i64, kind: RefreshKind) -> Result<(), EngineError> {
        let now = self.now;
        for u in self.upstream_closure(id) {
            let dt = self.dt(u)?;
            match dt.frontier.as_ref().map(|f| f.as_of) {
                Some(a) if a >= ts => continue,
                Some(_) => self.execute_refresh(u, ts, kind, now)?,
                None => self.execute_refresh(u, ts, RefreshKind::Initialization, now)?,
            };
        }
        Ok(())
    }

    /// Initializes at the latest data timestamp shared by every direct
    /// upstream dynamic table within the lag window, or at the current time
    /// (refreshing the upstream closure there) when none qualifies.
    pub fn initialize(&mut self, id: TableId) -> Result<RefreshRecord, EngineError> {
        let dt = self.dt(id)?;
        if dt.state != DtState::Uninitialized {
            return Err(EngineError::Unsupported(format!("{} is already initialized", dt.name)));
        }
        let ts = match self.existing_init_ts(id)? {
            Some(ts) => ts,
            None => {
                let ts = self.manual_refresh_ts();
                self.refresh_closure(id, ts, RefreshKind::Manual)?;
                ts
            }
        };
        let now = self.now;
        self.execute_refresh(id, ts, RefreshKind::Initialization, now)
    }

    fn existing_init_ts(&self, id: TableId) -> Result<Option<i64>, EngineError> {
        let dt = self.dt(id)?;
        let ups = dt.upstream_dts();
        if ups.is_empty() {
            return Ok(None);
        }
        let window = crate::sched::effective_target(self, id);
        let mut common: Option<BTreeSet<i64>> = None;
        for u in &ups {
            let keys: BTreeSet<i64> = self.store.table(*u)?.refresh_ts_map().keys().copied().collect();
            common = Some(match common {
                None => keys,
                Some(c) => c.intersection(&keys).copied().collect(),
            });
        }
        let bases: Vec<TableId> =
            dt.deps.entries.iter().filter(|(_, e)| e.kind == ObjectKind::Table).map(|(t, _)| *t).collect();
        let candidate = common.unwrap_or_default().into_iter().rev().find(|t| {
            *t <= self.now
                && window.is_none_or(|w| self.now - *t <= w)
                && bases.iter().all(|b| self.store.resolve_version_at(*b, *t).is_ok())
        });
        Ok(candidate)
    }

    /// Compares the stored contents at `ts` with the definition expanded to
    /// base tables and evaluated with every scan at `ts`.
    pub fn validate_against_oracle(&self, id: TableId, ts: i64) -> Result<bool, EngineError> {
        let dt = self.dt(id)?;
        let table = self.store.table(id)?;
        let v = table.resolve_refresh_ts(ts)?;
        let mut stored: Vec<Vec<Value>> = table.rows_at(v)?.values().cloned().collect();
        stored.sort();
        let bound = bind_query(&dt.query, &Expanding(self), BindOptions::default())?;
        let mut binding = VersionBinding::new();
        for (t, e) in &bound.deps.entries {
            if e.kind == ObjectKind::Table {
                binding.bind(*t, self.store.resolve_version_at(*t, ts)?);
            }
        }
        let oracle = Evaluator::new(&self.store).evaluate(&bound.plan, &binding)?;
        Ok(oracle.contents() == stored)
    }

    /// Validates every active dynamic table (or the named one) at its data
    /// timestamp.
    pub fn validate_all(&self, only: Option<TableId>) -> Result<Vec<ValidationEntry>, EngineError> {
        let mut out = Vec::new();
        for dt in self.dts.values() {
            if only.is_some_and(|o| o != dt.id) || self.is_dropped(dt.id) {
                continue;
            }
            let Some(ts) = dt.data_timestamp() else { continue };
            if dt.state == DtState::Uninitialized {
                continue;
            }
            out.push(ValidationEntry { dt: dt.name.clone(), refresh_ts: ts, passed: self.validate_against_oracle(dt.id, ts)? });
        }
        Ok(out)
    }

    /// Test hook: rewrites one stored value of the version mapped to the
    /// current data timestamp, bypassing refresh.
    pub(crate) fn corrupt_row(&mut self, id: TableId) -> Result<bool, EngineError> {
        let Some(ts) = self.dt(id)?.data_timestamp() else { return Ok(false) };
        let table = self.store.table(id)?;
        let Some((rid, values)) = table.latest().rows().iter().next().map(|(k, v)| (*k, v.clone())) else {
            return Ok(false);
        };
        let mut bad = values.clone();
        if let Some(first) = bad.first_mut() {
            *first = corrupt_value(first);
        }
        let mut cs = ChangeSet::new();
        cs.push(Action::Delete, Row::new(rid, values));
        cs.push(Action::Insert, Row::new(rid, bad));
        let commit_ts = self.clock.tick(self.now * MICROS_PER_SECOND, None);
        let table = self.store.table_mut(id)?;
        let v = table.commit(cs, commit_ts, None)?;
        table.remap_refresh_ts(ts, v);
        Ok(true)
    }
}
