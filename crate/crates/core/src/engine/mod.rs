//! The catalog and statement executor tying storage, binding, refresh and
//! scheduling together under one virtual clock.

mod record;

use std::collections::BTreeMap;
use std::path::PathBuf;

pub use record::{RecordMode, Recorder};

use crate::algebra::{EvalError, Evaluator, PlanKind, VersionBinding};
use crate::differ::{self, DiffError};
use crate::iso::{build_dsg, History};
use crate::refreshd::{
    DtState, DynamicTable, Isolation, RefreshMode, RefreshRecord, ValidationEntry,
};
use crate::sched::{self, CostModel, SchedState};
use crate::sqlfront::ast::{
    AlterAction, AstExpr, FaultKind, InitializeSpec, InsertSource, ObjectKind, Query, RefreshModeSpec, TargetLag,
};
use crate::sqlfront::{
    bind_query, bind_scalar, parse, BindError, BindOptions, Catalog, ObjectInfo, Statement, StatementKind, SyntaxError,
};
use crate::store::{
    Action, ChangeSet, HlcClock, Row, RowId, Store, StoreError, TableId, TableKind, VersionId, MICROS_PER_SECOND,
};
use crate::types::{Column, DataType, Schema, Value};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("object {0} already exists")]
    AlreadyExists(String),
    #[error("{0} is not a dynamic table")]
    NotDynamic(String),
    #[error("dynamic table {0} has not been initialized")]
    UninitializedDt(String),
    #[error("dynamic table {0} is suspended")]
    Suspended(String),
    #[error("definition of {dt} no longer binds: {source}")]
    UnboundableDefinition { dt: String, source: BindError },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io: {0}")]
    Io(String),
    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("oracle mismatch for {0}")]
    OracleMismatch(String),
    #[error("refresh of {dt} at {refresh_ts} failed: {source}")]
    Refresh { dt: String, refresh_ts: i64, source: Box<EngineError> },
}

impl EngineError {
    /// Engine invariant violations, as opposed to user mistakes.
    pub fn is_internal(&self) -> bool {
        match self {
            EngineError::Store(e) => e.is_internal(),
            EngineError::Eval(e) => matches!(e, EvalError::MissingBinding(_)) || matches!(e, EvalError::Store(s) if s.is_internal()),
            EngineError::Diff(DiffError::ConsolidationViolation { .. }) => true,
            EngineError::Diff(DiffError::Eval(e)) => !e.is_user_error(),
            EngineError::OracleMismatch(_) => true,
            EngineError::Refresh { source, .. } => source.is_internal(),
            _ => false,
        }
    }

    /// Failures that count toward suspension of the refreshed table.
    pub fn is_user_error(&self) -> bool {
        !self.is_internal()
            && !matches!(
                self,
                EngineError::Suspended(_)
                    | EngineError::UninitializedDt(_)
                    | EngineError::Store(StoreError::WouldBlock { .. })
            )
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Consecutive user errors before a dynamic table suspends.
    pub suspend_threshold: u32,
    pub min_target_lag: i64,
    pub cost_model: CostModel,
    /// Test hook: commit raw deltas without consolidation.
    pub disable_consolidation: bool,
    pub record: Option<RecordMode>,
    /// Directory relative file paths resolve against.
    pub base_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            suspend_threshold: 5,
            min_target_lag: 48,
            cost_model: CostModel::Constant(0),
            disable_consolidation: false,
            record: None,
            base_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub schema: Schema,
    pub rows: Vec<Row>,
    /// Present for user queries.
    pub isolation: Option<Isolation>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    None,
    Message(String),
    Rows(QueryResult),
    Text(String),
    Validation(Vec<ValidationEntry>),
    Records(Vec<RefreshRecord>),
}

#[derive(Debug, Clone)]
pub(crate) struct Object {
    pub id: TableId,
    pub name: String,
    pub kind: ObjectKind,
    pub view: Option<(Query, Schema)>,
}

pub struct Engine {
    pub(crate) store: Store,
    pub(crate) clock: HlcClock,
    pub(crate) now: i64,
    pub(crate) objects: BTreeMap<String, Object>,
    pub(crate) dropped: BTreeMap<String, Vec<Object>>,
    pub(crate) dts: BTreeMap<TableId, DynamicTable>,
    pub(crate) refresh_log: Vec<RefreshRecord>,
    pub(crate) recorder: Recorder,
    pub(crate) config: EngineConfig,
    pub(crate) sched: SchedState,
    next_id: TableId,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(EngineConfig::default())
    }
}

impl Catalog for Engine {
    fn lookup(&self, name: &str) -> Option<ObjectInfo> {
        let o = self.objects.get(name)?;
        let (schema, view_query) = match &o.view {
            Some((q, s)) => (s.clone(), Some(q.clone())),
            None => ((**self.store.table(o.id).ok()?.schema()).clone(), None),
        };
        Some(ObjectInfo { id: o.id, name: o.name.clone(), kind: o.kind, schema, view_query })
    }

    fn upstream_dts(&self, id: u64) -> Vec<u64> {
        self.dts.get(&id).map(|d| d.upstream_dts()).unwrap_or_default()
    }

    fn object_name(&self, id: u64) -> Option<String> {
        self.objects.values().find(|o| o.id == id).map(|o| o.name.clone())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Engine {
            store: Store::new(),
            clock: HlcClock::new(),
            now: 0,
            objects: BTreeMap::new(),
            dropped: BTreeMap::new(),
            dts: BTreeMap::new(),
            refresh_log: Vec::new(),
            recorder: Recorder::new(config.record),
            config,
            sched: SchedState::default(),
            next_id: 1,
        }
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn set_now(&mut self, now: i64) {
        self.now = self.now.max(now);
    }

    pub fn advance(&mut self, seconds: i64) {
        self.now += seconds.max(0);
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut EngineConfig {
        &mut self.config
    }

    pub fn refresh_log(&self) -> &[RefreshRecord] {
        &self.refresh_log
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn history(&self) -> History {
        self.recorder.history()
    }

    pub fn dynamic_tables(&self) -> impl Iterator<Item = &DynamicTable> {
        self.dts.values().filter(|d| !self.is_dropped(d.id))
    }

    pub fn dt(&self, id: TableId) -> Result<&DynamicTable, EngineError> {
        self.dts.get(&id).ok_or_else(|| EngineError::UnknownObject(format!("#{id}")))
    }

    pub fn dt_by_name(&self, name: &str) -> Result<&DynamicTable, EngineError> {
        let id = self.dt_id(name)?;
        self.dt(id)
    }

    pub fn dt_id(&self, name: &str) -> Result<TableId, EngineError> {
        let o = self.objects.get(name).ok_or_else(|| EngineError::UnknownObject(name.into()))?;
        if o.kind != ObjectKind::DynamicTable {
            return Err(EngineError::NotDynamic(name.into()));
        }
        Ok(o.id)
    }

    pub fn table_id(&self, name: &str) -> Result<TableId, EngineError> {
        self.objects.get(name).map(|o| o.id).ok_or_else(|| EngineError::UnknownObject(name.into()))
    }

    pub(crate) fn is_dropped(&self, id: TableId) -> bool {
        !self.objects.values().any(|o| o.id == id)
    }

    fn alloc_id(&mut self) -> TableId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn wall(&self) -> i64 {
        self.now * MICROS_PER_SECOND
    }

    fn resolve_path(&self, path: &str) -> PathBuf {
        let p = PathBuf::from(path);
        match &self.config.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    }

    /// Parses and executes every statement, stopping at the first error.
    pub fn run_sql(&mut self, text: &str) -> Result<Vec<Output>, EngineError> {
        let stmts = parse(text)?;
        stmts.iter().map(|s| self.execute(s)).collect()
    }

    pub fn execute(&mut self, stmt: &Statement) -> Result<Output, EngineError> {
        match &stmt.kind {
            StatementKind::CreateTable { name, or_replace, columns } => self.create_table(name, *or_replace, columns),
            StatementKind::CreateView { name, or_replace, query } => self.create_view(name, *or_replace, query),
            StatementKind::CreateDynamicTable { name, or_replace, target_lag, refresh_mode, initialize, query } => {
                self.create_dynamic_table(name, *or_replace, *target_lag, *refresh_mode, *initialize, query)
            }
            StatementKind::Drop { kind, name } => self.drop_object(*kind, name),
            StatementKind::Undrop { kind, name } => self.undrop_object(*kind, name),
            StatementKind::Insert { table, columns, source } => self.insert(table, columns.as_deref(), source),
            StatementKind::Delete { table, selection } => self.delete(table, selection.as_ref()),
            StatementKind::Update { table, assignments, selection } => {
                self.update(table, assignments, selection.as_ref())
            }
            StatementKind::AlterDynamicTable { name, action } => self.alter(name, action),
            StatementKind::Select(q) => Ok(Output::Rows(self.query(q)?)),
            StatementKind::ShowDynamicTables => Ok(Output::Rows(self.show_dynamic_tables())),
            StatementKind::Validate { name } => {
                let only = name.as_deref().map(|n| self.dt_id(n)).transpose()?;
                Ok(Output::Validation(self.validate_all(only)?))
            }
            StatementKind::Explain(q) => {
                let bound = bind_query(q, self, BindOptions { allow_at: true, defining: None })?;
                Ok(Output::Text(bound.plan.explain()))
            }
            StatementKind::ExplainRefresh { name } => self.explain_refresh(name),
            StatementKind::AdvanceTime { seconds } => {
                self.advance(*seconds);
                Ok(Output::Message(format!("time is {}", self.now)))
            }
            StatementKind::RunScheduler { until } => Ok(Output::Records(sched::run_until(self, *until))),
            StatementKind::DumpDsg => {
                self.require_recorder()?;
                Ok(Output::Text(build_dsg(&self.history()).map_err(|e| EngineError::Unsupported(e.to_string()))?.to_dot()))
            }
            StatementKind::DumpHistory => {
                self.require_recorder()?;
                Ok(Output::Text(self.history().to_jsonl()))
            }
            StatementKind::DumpLag => Ok(Output::Text(sched::lag_csv(&sched::lag_series(&self.refresh_log, None)))),
            StatementKind::CopyInto { table, path, header } => self.copy_into(table, path, *header),
            StatementKind::InjectFault { fault, target } => self.inject_fault(*fault, target),
            StatementKind::SaveSnapshot { path } => {
                let p = self.resolve_path(path);
                std::fs::write(&p, self.store.save_json()).map_err(|e| EngineError::Io(format!("{}: {e}", p.display())))?;
                Ok(Output::Message(format!("snapshot written to {}", p.display())))
            }
        }
    }

    fn require_recorder(&self) -> Result<(), EngineError> {
        if self.recorder.enabled() {
            Ok(())
        } else {
            Err(EngineError::Unsupported("history recording is off".into()))
        }
    }

    fn claim_name(&mut self, name: &str, or_replace: bool, kind: ObjectKind) -> Result<(), EngineError> {
        if let Some(existing) = self.objects.get(name) {
            if !or_replace {
                return Err(EngineError::AlreadyExists(name.into()));
            }
            if existing.kind != kind {
                return Err(EngineError::AlreadyExists(format!("{name} as {}", existing.kind.sql())));
            }
            let old = self.objects.remove(name).expect("object exists");
            self.dropped.entry(name.to_string()).or_default().push(old);
        }
        Ok(())
    }

    fn create_table(&mut self, name: &str, or_replace: bool, columns: &[(String, DataType)]) -> Result<Output, EngineError> {
        let mut seen = std::collections::BTreeSet::new();
        for (c, _) in columns {
            if !seen.insert(c) {
                return Err(EngineError::Unsupported(format!("duplicate column {c}")));
            }
        }
        self.claim_name(name, or_replace, ObjectKind::Table)?;
        let id = self.alloc_id();
        let schema = Schema::new(columns.iter().map(|(n, t)| Column::new(n.clone(), *t)).collect());
        let created = self.clock.tick(self.wall(), None);
        self.store.create_table(id, name, TableKind::Base, schema, created);
        self.recorder.table_created(id, name, true);
        self.objects.insert(name.into(), Object { id, name: name.into(), kind: ObjectKind::Table, view: None });
        Ok(Output::Message(format!("table {name} created")))
    }

    fn create_view(&mut self, name: &str, or_replace: bool, query: &Query) -> Result<Output, EngineError> {
        let bound = bind_query(query, self, BindOptions { allow_at: false, defining: Some(name.into()) })?;
        self.claim_name(name, or_replace, ObjectKind::View)?;
        let id = self.alloc_id();
        let view = Some((query.clone(), bound.plan.schema));
        self.objects.insert(name.into(), Object { id, name: name.into(), kind: ObjectKind::View, view });
        Ok(Output::Message(format!("view {name} created")))
    }

    fn create_dynamic_table(
        &mut self,
        name: &str,
        or_replace: bool,
        target_lag: TargetLag,
        mode: RefreshModeSpec,
        initialize: InitializeSpec,
        query: &Query,
    ) -> Result<Output, EngineError> {
        if let TargetLag::Seconds(s) = target_lag {
            if s < self.config.min_target_lag {
                return Err(EngineError::Unsupported(format!(
                    "target lag {s} seconds is below the minimum of {} seconds",
                    self.config.min_target_lag
                )));
            }
        }
        let bound = bind_query(query, self, BindOptions { allow_at: false, defining: Some(name.into()) })?;
        let differentiable = differ::differentiate(&bound.plan);
        let refresh_mode = match (mode, &differentiable) {
            (RefreshModeSpec::Full, _) => RefreshMode::Full,
            (RefreshModeSpec::Auto, Ok(_)) => RefreshMode::Incremental,
            (RefreshModeSpec::Auto, Err(_)) => RefreshMode::Full,
            (RefreshModeSpec::Incremental, Ok(_)) => RefreshMode::Incremental,
            (RefreshModeSpec::Incremental, Err(e)) => {
                return Err(EngineError::Unsupported(format!("incremental refresh is not possible: {e}")))
            }
        };
        self.claim_name(name, or_replace, ObjectKind::DynamicTable)?;
        let id = self.alloc_id();
        let created = self.clock.tick(self.wall(), None);
        self.store.create_table(id, name, TableKind::Dynamic, bound.plan.schema.clone(), created);
        self.recorder.table_created(id, name, false);
        self.objects.insert(name.into(), Object { id, name: name.into(), kind: ObjectKind::DynamicTable, view: None });
        let dt = DynamicTable::new(id, name.into(), query.clone(), bound, target_lag, refresh_mode, initialize, self.now);
        self.dts.insert(id, dt);
        if initialize == InitializeSpec::OnCreate {
            match self.initialize(id) {
                Ok(record) => return Ok(Output::Records(vec![record])),
                Err(e) => {
                    self.objects.remove(name);
                    self.dts.remove(&id);
                    self.store.remove_table(id);
                    return Err(e);
                }
            }
        }
        Ok(Output::Message(format!("dynamic table {name} created")))
    }

    fn drop_object(&mut self, kind: ObjectKind, name: &str) -> Result<Output, EngineError> {
        match self.objects.get(name) {
            Some(o) if o.kind == kind => {}
            Some(o) => return Err(EngineError::Unsupported(format!("{name} is a {}", o.kind.sql()))),
            None => return Err(EngineError::UnknownObject(name.into())),
        }
        let o = self.objects.remove(name).expect("object exists");
        self.dropped.entry(name.to_string()).or_default().push(o);
        Ok(Output::Message(format!("{} {name} dropped", kind.sql())))
    }

    fn undrop_object(&mut self, kind: ObjectKind, name: &str) -> Result<Output, EngineError> {
        if self.objects.contains_key(name) {
            return Err(EngineError::AlreadyExists(name.into()));
        }
        let stack = self.dropped.get_mut(name).ok_or_else(|| EngineError::UnknownObject(name.into()))?;
        if stack.last().map(|o| o.kind) != Some(kind) {
            return Err(EngineError::UnknownObject(format!("dropped {} {name}", kind.sql())));
        }
        let o = stack.pop().expect("non-empty");
        self.objects.insert(name.into(), o);
        Ok(Output::Message(format!("{} {name} restored", kind.sql())))
    }

    fn base_table(&self, name: &str) -> Result<TableId, EngineError> {
        let o = self.objects.get(name).ok_or_else(|| EngineError::UnknownObject(name.into()))?;
        if o.kind != ObjectKind::Table {
            return Err(EngineError::Unsupported(format!("{name} is a {} and cannot be modified", o.kind.sql())));
        }
        Ok(o.id)
    }

    /// Commits one user DML transaction; empty change sets commit nothing.
    fn commit_user(
        &mut self,
        id: TableId,
        cs: ChangeSet,
        reads: Vec<(TableId, VersionId)>,
    ) -> Result<Option<VersionId>, EngineError> {
        if cs.is_empty() {
            self.recorder.user_txn(&reads, &[]);
            return Ok(None);
        }
        let owner = 1;
        self.store.locks().try_lock(id, owner)?;
        let ts = self.clock.tick(self.wall(), None);
        let result = self.store.commit_dml(id, cs, ts, None);
        self.store.locks().unlock(id, owner)?;
        let v = result?;
        self.recorder.user_txn(&reads, &[(id, v)]);
        Ok(Some(v))
    }

    fn insert(&mut self, table: &str, columns: Option<&[String]>, source: &InsertSource) -> Result<Output, EngineError> {
        let id = self.base_table(table)?;
        let schema = (**self.store.table(id)?.schema()).clone();
        let positions: Vec<usize> = match columns {
            Some(cols) => cols
                .iter()
                .map(|c| schema.index_of(c).ok_or_else(|| BindError::UnknownColumn(format!("{table}.{c}"))))
                .collect::<Result<_, _>>()?,
            None => (0..schema.arity()).collect(),
        };
        let (raw, reads): (Vec<Vec<Value>>, Vec<(TableId, VersionId)>) = match source {
            InsertSource::Values(rows) => {
                let empty = Schema::default();
                let mut out = Vec::new();
                for row in rows {
                    let vals = row
                        .iter()
                        .map(|e| Ok(bind_scalar(e, &empty, table)?.eval(&[])?))
                        .collect::<Result<Vec<_>, EngineError>>()?;
                    out.push(vals);
                }
                (out, Vec::new())
            }
            InsertSource::Query(q) => {
                let (result, reads) = self.evaluate_query(q)?;
                (result.rows.into_iter().map(|r| r.values).collect(), reads)
            }
        };
        let mut cs = ChangeSet::new();
        for (n, vals) in raw.into_iter().enumerate() {
            if vals.len() != positions.len() {
                return Err(StoreError::ArityMismatch { table: table.into(), expected: positions.len(), found: vals.len() }.into());
            }
            let mut full = vec![Value::Null; schema.arity()];
            for (v, &p) in vals.into_iter().zip(&positions) {
                let ty = schema.columns[p].ty;
                full[p] = v.clone().coerce(ty).ok_or_else(|| {
                    BindError::TypeMismatch(format!("row {}: {v} is not a valid {ty} for {}", n + 1, schema.columns[p].name))
                })?;
            }
            let rid = self.store.table_mut(id)?.next_row_id();
            cs.push(Action::Insert, Row::new(rid, full));
        }
        let n = cs.len();
        self.commit_user(id, cs, reads)?;
        Ok(Output::Message(format!("{n} rows inserted")))
    }

    fn matching_rows(&self, id: TableId, table: &str, selection: Option<&AstExpr>) -> Result<Vec<Row>, EngineError> {
        let t = self.store.table(id)?;
        let pred = selection.map(|s| bind_scalar(s, t.schema(), table)).transpose()?;
        let mut out = Vec::new();
        for (rid, vals) in t.latest().rows().iter() {
            if pred.as_ref().map_or(Ok(true), |p| p.eval_predicate(vals))? {
                out.push(Row::new(*rid, vals.clone()));
            }
        }
        Ok(out)
    }

    fn delete(&mut self, table: &str, selection: Option<&AstExpr>) -> Result<Output, EngineError> {
        let id = self.base_table(table)?;
        let rows = self.matching_rows(id, table, selection)?;
        let read = (id, self.store.table(id)?.latest_version());
        let n = rows.len();
        let mut cs = ChangeSet::new();
        for r in rows {
            cs.push(Action::Delete, r);
        }
        self.commit_user(id, cs, vec![read])?;
        Ok(Output::Message(format!("{n} rows deleted")))
    }

    fn update(
        &mut self,
        table: &str,
        assignments: &[(String, AstExpr)],
        selection: Option<&AstExpr>,
    ) -> Result<Output, EngineError> {
        let id = self.base_table(table)?;
        let schema = (**self.store.table(id)?.schema()).clone();
        let mut sets = Vec::new();
        for (col, e) in assignments {
            let i = schema.index_of(col).ok_or_else(|| BindError::UnknownColumn(format!("{table}.{col}")))?;
            sets.push((i, bind_scalar(e, &schema, table)?));
        }
        let rows = self.matching_rows(id, table, selection)?;
        let read = (id, self.store.table(id)?.latest_version());
        let n = rows.len();
        let mut cs = ChangeSet::new();
        for r in rows {
            let mut vals = r.values.clone();
            for (i, e) in &sets {
                let v = e.eval(&r.values)?;
                let ty = schema.columns[*i].ty;
                vals[*i] = v.clone().coerce(ty).ok_or_else(|| BindError::TypeMismatch(format!("{v} is not a valid {ty}")))?;
            }
            if vals != r.values {
                cs.push(Action::Delete, r.clone());
                cs.push(Action::Insert, Row::new(r.row_id, vals));
            }
        }
        self.commit_user(id, cs, vec![read])?;
        Ok(Output::Message(format!("{n} rows updated")))
    }

    fn copy_into(&mut self, table: &str, path: &str, header: bool) -> Result<Output, EngineError> {
        let id = self.base_table(table)?;
        let schema = (**self.store.table(id)?.schema()).clone();
        let p = self.resolve_path(path);
        let text = std::fs::read_to_string(&p).map_err(|e| EngineError::Io(format!("{}: {e}", p.display())))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(header).flexible(true).from_reader(text.as_bytes());
        let mut cs = ChangeSet::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| EngineError::Csv { row, message: e.to_string() })?;
            if rec.len() != schema.arity() {
                return Err(EngineError::Csv { row, message: format!("expected {} fields, found {}", schema.arity(), rec.len()) });
            }
            let mut vals = Vec::with_capacity(rec.len());
            for (cell, col) in rec.iter().zip(&schema.columns) {
                let v = Value::parse_as(cell, col.ty).ok_or_else(|| EngineError::Csv {
                    row,
                    message: format!("cannot parse {cell:?} as {} for column {}", col.ty, col.name),
                })?;
                vals.push(v);
            }
            let rid = self.store.table_mut(id)?.next_row_id();
            cs.push(Action::Insert, Row::new(rid, vals));
        }
        let n = cs.len();
        self.commit_user(id, cs, Vec::new())?;
        Ok(Output::Message(format!("{n} rows loaded")))
    }

    /// Binds a user query and resolves every scan to a committed version.
    fn evaluate_query(&self, q: &Query) -> Result<(QueryResult, Vec<(TableId, VersionId)>), EngineError> {
        let bound = bind_query(q, self, BindOptions { allow_at: true, defining: None })?;
        let mut binding = VersionBinding::new();
        let mut reads = Vec::new();
        let mut scans = Vec::new();
        bound.plan.walk(&mut |p| {
            if let PlanKind::Scan(s) = &p.kind {
                scans.push((p.id, s.clone()));
            }
        });
        let mut sources = std::collections::BTreeSet::new();
        let mut dt_sources = 0;
        for (node, scan) in &scans {
            let table = self.store.table(scan.table)?;
            let v = match (table.kind, scan.at) {
                (TableKind::Base, Some(t)) => table.resolve_version_at(t)?,
                (TableKind::Base, None) => table.latest_version(),
                (TableKind::Dynamic, at) => {
                    let dt = self.dt(scan.table)?;
                    if dt.state == DtState::Uninitialized || dt.frontier.is_none() {
                        return Err(EngineError::UninitializedDt(dt.name.clone()));
                    }
                    match at {
                        Some(t) => table
                            .refresh_ts_at_or_before(t)
                            .map(|(_, v)| v)
                            .ok_or(StoreError::NoVersionVisible { table: dt.name.clone(), at: t })?,
                        None => table.latest_version(),
                    }
                }
            };
            binding.nodes.insert(*node, v);
            reads.push((scan.table, v));
            if sources.insert((scan.table, scan.at)) && table.kind == TableKind::Dynamic {
                dt_sources += 1;
            }
        }
        let isolation = if dt_sources == 0 || (dt_sources == 1 && sources.len() == 1) {
            Isolation::SnapshotIsolation
        } else {
            Isolation::ReadCommitted
        };
        reads.sort();
        reads.dedup();
        let mut rel = Evaluator::new(&self.store).evaluate(&bound.plan, &binding)?;
        rel.rows.sort_by_key(|r| r.row_id);
        Ok((QueryResult { schema: rel.schema, rows: rel.rows, isolation: Some(isolation) }, reads))
    }

    /// Runs a read-only query and records it as a user transaction.
    pub fn query(&mut self, q: &Query) -> Result<QueryResult, EngineError> {
        let (result, reads) = self.evaluate_query(q)?;
        self.recorder.user_txn(&reads, &[]);
        Ok(result)
    }

    pub fn query_sql(&mut self, sql: &str) -> Result<QueryResult, EngineError> {
        let q = crate::sqlfront::parse_query(sql)?;
        self.query(&q)
    }

    fn alter(&mut self, name: &str, action: &AlterAction) -> Result<Output, EngineError> {
        let id = self.dt_id(name)?;
        match action {
            AlterAction::Refresh => Ok(Output::Records(vec![self.manual_refresh(id)?])),
            AlterAction::Suspend => {
                self.dts.get_mut(&id).expect("dt exists").state = DtState::Suspended;
                Ok(Output::Message(format!("{name} suspended")))
            }
            AlterAction::Resume => {
                let dt = self.dts.get_mut(&id).expect("dt exists");
                dt.error_count = 0;
                dt.state = if dt.frontier.is_some() { DtState::Active } else { DtState::Uninitialized };
                Ok(Output::Message(format!("{name} resumed")))
            }
            AlterAction::SetSimulatedDuration(d) => {
                self.dts.get_mut(&id).expect("dt exists").simulated_duration = Some(*d);
                Ok(Output::Message(format!("{name} simulated duration {d}")))
            }
        }
    }

    fn inject_fault(&mut self, fault: FaultKind, target: &str) -> Result<Output, EngineError> {
        let id = self.dt_id(target)?;
        if fault == FaultKind::CorruptRow {
            let done = self.corrupt_row(id)?;
            let msg = if done { "row corrupted" } else { "nothing to corrupt" };
            return Ok(Output::Message(format!("{target}: {msg}")));
        }
        self.dts.get_mut(&id).expect("dt exists").faults.push(fault);
        Ok(Output::Message(format!("fault {} armed on {target}", fault.sql())))
    }

    fn explain_refresh(&mut self, name: &str) -> Result<Output, EngineError> {
        let id = self.dt_id(name)?;
        let dt = self.dt(id)?;
        let text = match dt.refresh_mode {
            RefreshMode::Full => format!("FULL refresh\n{}", dt.plan.explain()),
            RefreshMode::Incremental => {
                let mut dp = differ::differentiate(&dt.plan)?;
                if let Some(f) = &dt.frontier {
                    let ts = self.manual_refresh_ts();
                    let mut after = BTreeMap::new();
                    for (t, e) in &dt.deps.entries {
                        let v = match e.kind {
                            ObjectKind::Table => self.store.resolve_version_at(*t, ts).ok(),
                            ObjectKind::DynamicTable => Some(self.store.table(*t)?.latest_version()),
                            ObjectKind::View => continue,
                        };
                        if let Some(v) = v {
                            after.insert(*t, v);
                        }
                    }
                    let insert_only = self.insert_only_scans(&dp.plan, &f.versions, &after)?;
                    dp = differ::specialize_insert_only(dp, &insert_only);
                }
                format!("INCREMENTAL refresh\n{}", dp.explain())
            }
        };
        Ok(Output::Text(text))
    }

    fn show_dynamic_tables(&self) -> QueryResult {
        let schema = Schema::new(vec![
            Column::new("name", DataType::Text),
            Column::new("state", DataType::Text),
            Column::new("target_lag", DataType::Text),
            Column::new("refresh_mode", DataType::Text),
            Column::new("data_timestamp", DataType::Timestamp),
            Column::new("lag_seconds", DataType::Int64),
            Column::new("error_count", DataType::Int64),
        ]);
        let mut dts: Vec<&DynamicTable> = self.dynamic_tables().collect();
        dts.sort_by(|a, b| a.name.cmp(&b.name));
        let rows = dts
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let lag = match d.target_lag {
                    TargetLag::Seconds(s) => format!("{s} seconds"),
                    TargetLag::Downstream => "DOWNSTREAM".into(),
                };
                let ts = d.data_timestamp();
                Row::new(
                    RowId::values_row(0, i),
                    vec![
                        Value::Text(d.name.clone()),
                        Value::Text(d.state.to_string()),
                        Value::Text(lag),
                        Value::Text(d.refresh_mode.to_string()),
                        ts.map_or(Value::Null, Value::Timestamp),
                        ts.map_or(Value::Null, |t| Value::Int64(self.now - t)),
                        Value::Int64(d.error_count as i64),
                    ],
                )
            })
            .collect();
        QueryResult { schema, rows, isolation: None }
    }

    /// Current contents of a table or dynamic table, sorted by row id.
    pub fn contents(&self, name: &str) -> Result<Vec<Row>, EngineError> {
        let id = self.table_id(name)?;
        Ok(self.store.table(id)?.scan_at(self.store.table(id)?.latest_version())?)
    }
}
