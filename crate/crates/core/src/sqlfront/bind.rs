use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::ast::{AstExpr, GroupBy, Literal, ObjectKind, Query, Select, SelectItem, TableRef};
use crate::algebra::{
    AggCall, AggFunc, BinaryOp, Expr, Plan, PlanBuilder, ScalarFunc, ScanNode, SortKey, SourceKind, TypeError,
    WindowFunc,
};
use crate::types::{DataType, Schema, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("ambiguous column {0}")]
    AmbiguousColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("cycle detected: {0}")]
    CycleDetected(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl From<TypeError> for BindError {
    fn from(e: TypeError) -> Self {
        BindError::TypeMismatch(e.message)
    }
}

#[derive(Debug, Clone)]
pub struct ObjectInfo {
    pub id: u64,
    pub name: String,
    pub kind: ObjectKind,
    pub schema: Schema,
    /// Definition text for views.
    pub view_query: Option<Query>,
}

/// Name resolution against an immutable catalog state.
pub trait Catalog {
    fn lookup(&self, name: &str) -> Option<ObjectInfo>;
    /// Dynamic tables read directly by dynamic table `id`, views expanded.
    fn upstream_dts(&self, id: u64) -> Vec<u64>;
    fn object_name(&self, id: u64) -> Option<String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepEntry {
    pub kind: ObjectKind,
    pub name: String,
    pub used_columns: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencySet {
    pub entries: BTreeMap<u64, DepEntry>,
    pub fingerprint: String,
}

impl DependencySet {
    pub fn dynamic_tables(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().filter(|(_, e)| e.kind == ObjectKind::DynamicTable).map(|(id, _)| *id)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BindOptions {
    /// Permit `AT(TIMESTAMP => t)` on table references.
    pub allow_at: bool,
    /// Name of the dynamic table being defined, for cycle checks.
    pub defining: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Bound {
    pub plan: Plan,
    pub deps: DependencySet,
    /// An aggregate without grouping keys appears somewhere in the plan.
    pub scalar_aggregate: bool,
}

const AGG_MARK: usize = 1 << 40;
const WIN_MARK: usize = 1 << 41;

#[derive(Debug, Clone)]
struct ScopeCol {
    qualifier: Option<String>,
    name: String,
    ty: DataType,
    origin: Option<u64>,
}

#[derive(Debug, Clone, Default)]
struct Scope {
    cols: Vec<ScopeCol>,
}

impl Scope {
    fn schema(&self) -> Schema {
        Schema::new(self.cols.iter().map(|c| crate::types::Column::new(c.name.clone(), c.ty)).collect())
    }

    fn from_schema(schema: &Schema, qualifier: &str, origin: Option<u64>) -> Scope {
        Scope {
            cols: schema
                .columns
                .iter()
                .map(|c| ScopeCol { qualifier: Some(qualifier.to_string()), name: c.name.clone(), ty: c.ty, origin })
                .collect(),
        }
    }

    fn resolve(&self, qualifier: Option<&str>, name: &str) -> Result<usize, BindError> {
        let matches: Vec<usize> = self
            .cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name == name && (qualifier.is_none() || c.qualifier.as_deref() == qualifier))
            .map(|(i, _)| i)
            .collect();
        let display = match qualifier {
            Some(q) => format!("{q}.{name}"),
            None => name.to_string(),
        };
        match matches.as_slice() {
            [i] => Ok(*i),
            [] => Err(BindError::UnknownColumn(display)),
            _ => Err(BindError::AmbiguousColumn(display)),
        }
    }
}

struct WindowCall {
    func: WindowFunc,
    partition: Vec<Expr>,
    order: Vec<SortKey>,
}

#[derive(Default)]
struct Collect {
    allow_agg: bool,
    allow_window: bool,
    aggs: Vec<AggCall>,
    windows: Vec<WindowCall>,
}

struct Binder<'c> {
    catalog: &'c dyn Catalog,
    opts: BindOptions,
    builder: PlanBuilder,
    deps: BTreeMap<u64, DepEntry>,
    view_stack: Vec<String>,
    scalar_aggregate: bool,
}

/// Binds a query: resolves names, expands views, typechecks and collects
/// dependencies.
pub fn bind_query(query: &Query, catalog: &dyn Catalog, opts: BindOptions) -> Result<Bound, BindError> {
    let mut b = Binder {
        catalog,
        opts,
        builder: PlanBuilder::new(),
        deps: BTreeMap::new(),
        view_stack: Vec::new(),
        scalar_aggregate: false,
    };
    let (plan, _) = b.query(query)?;
    plan.typecheck()?;
    if let Some(name) = b.opts.defining.clone() {
        b.check_cycle(&name)?;
    }
    let fingerprint = plan.fingerprint();
    Ok(Bound {
        plan,
        deps: DependencySet { entries: b.deps, fingerprint },
        scalar_aggregate: b.scalar_aggregate,
    })
}

/// Binds a scalar expression over one table's columns (DML predicates and
/// assignments). Aggregates and windows are rejected.
pub fn bind_scalar(expr: &AstExpr, schema: &Schema, table: &str) -> Result<Expr, BindError> {
    struct Empty;
    impl Catalog for Empty {
        fn lookup(&self, _: &str) -> Option<ObjectInfo> {
            None
        }
        fn upstream_dts(&self, _: u64) -> Vec<u64> {
            Vec::new()
        }
        fn object_name(&self, _: u64) -> Option<String> {
            None
        }
    }
    let mut b = Binder {
        catalog: &Empty,
        opts: BindOptions::default(),
        builder: PlanBuilder::new(),
        deps: BTreeMap::new(),
        view_stack: Vec::new(),
        scalar_aggregate: false,
    };
    let scope = Scope::from_schema(schema, table, None);
    let e = b.expr(expr, &scope, &mut Collect::default())?;
    e.data_type(schema).map_err(BindError::TypeMismatch)?;
    Ok(e)
}

fn literal(l: &Literal) -> Value {
    match l {
        Literal::Int(i) => Value::Int64(*i),
        Literal::Float(f) => Value::Float64(*f),
        Literal::Str(s) => Value::Text(s.clone()),
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Null => Value::Null,
        Literal::Timestamp(t) => Value::Timestamp(*t),
        Literal::Interval(s) => Value::Int64(*s),
    }
}

fn is_agg_name(name: &str) -> Option<AggFunc> {
    match name {
        "count" => Some(AggFunc::Count),
        "count_if" => Some(AggFunc::CountIf),
        "sum" => Some(AggFunc::Sum),
        "min" => Some(AggFunc::Min),
        "max" => Some(AggFunc::Max),
        "avg" => Some(AggFunc::Avg),
        _ => None,
    }
}

fn has_marker(e: &Expr) -> bool {
    let mut cols = Vec::new();
    e.columns(&mut cols);
    cols.iter().any(|c| *c >= AGG_MARK)
}

fn column_name(e: &AstExpr, i: usize) -> String {
    match e {
        AstExpr::Column { name, .. } => name.clone(),
        AstExpr::Call { name, .. } => name.clone(),
        AstExpr::DateTrunc { .. } => "date_trunc".into(),
        _ => format!("expr{}", i + 1),
    }
}

/// Rewrites an expression bound before aggregation to the aggregate's output.
fn map_post_agg(e: &Expr, keys: &[Expr], names: &Schema) -> Result<Expr, BindError> {
    if let Some(i) = keys.iter().position(|k| k == e) {
        return Ok(Expr::Column(i));
    }
    let rec = |x: &Expr| map_post_agg(x, keys, names);
    Ok(match e {
        Expr::Column(c) if *c >= WIN_MARK => Expr::Column(*c),
        Expr::Column(c) if *c >= AGG_MARK => Expr::Column(keys.len() + (c - AGG_MARK)),
        Expr::Column(c) => {
            let name = names.columns.get(*c).map_or_else(|| format!("#{c}"), |col| col.name.clone());
            return Err(BindError::Unsupported(format!("column {name} must appear in GROUP BY or inside an aggregate")));
        }
        Expr::Literal(v) => Expr::Literal(v.clone()),
        Expr::Unary { op, expr } => Expr::Unary { op: *op, expr: Box::new(rec(expr)?) },
        Expr::Binary { op, left, right } => {
            Expr::Binary { op: *op, left: Box::new(rec(left)?), right: Box::new(rec(right)?) }
        }
        Expr::IsNull { expr, negated } => Expr::IsNull { expr: Box::new(rec(expr)?), negated: *negated },
        Expr::Case { branches, else_expr } => Expr::Case {
            branches: branches.iter().map(|(c, r)| Ok((rec(c)?, rec(r)?))).collect::<Result<_, BindError>>()?,
            else_expr: match else_expr {
                Some(x) => Some(Box::new(rec(x)?)),
                None => None,
            },
        },
        Expr::Function { func, args } => {
            Expr::Function { func: func.clone(), args: args.iter().map(rec).collect::<Result<_, _>>()? }
        }
    })
}

fn map_windows(e: &Expr, base: usize) -> Expr {
    e.map_columns(&|c| if c >= WIN_MARK { base + (c - WIN_MARK) } else { c })
}

impl Binder<'_> {
    fn record(&mut self, id: u64, kind: ObjectKind, name: &str) -> &mut DepEntry {
        self.deps.entry(id).or_insert_with(|| DepEntry { kind, name: name.to_string(), used_columns: BTreeSet::new() })
    }

    fn use_column(&mut self, col: &ScopeCol) {
        if let Some(id) = col.origin {
            if let Some(e) = self.deps.get_mut(&id) {
                e.used_columns.insert(col.name.clone());
            }
        }
    }

    fn check_cycle(&self, name: &str) -> Result<(), BindError> {
        let mut queue: VecDeque<u64> =
            self.deps.iter().filter(|(_, e)| e.kind == ObjectKind::DynamicTable).map(|(id, _)| *id).collect();
        let mut seen = BTreeSet::new();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            let n = self.catalog.object_name(id).unwrap_or_default();
            if n == name {
                return Err(BindError::CycleDetected(format!("{name} would read itself")));
            }
            queue.extend(self.catalog.upstream_dts(id));
        }
        Ok(())
    }

    fn query(&mut self, q: &Query) -> Result<(Plan, Scope), BindError> {
        match q {
            Query::Select(s) => self.select(s),
            Query::UnionAll(qs) => {
                let mut plans = Vec::new();
                for q in qs {
                    plans.push(self.query(q)?.0);
                }
                let arity = plans[0].schema.arity();
                if plans.iter().any(|p| p.schema.arity() != arity) {
                    return Err(BindError::TypeMismatch("UNION ALL branches differ in column count".into()));
                }
                let plan = self.builder.union_all(plans)?;
                let scope = Scope {
                    cols: plan
                        .schema
                        .columns
                        .iter()
                        .map(|c| ScopeCol { qualifier: None, name: c.name.clone(), ty: c.ty, origin: None })
                        .collect(),
                };
                Ok((plan, scope))
            }
        }
    }

    fn table_ref(&mut self, t: &TableRef) -> Result<(Plan, Scope), BindError> {
        match t {
            TableRef::Named { name, alias, at } => {
                let info = self.catalog.lookup(name).ok_or_else(|| BindError::UnknownObject(name.clone()))?;
                let qualifier = alias.clone().unwrap_or_else(|| name.clone());
                if at.is_some() && !self.opts.allow_at {
                    return Err(BindError::Unsupported("AT(TIMESTAMP) is not allowed in definitions".into()));
                }
                match info.kind {
                    ObjectKind::Table | ObjectKind::DynamicTable => {
                        self.record(info.id, info.kind, &info.name);
                        let source =
                            if info.kind == ObjectKind::Table { SourceKind::Table } else { SourceKind::Dynamic };
                        let plan = self.builder.scan(
                            ScanNode { table: info.id, name: info.name.clone(), source, at: *at },
                            info.schema.clone(),
                        );
                        Ok((plan, Scope::from_schema(&info.schema, &qualifier, Some(info.id))))
                    }
                    ObjectKind::View => {
                        if at.is_some() {
                            return Err(BindError::Unsupported("AT(TIMESTAMP) on a view".into()));
                        }
                        if self.view_stack.contains(&info.name) {
                            return Err(BindError::CycleDetected(format!("view {} references itself", info.name)));
                        }
                        self.record(info.id, ObjectKind::View, &info.name);
                        let query = info.view_query.clone().ok_or_else(|| BindError::UnknownObject(name.clone()))?;
                        self.view_stack.push(info.name.clone());
                        let (plan, _) = self.query(&query)?;
                        self.view_stack.pop();
                        let scope = Scope::from_schema(&plan.schema, &qualifier, Some(info.id));
                        Ok((plan, scope))
                    }
                }
            }
            TableRef::Derived { query, alias } => {
                let (plan, _) = self.query(query)?;
                let scope = Scope::from_schema(&plan.schema, alias, None);
                Ok((plan, scope))
            }
            TableRef::Join { kind, left, right, on } => {
                let (lp, ls) = self.table_ref(left)?;
                let (rp, rs) = self.table_ref(right)?;
                let mut conjuncts = Vec::new();
                split_and(on, &mut conjuncts);
                let mut keys = Vec::new();
                for c in conjuncts {
                    let AstExpr::Binary { op: BinaryOp::Eq, left: a, right: b } = c else {
                        return Err(BindError::Unsupported(format!("join condition {c} is not an equality")));
                    };
                    let (AstExpr::Column { qualifier: qa, name: na }, AstExpr::Column { qualifier: qb, name: nb }) =
                        (&**a, &**b)
                    else {
                        return Err(BindError::Unsupported(format!("join condition {c} must compare columns")));
                    };
                    let pair = match (ls.resolve(qa.as_deref(), na), rs.resolve(qb.as_deref(), nb)) {
                        (Ok(l), Ok(r)) => (l, r),
                        _ => match (ls.resolve(qb.as_deref(), nb), rs.resolve(qa.as_deref(), na)) {
                            (Ok(l), Ok(r)) => (l, r),
                            (Err(e), _) | (_, Err(e)) => return Err(e),
                        },
                    };
                    self.use_column(&ls.cols[pair.0]);
                    self.use_column(&rs.cols[pair.1]);
                    keys.push(pair);
                }
                let plan = self.builder.join(*kind, lp, rp, keys)?;
                let mut scope = ls;
                scope.cols.extend(rs.cols);
                Ok((plan, scope))
            }
        }
    }

    fn select(&mut self, s: &Select) -> Result<(Plan, Scope), BindError> {
        let (mut plan, scope) = match &s.from {
            Some(t) => self.table_ref(t)?,
            None => (self.builder.values(vec![vec![]], vec![])?, Scope::default()),
        };
        if let Some(w) = &s.selection {
            let pred = self.expr(w, &scope, &mut Collect::default())?;
            plan = self.builder.filter(plan, pred)?;
        }

        let mut coll = Collect { allow_agg: true, allow_window: true, ..Default::default() };
        let mut items: Vec<(Expr, String)> = Vec::new();
        for (i, item) in s.items.iter().enumerate() {
            match item {
                SelectItem::Wildcard | SelectItem::QualifiedWildcard(_) => {
                    let q = match item {
                        SelectItem::QualifiedWildcard(q) => Some(q.as_str()),
                        _ => None,
                    };
                    let mut any = false;
                    for (ci, c) in scope.cols.iter().enumerate() {
                        if q.is_none() || c.qualifier.as_deref() == q {
                            self.use_column(c);
                            items.push((Expr::Column(ci), c.name.clone()));
                            any = true;
                        }
                    }
                    if !any {
                        return Err(BindError::UnknownObject(q.unwrap_or("*").to_string()));
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let e = self.expr(expr, &scope, &mut coll)?;
                    items.push((e, alias.clone().unwrap_or_else(|| column_name(expr, i))));
                }
            }
        }
        let having = match &s.having {
            Some(h) => {
                let mut hc = Collect { allow_agg: true, allow_window: false, ..Default::default() };
                hc.aggs = std::mem::take(&mut coll.aggs);
                let e = self.expr(h, &scope, &mut hc)?;
                coll.aggs = hc.aggs;
                Some(e)
            }
            None => None,
        };

        let mut windows = std::mem::take(&mut coll.windows);
        let aggregated = s.group_by.is_some() || !coll.aggs.is_empty();
        let mut cur_schema = scope.schema();
        if aggregated {
            let keys: Vec<Expr> = match &s.group_by {
                Some(GroupBy::Exprs(es)) => {
                    es.iter().map(|e| self.expr(e, &scope, &mut Collect::default())).collect::<Result<_, _>>()?
                }
                Some(GroupBy::All) => {
                    let mut keys: Vec<Expr> = Vec::new();
                    for (e, _) in &items {
                        if !has_marker(e) && !keys.contains(e) {
                            keys.push(e.clone());
                        }
                    }
                    keys
                }
                None => Vec::new(),
            };
            if keys.is_empty() {
                self.scalar_aggregate = true;
            }
            let key_names: Vec<String> = (0..keys.len()).map(|i| format!("key{i}")).collect();
            let agg_names: Vec<String> = (0..coll.aggs.len()).map(|i| format!("agg{i}")).collect();
            let names = key_names.into_iter().chain(agg_names).collect();
            let input_schema = cur_schema.clone();
            plan = self.builder.aggregate(plan, keys.clone(), std::mem::take(&mut coll.aggs), names)?;
            for (e, _) in items.iter_mut() {
                *e = map_post_agg(e, &keys, &input_schema)?;
            }
            for w in windows.iter_mut() {
                w.partition =
                    w.partition.iter().map(|e| map_post_agg(e, &keys, &input_schema)).collect::<Result<_, _>>()?;
                for k in w.order.iter_mut() {
                    k.expr = map_post_agg(&k.expr, &keys, &input_schema)?;
                }
                w.func = match &w.func {
                    WindowFunc::Sum(e) => WindowFunc::Sum(map_post_agg(e, &keys, &input_schema)?),
                    WindowFunc::Count(Some(e)) => WindowFunc::Count(Some(map_post_agg(e, &keys, &input_schema)?)),
                    f => f.clone(),
                };
            }
            if let Some(h) = having {
                let h = map_post_agg(&h, &keys, &input_schema)?;
                plan = self.builder.filter(plan, h)?;
            }
            cur_schema = plan.schema.clone();
        } else if having.is_some() {
            return Err(BindError::Unsupported("HAVING without aggregation".into()));
        }

        let base = cur_schema.arity();
        for (j, w) in windows.into_iter().enumerate() {
            plan = self.builder.window(plan, w.partition, w.order, w.func, format!("win{j}"))?;
        }
        let exprs: Vec<Expr> = items.iter().map(|(e, _)| map_windows(e, base)).collect();
        let names: Vec<String> = items.iter().map(|(_, n)| n.clone()).collect();
        let plan = self.builder.project(plan, exprs, names)?;
        let out_scope = Scope {
            cols: plan
                .schema
                .columns
                .iter()
                .map(|c| ScopeCol { qualifier: None, name: c.name.clone(), ty: c.ty, origin: None })
                .collect(),
        };
        Ok((plan, out_scope))
    }

    fn expr(&mut self, e: &AstExpr, scope: &Scope, coll: &mut Collect) -> Result<Expr, BindError> {
        let bound = match e {
            AstExpr::Column { qualifier, name } => {
                let i = scope.resolve(qualifier.as_deref(), name)?;
                self.use_column(&scope.cols[i]);
                Expr::Column(i)
            }
            AstExpr::Literal(l) => Expr::Literal(literal(l)),
            AstExpr::Unary { op, expr } => Expr::Unary { op: *op, expr: Box::new(self.expr(expr, scope, coll)?) },
            AstExpr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: Box::new(self.expr(left, scope, coll)?),
                right: Box::new(self.expr(right, scope, coll)?),
            },
            AstExpr::IsNull { expr, negated } => {
                Expr::IsNull { expr: Box::new(self.expr(expr, scope, coll)?), negated: *negated }
            }
            AstExpr::Case { branches, else_expr } => {
                let mut bs = Vec::new();
                for (c, r) in branches {
                    bs.push((self.expr(c, scope, coll)?, self.expr(r, scope, coll)?));
                }
                let else_expr = match else_expr {
                    Some(x) => Some(Box::new(self.expr(x, scope, coll)?)),
                    None => None,
                };
                Expr::Case { branches: bs, else_expr }
            }
            AstExpr::DateTrunc { unit, expr } => {
                Expr::Function { func: ScalarFunc::DateTrunc(*unit), args: vec![self.expr(expr, scope, coll)?] }
            }
            AstExpr::Call { name, args, star, over: Some(spec) } => {
                if !coll.allow_window {
                    return Err(BindError::Unsupported(format!("window function {name} is not allowed here")));
                }
                if spec.partition.is_empty() {
                    return Err(BindError::Unsupported("window functions require PARTITION BY".into()));
                }
                let mut inner = Collect { allow_agg: coll.allow_agg, allow_window: false, ..Default::default() };
                inner.aggs = std::mem::take(&mut coll.aggs);
                let mut bind_arg = |b: &mut Self, x: &AstExpr| b.expr(x, scope, &mut inner);
                let func = match (name.as_str(), args.as_slice(), *star) {
                    ("row_number", [], false) => WindowFunc::RowNumber,
                    ("rank", [], false) => WindowFunc::Rank,
                    ("sum", [a], false) => WindowFunc::Sum(bind_arg(self, a)?),
                    ("count", [], true) => WindowFunc::Count(None),
                    ("count", [a], false) => WindowFunc::Count(Some(bind_arg(self, a)?)),
                    _ => return Err(BindError::Unsupported(format!("window function {name}"))),
                };
                let partition =
                    spec.partition.iter().map(|p| bind_arg(self, p)).collect::<Result<Vec<_>, _>>()?;
                let mut order = Vec::new();
                for o in &spec.order {
                    order.push(SortKey { expr: bind_arg(self, &o.expr)?, descending: o.descending });
                }
                coll.aggs = inner.aggs;
                coll.windows.push(WindowCall { func, partition, order });
                Expr::Column(WIN_MARK + coll.windows.len() - 1)
            }
            AstExpr::Call { name, args, star, over: None } => {
                if let Some(func) = is_agg_name(name) {
                    if !coll.allow_agg {
                        return Err(BindError::Unsupported(format!("aggregate {name} is not allowed here")));
                    }
                    let arg = match (func, args.as_slice(), *star) {
                        (AggFunc::Count, [], true) => None,
                        (_, [a], false) => {
                            let mut inner = Collect::default();
                            let bound = self.expr(a, scope, &mut inner).map_err(|e| match e {
                                BindError::Unsupported(m) if m.starts_with("aggregate") => {
                                    BindError::Unsupported("nested aggregates".into())
                                }
                                e => e,
                            })?;
                            Some(bound)
                        }
                        _ => return Err(BindError::Unsupported(format!("wrong arguments to {name}"))),
                    };
                    let call = AggCall { func, arg };
                    crate::algebra::agg_result_type(&call, &scope.schema()).map_err(BindError::TypeMismatch)?;
                    let idx = match coll.aggs.iter().position(|a| *a == call) {
                        Some(i) => i,
                        None => {
                            coll.aggs.push(call);
                            coll.aggs.len() - 1
                        }
                    };
                    return Ok(Expr::Column(AGG_MARK + idx));
                }
                if *star {
                    return Err(BindError::Unsupported(format!("{name}(*)")));
                }
                let func = match name.as_str() {
                    "coalesce" if !args.is_empty() => ScalarFunc::Coalesce,
                    "abs" if args.len() == 1 => ScalarFunc::Abs,
                    _ => return Err(BindError::Unsupported(format!("function {name}"))),
                };
                let args = args.iter().map(|a| self.expr(a, scope, coll)).collect::<Result<_, _>>()?;
                Expr::Function { func, args }
            }
        };
        if !has_marker(&bound) {
            bound.data_type(&scope.schema()).map_err(BindError::TypeMismatch)?;
        }
        Ok(bound)
    }
}

fn split_and<'a>(e: &'a AstExpr, out: &mut Vec<&'a AstExpr>) {
    match e {
        AstExpr::Binary { op: BinaryOp::And, left, right } => {
            split_and(left, out);
            split_and(right, out);
        }
        e => out.push(e),
    }
}
