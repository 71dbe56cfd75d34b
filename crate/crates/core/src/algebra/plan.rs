use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::expr::Expr;
use crate::store::TableId;
use crate::types::{Column, DataType, Schema};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Table,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScanNode {
    pub table: TableId,
    pub name: String,
    pub source: SourceKind,
    /// Time-travel override for interactive queries (data timestamp).
    pub at: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Full,
}

impl JoinKind {
    pub fn name(self) -> &'static str {
        match self {
            JoinKind::Inner => "INNER",
            JoinKind::Left => "LEFT",
            JoinKind::Right => "RIGHT",
            JoinKind::Full => "FULL",
        }
    }

    pub fn pads_left(self) -> bool {
        matches!(self, JoinKind::Left | JoinKind::Full)
    }

    pub fn pads_right(self) -> bool {
        matches!(self, JoinKind::Right | JoinKind::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    CountIf,
    Sum,
    Min,
    Max,
    Avg,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::CountIf => "COUNT_IF",
            AggFunc::Sum => "SUM",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Avg => "AVG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggCall {
    pub func: AggFunc,
    /// `None` only for `COUNT(*)`.
    pub arg: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SortKey {
    pub expr: Expr,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WindowFunc {
    RowNumber,
    Rank,
    Sum(Expr),
    /// `None` counts rows.
    Count(Option<Expr>),
}

impl WindowFunc {
    pub fn name(&self) -> &'static str {
        match self {
            WindowFunc::RowNumber => "ROW_NUMBER",
            WindowFunc::Rank => "RANK",
            WindowFunc::Sum(_) => "SUM",
            WindowFunc::Count(_) => "COUNT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PlanKind {
    Scan(ScanNode),
    /// Constant rows (a SELECT without FROM).
    Values { rows: Vec<Vec<Expr>> },
    Filter { input: Box<Plan>, predicate: Expr },
    Project { input: Box<Plan>, exprs: Vec<Expr> },
    /// `passthrough` keeps input row ids, legal only when the branches' ids
    /// are statically disjoint; otherwise ids are re-derived per branch.
    UnionAll { inputs: Vec<Plan>, passthrough: bool },
    Join { kind: JoinKind, left: Box<Plan>, right: Box<Plan>, keys: Vec<(usize, usize)> },
    Aggregate { input: Box<Plan>, group_keys: Vec<Expr>, aggregates: Vec<AggCall> },
    /// Appends one column computed by `func` over partitions of the input.
    Window { input: Box<Plan>, partition: Vec<Expr>, order: Vec<SortKey>, func: WindowFunc },
}

/// A typed relational-algebra node. `id` is unique within one plan tree and
/// names the operator in row-id prefixes and EXPLAIN output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plan {
    pub id: NodeId,
    pub schema: Schema,
    pub kind: PlanKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("type mismatch at node {node}: {message}")]
pub struct TypeError {
    pub node: NodeId,
    pub message: String,
}

/// The set of row-id producers a plan's output ids can come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origins {
    Known(BTreeSet<String>),
    Unknown,
}

impl Origins {
    fn disjoint(&self, other: &Origins) -> bool {
        match (self, other) {
            (Origins::Known(a), Origins::Known(b)) => a.is_disjoint(b),
            _ => false,
        }
    }

    fn union(self, other: Origins) -> Origins {
        match (self, other) {
            (Origins::Known(mut a), Origins::Known(b)) => {
                a.extend(b);
                Origins::Known(a)
            }
            _ => Origins::Unknown,
        }
    }
}

impl Plan {
    pub fn children(&self) -> Vec<&Plan> {
        match &self.kind {
            PlanKind::Scan(_) | PlanKind::Values { .. } => vec![],
            PlanKind::Filter { input, .. }
            | PlanKind::Project { input, .. }
            | PlanKind::Aggregate { input, .. }
            | PlanKind::Window { input, .. } => vec![input],
            PlanKind::UnionAll { inputs, .. } => inputs.iter().collect(),
            PlanKind::Join { left, right, .. } => vec![left, right],
        }
    }

    /// Pre-order walk.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Plan)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn scans(&self) -> Vec<&ScanNode> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            if let PlanKind::Scan(s) = &p.kind {
                out.push(s);
            }
        });
        out
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn find(&self, id: NodeId) -> Option<&Plan> {
        let mut found = None;
        self.walk(&mut |p| {
            if p.id == id && found.is_none() {
                found = Some(p);
            }
        });
        found
    }

    /// Static row-id origins; DT scans are opaque.
    pub fn origins(&self) -> Origins {
        match &self.kind {
            PlanKind::Scan(s) => match s.source {
                SourceKind::Table => Origins::Known([format!("t{}", s.table)].into()),
                SourceKind::Dynamic => Origins::Unknown,
            },
            PlanKind::Values { .. } => Origins::Known([format!("v{}", self.id)].into()),
            PlanKind::Filter { input, .. } | PlanKind::Project { input, .. } | PlanKind::Window { input, .. } => {
                input.origins()
            }
            PlanKind::Join { .. } => Origins::Known([format!("j{}", self.id)].into()),
            PlanKind::Aggregate { .. } => Origins::Known([format!("g{}", self.id)].into()),
            PlanKind::UnionAll { inputs, passthrough } => {
                if *passthrough {
                    inputs.iter().map(Plan::origins).fold(Origins::Known(BTreeSet::new()), Origins::union)
                } else {
                    Origins::Known([format!("u{}", self.id)].into())
                }
            }
        }
    }

    /// Whether the union of these branches may pass row ids through.
    pub fn branches_disjoint(inputs: &[Plan]) -> bool {
        let origins: Vec<Origins> = inputs.iter().map(Plan::origins).collect();
        for i in 0..origins.len() {
            for j in (i + 1)..origins.len() {
                if !origins[i].disjoint(&origins[j]) {
                    return false;
                }
            }
        }
        true
    }

    /// Re-derives every node's schema, reporting the first inconsistency.
    pub fn typecheck(&self) -> Result<Schema, TypeError> {
        let schema = match &self.kind {
            PlanKind::Scan(_) => self.schema.clone(),
            PlanKind::Values { .. } => self.schema.clone(),
            _ => {
                let children = self.children().into_iter().map(Plan::typecheck).collect::<Result<Vec<_>, _>>()?;
                derive_schema(self.id, &self.kind, &children, &self.schema)?
            }
        };
        let same_types = schema.arity() == self.schema.arity()
            && schema.columns.iter().zip(&self.schema.columns).all(|(a, b)| a.ty == b.ty);
        if !same_types {
            return Err(TypeError { node: self.id, message: format!("annotated schema ({}) differs from derived ({schema})", self.schema) });
        }
        Ok(schema)
    }

    /// Digest of the bound plan; any semantic change yields a new value.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().take(16).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Indented one-node-per-line rendering: `NodeKind [id] (args)`.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        self.explain_into(0, &mut out, &|_| String::new());
        out
    }

    pub fn explain_into(&self, depth: usize, out: &mut String, annotate: &dyn Fn(&Plan) -> String) {
        let _ = write!(out, "{}{} [{}] ({})", "  ".repeat(depth), self.kind_name(), self.id, self.args());
        let note = annotate(self);
        if !note.is_empty() {
            let _ = write!(out, " {note}");
        }
        out.push('\n');
        for c in self.children() {
            c.explain_into(depth + 1, out, annotate);
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            PlanKind::Scan(_) => "Scan",
            PlanKind::Values { .. } => "Values",
            PlanKind::Filter { .. } => "Filter",
            PlanKind::Project { .. } => "Project",
            PlanKind::UnionAll { .. } => "UnionAll",
            PlanKind::Join { .. } => "Join",
            PlanKind::Aggregate { .. } => "Aggregate",
            PlanKind::Window { .. } => "Window",
        }
    }

    fn args(&self) -> String {
        let input_schema = |p: &Plan| p.schema.clone();
        match &self.kind {
            PlanKind::Scan(s) => {
                let kind = match s.source {
                    SourceKind::Table => "table",
                    SourceKind::Dynamic => "dynamic table",
                };
                match s.at {
                    Some(t) => format!("{kind} {} #{} at {t}", s.name, s.table),
                    None => format!("{kind} {} #{}", s.name, s.table),
                }
            }
            PlanKind::Values { rows } => format!("{} row(s)", rows.len()),
            PlanKind::Filter { input, predicate } => predicate.display(&input_schema(input)),
            PlanKind::Project { input, exprs } => {
                let s = input_schema(input);
                exprs
                    .iter()
                    .zip(&self.schema.columns)
                    .map(|(e, c)| format!("{} AS {}", e.display(&s), c.name))
                    .collect::<Vec<_>>()
                    .join(", ")
            }
            PlanKind::UnionAll { passthrough, .. } => {
                if *passthrough {
                    "ids passthrough".into()
                } else {
                    "ids per branch".into()
                }
            }
            PlanKind::Join { kind, left, right, keys } => {
                let conds = keys
                    .iter()
                    .map(|(l, r)| format!("{} = {}", left.schema.columns[*l].name, right.schema.columns[*r].name))
                    .collect::<Vec<_>>()
                    .join(" AND ");
                format!("{} ON {conds}", kind.name())
            }
            PlanKind::Aggregate { input, group_keys, aggregates } => {
                let s = input_schema(input);
                let keys = group_keys.iter().map(|k| k.display(&s)).collect::<Vec<_>>().join(", ");
                let aggs = aggregates
                    .iter()
                    .map(|a| match &a.arg {
                        Some(e) => format!("{}({})", a.func.name(), e.display(&s)),
                        None => format!("{}(*)", a.func.name()),
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("keys [{keys}] aggs [{aggs}]")
            }
            PlanKind::Window { input, partition, order, func } => {
                let s = input_schema(input);
                let part = partition.iter().map(|k| k.display(&s)).collect::<Vec<_>>().join(", ");
                let ord = order
                    .iter()
                    .map(|k| format!("{}{}", k.expr.display(&s), if k.descending { " DESC" } else { "" }))
                    .collect::<Vec<_>>()
                    .join(", ");
                let arg = match func {
                    WindowFunc::Sum(e) | WindowFunc::Count(Some(e)) => e.display(&s),
                    WindowFunc::Count(None) => "*".into(),
                    _ => String::new(),
                };
                format!("{}({arg}) OVER (PARTITION BY {part} ORDER BY [{ord}])", func.name())
            }
        }
    }
}

pub(crate) fn agg_type(call: &AggCall, input: &Schema) -> Result<DataType, String> {
    let arg_ty = match &call.arg {
        Some(e) => Some(e.data_type(input)?),
        None => None,
    };
    match (call.func, arg_ty) {
        (AggFunc::Count, _) => Ok(DataType::Int64),
        (AggFunc::CountIf, Some(DataType::Bool | DataType::Null)) => Ok(DataType::Int64),
        (AggFunc::CountIf, t) => Err(format!("COUNT_IF expects BOOLEAN, found {t:?}")),
        (AggFunc::Sum, Some(t @ (DataType::Int64 | DataType::Float64))) => Ok(t),
        (AggFunc::Sum, Some(DataType::Null)) => Ok(DataType::Int64),
        (AggFunc::Avg, Some(DataType::Int64 | DataType::Float64 | DataType::Null)) => Ok(DataType::Float64),
        (AggFunc::Min | AggFunc::Max, Some(t)) => Ok(t),
        (f, t) => Err(format!("{} cannot aggregate {}", f.name(), t.map_or("*".to_string(), |t| t.to_string()))),
    }
}

pub(crate) fn window_type(func: &WindowFunc, input: &Schema) -> Result<DataType, String> {
    match func {
        WindowFunc::RowNumber | WindowFunc::Rank | WindowFunc::Count(_) => {
            if let WindowFunc::Count(Some(e)) = func {
                e.data_type(input)?;
            }
            Ok(DataType::Int64)
        }
        WindowFunc::Sum(e) => match e.data_type(input)? {
            t @ (DataType::Int64 | DataType::Float64) => Ok(t),
            DataType::Null => Ok(DataType::Int64),
            t => Err(format!("SUM cannot aggregate {t}")),
        },
    }
}

/// Derives a node's output schema from its children, keeping names from
/// `named` where arities agree.
fn derive_schema(id: NodeId, kind: &PlanKind, children: &[Schema], named: &Schema) -> Result<Schema, TypeError> {
    let err = |message: String| TypeError { node: id, message };
    let name = |i: usize, fallback: &str| named.columns.get(i).map_or_else(|| fallback.to_string(), |c| c.name.clone());
    let schema = match kind {
        PlanKind::Scan(_) | PlanKind::Values { .. } => named.clone(),
        PlanKind::Filter { predicate, .. } => {
            match predicate.data_type(&children[0]).map_err(err)? {
                DataType::Bool | DataType::Null => {}
                t => return Err(TypeError { node: id, message: format!("filter predicate is {t}") }),
            }
            children[0].clone()
        }
        PlanKind::Project { exprs, .. } => Schema::new(
            exprs
                .iter()
                .enumerate()
                .map(|(i, e)| Ok(Column::new(name(i, &format!("col{i}")), e.data_type(&children[0]).map_err(err)?)))
                .collect::<Result<_, TypeError>>()?,
        ),
        PlanKind::UnionAll { .. } => {
            let first = &children[0];
            let mut cols = first.columns.clone();
            for other in &children[1..] {
                if other.arity() != first.arity() {
                    return Err(err(format!("UNION ALL arity {} vs {}", first.arity(), other.arity())));
                }
                for (c, o) in cols.iter_mut().zip(&other.columns) {
                    c.ty = c.ty.unify(o.ty).ok_or_else(|| err(format!("UNION ALL mixes {} and {}", c.ty, o.ty)))?;
                }
            }
            for (i, c) in cols.iter_mut().enumerate() {
                c.name = name(i, &c.name);
            }
            Schema::new(cols)
        }
        PlanKind::Join { keys, .. } => {
            let (l, r) = (&children[0], &children[1]);
            for (li, ri) in keys {
                let lt = l.columns.get(*li).ok_or_else(|| err("left key out of range".into()))?.ty;
                let rt = r.columns.get(*ri).ok_or_else(|| err("right key out of range".into()))?.ty;
                if lt.unify(rt).is_none() {
                    return Err(err(format!("join key types {lt} and {rt} are incompatible")));
                }
            }
            let mut s = l.concat(r);
            for (i, c) in s.columns.iter_mut().enumerate() {
                c.name = name(i, &c.name);
            }
            s
        }
        PlanKind::Aggregate { group_keys, aggregates, .. } => {
            let mut cols = Vec::new();
            for (i, k) in group_keys.iter().enumerate() {
                cols.push(Column::new(name(i, &format!("key{i}")), k.data_type(&children[0]).map_err(err)?));
            }
            for (j, a) in aggregates.iter().enumerate() {
                let i = group_keys.len() + j;
                cols.push(Column::new(name(i, a.func.name()), agg_type(a, &children[0]).map_err(err)?));
            }
            Schema::new(cols)
        }
        PlanKind::Window { partition, order, func, .. } => {
            for k in partition {
                k.data_type(&children[0]).map_err(err)?;
            }
            for k in order {
                k.expr.data_type(&children[0]).map_err(err)?;
            }
            let mut s = children[0].clone();
            let i = s.arity();
            s.columns.push(Column::new(name(i, func.name()), window_type(func, &children[0]).map_err(err)?));
            s
        }
    };
    Ok(schema)
}

/// Allocates node ids and builds typed plan nodes.
#[derive(Debug, Default)]
pub struct PlanBuilder {
    next_id: NodeId,
}

impl PlanBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn next(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn scan(&mut self, scan: ScanNode, schema: Schema) -> Plan {
        Plan { id: self.next(), schema, kind: PlanKind::Scan(scan) }
    }

    pub fn values(&mut self, rows: Vec<Vec<Expr>>, names: Vec<String>) -> Result<Plan, TypeError> {
        let id = self.next();
        let empty = Schema::default();
        let mut cols: Vec<Column> = names.into_iter().map(|n| Column::new(n, DataType::Null)).collect();
        for row in &rows {
            for (c, e) in cols.iter_mut().zip(row) {
                let t = e.data_type(&empty).map_err(|m| TypeError { node: id, message: m })?;
                c.ty = c.ty.unify(t).ok_or_else(|| TypeError { node: id, message: format!("VALUES mixes {} and {t}", c.ty) })?;
            }
        }
        Ok(Plan { id, schema: Schema::new(cols), kind: PlanKind::Values { rows } })
    }

    fn build(&mut self, kind: PlanKind, names: Option<Vec<String>>) -> Result<Plan, TypeError> {
        let id = self.next();
        let children: Vec<Schema> = match &kind {
            PlanKind::Filter { input, .. }
            | PlanKind::Project { input, .. }
            | PlanKind::Aggregate { input, .. }
            | PlanKind::Window { input, .. } => vec![input.schema.clone()],
            PlanKind::UnionAll { inputs, .. } => inputs.iter().map(|p| p.schema.clone()).collect(),
            PlanKind::Join { left, right, .. } => vec![left.schema.clone(), right.schema.clone()],
            PlanKind::Scan(_) | PlanKind::Values { .. } => vec![],
        };
        let named = Schema::new(names.unwrap_or_default().into_iter().map(|n| Column::new(n, DataType::Null)).collect());
        let schema = derive_schema(id, &kind, &children, &named)?;
        Ok(Plan { id, schema, kind })
    }

    pub fn filter(&mut self, input: Plan, predicate: Expr) -> Result<Plan, TypeError> {
        self.build(PlanKind::Filter { input: Box::new(input), predicate }, None)
    }

    pub fn project(&mut self, input: Plan, exprs: Vec<Expr>, names: Vec<String>) -> Result<Plan, TypeError> {
        self.build(PlanKind::Project { input: Box::new(input), exprs }, Some(names))
    }

    pub fn union_all(&mut self, inputs: Vec<Plan>) -> Result<Plan, TypeError> {
        let passthrough = Plan::branches_disjoint(&inputs);
        let names = inputs[0].schema.columns.iter().map(|c| c.name.clone()).collect();
        self.build(PlanKind::UnionAll { inputs, passthrough }, Some(names))
    }

    pub fn join(&mut self, kind: JoinKind, left: Plan, right: Plan, keys: Vec<(usize, usize)>) -> Result<Plan, TypeError> {
        self.build(PlanKind::Join { kind, left: Box::new(left), right: Box::new(right), keys }, None)
    }

    pub fn aggregate(
        &mut self,
        input: Plan,
        group_keys: Vec<Expr>,
        aggregates: Vec<AggCall>,
        names: Vec<String>,
    ) -> Result<Plan, TypeError> {
        self.build(PlanKind::Aggregate { input: Box::new(input), group_keys, aggregates }, Some(names))
    }

    pub fn window(
        &mut self,
        input: Plan,
        partition: Vec<Expr>,
        order: Vec<SortKey>,
        func: WindowFunc,
        name: String,
    ) -> Result<Plan, TypeError> {
        let mut names: Vec<String> = input.schema.columns.iter().map(|c| c.name.clone()).collect();
        names.push(name);
        self.build(PlanKind::Window { input: Box::new(input), partition, order, func }, Some(names))
    }
}
