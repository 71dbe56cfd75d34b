use std::fmt;

use super::Span;
use crate::algebra::{BinaryOp, JoinKind, TimeUnit, UnaryOp};
use crate::types::DataType;

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Null,
    /// `TIMESTAMP <seconds>`
    Timestamp(i64),
    /// `INTERVAL '<n> <unit>'`, in seconds.
    Interval(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: AstExpr,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub partition: Vec<AstExpr>,
    pub order: Vec<OrderItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AstExpr {
    Column { qualifier: Option<String>, name: String },
    Literal(Literal),
    Unary { op: UnaryOp, expr: Box<AstExpr> },
    Binary { op: BinaryOp, left: Box<AstExpr>, right: Box<AstExpr> },
    IsNull { expr: Box<AstExpr>, negated: bool },
    Case { branches: Vec<(AstExpr, AstExpr)>, else_expr: Option<Box<AstExpr>> },
    /// Function or aggregate call; `star` marks `f(*)`.
    Call { name: String, args: Vec<AstExpr>, star: bool, over: Option<WindowSpec> },
    DateTrunc { unit: TimeUnit, expr: Box<AstExpr> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(String),
    Expr { expr: AstExpr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupBy {
    All,
    Exprs(Vec<AstExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableRef {
    Named { name: String, alias: Option<String>, at: Option<i64> },
    Derived { query: Box<Query>, alias: String },
    Join { kind: JoinKind, left: Box<TableRef>, right: Box<TableRef>, on: AstExpr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: Option<TableRef>,
    pub selection: Option<AstExpr>,
    pub group_by: Option<GroupBy>,
    pub having: Option<AstExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Select(Box<Select>),
    UnionAll(Vec<Query>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetLag {
    Seconds(i64),
    Downstream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefreshModeSpec {
    Auto,
    Full,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitializeSpec {
    OnCreate,
    OnSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Table,
    View,
    DynamicTable,
}

impl ObjectKind {
    pub fn sql(self) -> &'static str {
        match self {
            ObjectKind::Table => "TABLE",
            ObjectKind::View => "VIEW",
            ObjectKind::DynamicTable => "DYNAMIC TABLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlterAction {
    Refresh,
    Suspend,
    Resume,
    /// Simulated refresh duration in seconds for the scheduler cost model.
    SetSimulatedDuration(i64),
}

/// Test hooks that break one production validation on the next refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Emit every delta row twice.
    DuplicateDelta,
    /// Append a DELETE for a row id that does not exist.
    DeleteMissing,
    /// Refresh without first refreshing upstream dynamic tables.
    SkipUpstream,
    /// Overwrite one stored value without a refresh.
    CorruptRow,
}

impl FaultKind {
    pub fn sql(self) -> &'static str {
        match self {
            FaultKind::DuplicateDelta => "DUPLICATE_DELTA",
            FaultKind::DeleteMissing => "DELETE_MISSING",
            FaultKind::SkipUpstream => "SKIP_UPSTREAM",
            FaultKind::CorruptRow => "CORRUPT_ROW",
        }
    }

    pub fn parse(s: &str) -> Option<FaultKind> {
        [FaultKind::DuplicateDelta, FaultKind::DeleteMissing, FaultKind::SkipUpstream, FaultKind::CorruptRow]
            .into_iter()
            .find(|f| f.sql().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertSource {
    Values(Vec<Vec<AstExpr>>),
    Query(Query),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatementKind {
    CreateTable { name: String, or_replace: bool, columns: Vec<(String, DataType)> },
    CreateView { name: String, or_replace: bool, query: Query },
    CreateDynamicTable {
        name: String,
        or_replace: bool,
        target_lag: TargetLag,
        refresh_mode: RefreshModeSpec,
        initialize: InitializeSpec,
        query: Query,
    },
    Drop { kind: ObjectKind, name: String },
    Undrop { kind: ObjectKind, name: String },
    Insert { table: String, columns: Option<Vec<String>>, source: InsertSource },
    Delete { table: String, selection: Option<AstExpr> },
    Update { table: String, assignments: Vec<(String, AstExpr)>, selection: Option<AstExpr> },
    AlterDynamicTable { name: String, action: AlterAction },
    Select(Query),
    ShowDynamicTables,
    Validate { name: Option<String> },
    Explain(Query),
    ExplainRefresh { name: String },
    AdvanceTime { seconds: i64 },
    RunScheduler { until: i64 },
    DumpDsg,
    DumpHistory,
    DumpLag,
    CopyInto { table: String, path: String, header: bool },
    InjectFault { fault: FaultKind, target: String },
    SaveSnapshot { path: String },
}

#[derive(Debug, Clone)]
pub struct Statement {
    pub kind: StatementKind,
    pub span: Span,
}

/// Statements compare by content; spans are diagnostics only.
impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "having", "join", "inner", "left", "right", "full", "outer", "on", "as",
    "union", "all", "and", "or", "not", "is", "null", "case", "when", "then", "else", "end", "true", "false", "at",
    "over", "partition", "order", "asc", "desc", "interval", "values", "set",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

pub struct Ident<'a>(pub &'a str);

impl fmt::Display for Ident<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        let plain = !s.is_empty()
            && s.chars().next().is_some_and(|c| c.is_ascii_lowercase() || c == '_')
            && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '$')
            && !is_reserved(s);
        if plain {
            f.write_str(s)
        } else {
            write!(f, "\"{}\"", s.replace('"', "\"\""))
        }
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn join_list<T>(f: &mut fmt::Formatter<'_>, items: &[T], write: impl Fn(&mut fmt::Formatter<'_>, &T) -> fmt::Result) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write(f, it)?;
    }
    Ok(())
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x:?}"),
            Literal::Str(s) => f.write_str(&quote(s)),
            Literal::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
            Literal::Null => f.write_str("NULL"),
            Literal::Timestamp(t) => write!(f, "TIMESTAMP {t}"),
            Literal::Interval(s) => write!(f, "INTERVAL '{s} seconds'"),
        }
    }
}

impl fmt::Display for AstExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AstExpr::Column { qualifier: Some(q), name } => write!(f, "{}.{}", Ident(q), Ident(name)),
            AstExpr::Column { qualifier: None, name } => write!(f, "{}", Ident(name)),
            AstExpr::Literal(l) => write!(f, "{l}"),
            AstExpr::Unary { op: UnaryOp::Not, expr } => write!(f, "(NOT {expr})"),
            AstExpr::Unary { op: UnaryOp::Neg, expr } => write!(f, "(- {expr})"),
            AstExpr::Binary { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            AstExpr::IsNull { expr, negated } => {
                write!(f, "({expr} IS {}NULL)", if *negated { "NOT " } else { "" })
            }
            AstExpr::Case { branches, else_expr } => {
                f.write_str("CASE")?;
                for (c, r) in branches {
                    write!(f, " WHEN {c} THEN {r}")?;
                }
                if let Some(e) = else_expr {
                    write!(f, " ELSE {e}")?;
                }
                f.write_str(" END")
            }
            AstExpr::Call { name, args, star, over } => {
                write!(f, "{}(", name.to_ascii_uppercase())?;
                if *star {
                    f.write_str("*")?;
                } else {
                    join_list(f, args, |f, a| write!(f, "{a}"))?;
                }
                f.write_str(")")?;
                if let Some(w) = over {
                    f.write_str(" OVER (PARTITION BY ")?;
                    join_list(f, &w.partition, |f, a| write!(f, "{a}"))?;
                    if !w.order.is_empty() {
                        f.write_str(" ORDER BY ")?;
                        join_list(f, &w.order, |f, o| write!(f, "{}{}", o.expr, if o.descending { " DESC" } else { "" }))?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            AstExpr::DateTrunc { unit, expr } => write!(f, "DATE_TRUNC({}, {expr})", unit.name()),
        }
    }
}

impl fmt::Display for TableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableRef::Named { name, alias, at } => {
                write!(f, "{}", Ident(name))?;
                if let Some(t) = at {
                    write!(f, " AT(TIMESTAMP => {t})")?;
                }
                if let Some(a) = alias {
                    write!(f, " AS {}", Ident(a))?;
                }
                Ok(())
            }
            TableRef::Derived { query, alias } => write!(f, "({query}) AS {}", Ident(alias)),
            TableRef::Join { kind, left, right, on } => {
                write!(f, "{left} {} JOIN ", kind.name())?;
                match **right {
                    TableRef::Join { .. } => write!(f, "({right})")?,
                    _ => write!(f, "{right}")?,
                }
                write!(f, " ON {on}")
            }
        }
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        join_list(f, &self.items, |f, it| match it {
            SelectItem::Wildcard => f.write_str("*"),
            SelectItem::QualifiedWildcard(q) => write!(f, "{}.*", Ident(q)),
            SelectItem::Expr { expr, alias: Some(a) } => write!(f, "{expr} AS {}", Ident(a)),
            SelectItem::Expr { expr, alias: None } => write!(f, "{expr}"),
        })?;
        if let Some(from) = &self.from {
            write!(f, " FROM {from}")?;
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        match &self.group_by {
            Some(GroupBy::All) => f.write_str(" GROUP BY ALL")?,
            Some(GroupBy::Exprs(es)) => {
                f.write_str(" GROUP BY ")?;
                join_list(f, es, |f, e| write!(f, "{e}"))?;
            }
            None => {}
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Select(s) => write!(f, "{s}"),
            Query::UnionAll(qs) => {
                for (i, q) in qs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" UNION ALL ")?;
                    }
                    match q {
                        Query::UnionAll(_) => write!(f, "({q})")?,
                        Query::Select(_) => write!(f, "{q}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for TargetLag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetLag::Seconds(s) => write!(f, "'{s} seconds'"),
            TargetLag::Downstream => f.write_str("DOWNSTREAM"),
        }
    }
}

impl fmt::Display for StatementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let replace = |r: bool| if r { "OR REPLACE " } else { "" };
        match self {
            StatementKind::CreateTable { name, or_replace, columns } => {
                write!(f, "CREATE {}TABLE {} (", replace(*or_replace), Ident(name))?;
                join_list(f, columns, |f, (n, t)| write!(f, "{} {}", Ident(n), t.sql_name()))?;
                f.write_str(")")
            }
            StatementKind::CreateView { name, or_replace, query } => {
                write!(f, "CREATE {}VIEW {} AS {query}", replace(*or_replace), Ident(name))
            }
            StatementKind::CreateDynamicTable { name, or_replace, target_lag, refresh_mode, initialize, query } => {
                let mode = match refresh_mode {
                    RefreshModeSpec::Auto => "AUTO",
                    RefreshModeSpec::Full => "FULL",
                    RefreshModeSpec::Incremental => "INCREMENTAL",
                };
                let init = match initialize {
                    InitializeSpec::OnCreate => "ON_CREATE",
                    InitializeSpec::OnSchedule => "ON_SCHEDULE",
                };
                write!(
                    f,
                    "CREATE {}DYNAMIC TABLE {} TARGET_LAG = {target_lag} REFRESH_MODE = {mode} INITIALIZE = {init} AS {query}",
                    replace(*or_replace),
                    Ident(name)
                )
            }
            StatementKind::Drop { kind, name } => write!(f, "DROP {} {}", kind.sql(), Ident(name)),
            StatementKind::Undrop { kind, name } => write!(f, "UNDROP {} {}", kind.sql(), Ident(name)),
            StatementKind::Insert { table, columns, source } => {
                write!(f, "INSERT INTO {}", Ident(table))?;
                if let Some(cols) = columns {
                    f.write_str(" (")?;
                    join_list(f, cols, |f, c| write!(f, "{}", Ident(c)))?;
                    f.write_str(")")?;
                }
                match source {
                    InsertSource::Values(rows) => {
                        f.write_str(" VALUES ")?;
                        join_list(f, rows, |f, row| {
                            f.write_str("(")?;
                            join_list(f, row, |f, e| write!(f, "{e}"))?;
                            f.write_str(")")
                        })
                    }
                    InsertSource::Query(q) => write!(f, " {q}"),
                }
            }
            StatementKind::Delete { table, selection } => {
                write!(f, "DELETE FROM {}", Ident(table))?;
                if let Some(w) = selection {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            StatementKind::Update { table, assignments, selection } => {
                write!(f, "UPDATE {} SET ", Ident(table))?;
                join_list(f, assignments, |f, (c, e)| write!(f, "{} = {e}", Ident(c)))?;
                if let Some(w) = selection {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            StatementKind::AlterDynamicTable { name, action } => {
                write!(f, "ALTER DYNAMIC TABLE {} ", Ident(name))?;
                match action {
                    AlterAction::Refresh => f.write_str("REFRESH"),
                    AlterAction::Suspend => f.write_str("SUSPEND"),
                    AlterAction::Resume => f.write_str("RESUME"),
                    AlterAction::SetSimulatedDuration(d) => write!(f, "SET SIMULATED_DURATION = {d}"),
                }
            }
            StatementKind::Select(q) => write!(f, "{q}"),
            StatementKind::ShowDynamicTables => f.write_str("SHOW DYNAMIC TABLES"),
            StatementKind::Validate { name: Some(n) } => write!(f, "VALIDATE {}", Ident(n)),
            StatementKind::Validate { name: None } => f.write_str("VALIDATE"),
            StatementKind::Explain(q) => write!(f, "EXPLAIN {q}"),
            StatementKind::ExplainRefresh { name } => write!(f, "EXPLAIN REFRESH {}", Ident(name)),
            StatementKind::AdvanceTime { seconds } => write!(f, "ADVANCE TIME BY {seconds}"),
            StatementKind::RunScheduler { until } => write!(f, "RUN SCHEDULER UNTIL {until}"),
            StatementKind::DumpDsg => f.write_str("DUMP DSG"),
            StatementKind::DumpHistory => f.write_str("DUMP HISTORY"),
            StatementKind::DumpLag => f.write_str("DUMP LAG"),
            StatementKind::CopyInto { table, path, header } => {
                write!(f, "COPY INTO {} FROM {}{}", Ident(table), quote(path), if *header { " HEADER" } else { "" })
            }
            StatementKind::InjectFault { fault, target } => {
                write!(f, "INJECT FAULT {} ON {}", fault.sql(), Ident(target))
            }
            StatementKind::SaveSnapshot { path } => write!(f, "SAVE SNAPSHOT TO {}", quote(path)),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

/// Renders statements as a script that parses back to the same list.
pub fn unparse(stmts: &[Statement]) -> String {
    stmts.iter().map(|s| format!("{s};\n")).collect()
}
