use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{Span, SyntaxError};
use crate::algebra::{BinaryOp, JoinKind, TimeUnit, UnaryOp};
use crate::types::DataType;

/// Parses a whole script. Statements are separated by `;`.
pub fn parse(text: &str) -> Result<Vec<Statement>, SyntaxError> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let mut out = Vec::new();
    loop {
        while p.eat_sym(";") {}
        if p.peek() == &Tok::Eof {
            break;
        }
        out.push(p.statement()?);
        if !p.eat_sym(";") && p.peek() != &Tok::Eof {
            return Err(p.unexpected("';'"));
        }
    }
    Ok(out)
}

/// Parses a standalone query (no trailing `;`).
pub fn parse_query(text: &str) -> Result<Query, SyntaxError> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let q = p.query()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of query"));
    }
    Ok(q)
}

/// Parses `'<n> <unit>'` into seconds.
pub fn parse_duration(text: &str) -> Option<i64> {
    let mut parts = text.split_whitespace();
    let n: i64 = parts.next()?.parse().ok()?;
    let unit = TimeUnit::parse(parts.next()?)?;
    if parts.next().is_some() || n < 0 {
        return None;
    }
    n.checked_mul(unit.seconds())
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        SyntaxError::new(self.span(), format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w == kw)
    }

    fn is_kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Word(w) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&kw.to_ascii_uppercase()))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{sym}'")))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Word(w) if !is_reserved(&w) => {
                self.bump();
                Ok(w)
            }
            Tok::Quoted(w) => {
                self.bump();
                Ok(w)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn is_ident(&self) -> bool {
        match self.peek() {
            Tok::Word(w) => !is_reserved(w),
            Tok::Quoted(_) => true,
            _ => false,
        }
    }

    fn int(&mut self) -> Result<i64, SyntaxError> {
        let neg = self.eat_sym("-");
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(if neg { -i } else { i })
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    fn string(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("string")),
        }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let span = self.span();
        let kind = self.statement_kind()?;
        Ok(Statement { kind, span })
    }

    fn statement_kind(&mut self) -> Result<StatementKind, SyntaxError> {
        if self.is_kw("select") || matches!(self.peek(), Tok::Sym("(")) {
            return Ok(StatementKind::Select(self.query()?));
        }
        let Tok::Word(w) = self.peek().clone() else {
            return Err(self.unexpected("statement"));
        };
        self.bump();
        match w.as_str() {
            "create" => self.create(),
            "drop" | "undrop" => {
                let kind = self.object_kind()?;
                let name = self.ident()?;
                Ok(if w == "drop" { StatementKind::Drop { kind, name } } else { StatementKind::Undrop { kind, name } })
            }
            "insert" => self.insert(),
            "delete" => {
                self.expect_kw("from")?;
                let table = self.ident()?;
                let selection = if self.eat_kw("where") { Some(self.expr()?) } else { None };
                Ok(StatementKind::Delete { table, selection })
            }
            "update" => {
                let table = self.ident()?;
                self.expect_kw("set")?;
                let mut assignments = Vec::new();
                loop {
                    let c = self.ident()?;
                    self.expect_sym("=")?;
                    assignments.push((c, self.expr()?));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                let selection = if self.eat_kw("where") { Some(self.expr()?) } else { None };
                Ok(StatementKind::Update { table, assignments, selection })
            }
            "alter" => {
                self.expect_kw("dynamic")?;
                self.expect_kw("table")?;
                let name = self.ident()?;
                let action = if self.eat_kw("refresh") {
                    AlterAction::Refresh
                } else if self.eat_kw("suspend") {
                    AlterAction::Suspend
                } else if self.eat_kw("resume") {
                    AlterAction::Resume
                } else if self.eat_kw("set") {
                    self.expect_kw("simulated_duration")?;
                    self.expect_sym("=")?;
                    AlterAction::SetSimulatedDuration(self.int()?)
                } else {
                    return Err(self.unexpected("REFRESH, SUSPEND, RESUME or SET"));
                };
                Ok(StatementKind::AlterDynamicTable { name, action })
            }
            "show" => {
                self.expect_kw("dynamic")?;
                self.expect_kw("tables")?;
                Ok(StatementKind::ShowDynamicTables)
            }
            "validate" => {
                let name = if self.is_ident() { Some(self.ident()?) } else { None };
                Ok(StatementKind::Validate { name })
            }
            "explain" => {
                if self.eat_kw("refresh") {
                    Ok(StatementKind::ExplainRefresh { name: self.ident()? })
                } else {
                    Ok(StatementKind::Explain(self.query()?))
                }
            }
            "advance" => {
                self.expect_kw("time")?;
                self.expect_kw("by")?;
                Ok(StatementKind::AdvanceTime { seconds: self.int()? })
            }
            "run" => {
                self.expect_kw("scheduler")?;
                self.expect_kw("until")?;
                Ok(StatementKind::RunScheduler { until: self.int()? })
            }
            "dump" => {
                if self.eat_kw("dsg") {
                    Ok(StatementKind::DumpDsg)
                } else if self.eat_kw("history") {
                    Ok(StatementKind::DumpHistory)
                } else if self.eat_kw("lag") {
                    Ok(StatementKind::DumpLag)
                } else {
                    Err(self.unexpected("DSG, HISTORY or LAG"))
                }
            }
            "copy" => {
                self.expect_kw("into")?;
                let table = self.ident()?;
                self.expect_kw("from")?;
                let path = self.string()?;
                let header = self.eat_kw("header");
                Ok(StatementKind::CopyInto { table, path, header })
            }
            "inject" => {
                self.expect_kw("fault")?;
                let span = self.span();
                let name = match self.bump() {
                    Tok::Word(w) => w,
                    _ => return Err(SyntaxError::new(span, "expected fault kind")),
                };
                let fault = FaultKind::parse(&name).ok_or_else(|| SyntaxError::new(span, format!("unknown fault {name}")))?;
                self.expect_kw("on")?;
                Ok(StatementKind::InjectFault { fault, target: self.ident()? })
            }
            "save" => {
                self.expect_kw("snapshot")?;
                self.expect_kw("to")?;
                Ok(StatementKind::SaveSnapshot { path: self.string()? })
            }
            _ => {
                self.pos -= 1;
                Err(self.unexpected("statement"))
            }
        }
    }

    fn object_kind(&mut self) -> Result<ObjectKind, SyntaxError> {
        if self.eat_kw("table") {
            Ok(ObjectKind::Table)
        } else if self.eat_kw("view") {
            Ok(ObjectKind::View)
        } else if self.eat_kw("dynamic") {
            self.expect_kw("table")?;
            Ok(ObjectKind::DynamicTable)
        } else {
            Err(self.unexpected("TABLE, VIEW or DYNAMIC TABLE"))
        }
    }

    fn create(&mut self) -> Result<StatementKind, SyntaxError> {
        let or_replace = if self.eat_kw("or") {
            self.expect_kw("replace")?;
            true
        } else {
            false
        };
        match self.object_kind()? {
            ObjectKind::Table => {
                let name = self.ident()?;
                self.expect_sym("(")?;
                let mut columns = Vec::new();
                loop {
                    let c = self.ident()?;
                    columns.push((c, self.data_type()?));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(")")?;
                Ok(StatementKind::CreateTable { name, or_replace, columns })
            }
            ObjectKind::View => {
                let name = self.ident()?;
                self.expect_kw("as")?;
                Ok(StatementKind::CreateView { name, or_replace, query: self.query()? })
            }
            ObjectKind::DynamicTable => {
                let name = self.ident()?;
                let mut target_lag = None;
                let mut refresh_mode = RefreshModeSpec::Auto;
                let mut initialize = InitializeSpec::OnCreate;
                while !self.eat_kw("as") {
                    let span = self.span();
                    let opt = match self.bump() {
                        Tok::Word(w) => w,
                        _ => return Err(SyntaxError::new(span, "expected option or AS")),
                    };
                    self.expect_sym("=")?;
                    match opt.as_str() {
                        "target_lag" => {
                            if self.eat_kw("downstream") {
                                target_lag = Some(TargetLag::Downstream);
                            } else {
                                let span = self.span();
                                let s = self.string()?;
                                let secs = parse_duration(&s)
                                    .ok_or_else(|| SyntaxError::new(span, format!("bad target lag '{s}'")))?;
                                target_lag = Some(TargetLag::Seconds(secs));
                            }
                        }
                        "warehouse" => {
                            self.bump();
                        }
                        "refresh_mode" => {
                            refresh_mode = if self.eat_kw("auto") {
                                RefreshModeSpec::Auto
                            } else if self.eat_kw("full") {
                                RefreshModeSpec::Full
                            } else if self.eat_kw("incremental") {
                                RefreshModeSpec::Incremental
                            } else {
                                return Err(self.unexpected("AUTO, FULL or INCREMENTAL"));
                            }
                        }
                        "initialize" => {
                            initialize = if self.eat_kw("on_create") {
                                InitializeSpec::OnCreate
                            } else if self.eat_kw("on_schedule") {
                                InitializeSpec::OnSchedule
                            } else {
                                return Err(self.unexpected("ON_CREATE or ON_SCHEDULE"));
                            }
                        }
                        other => return Err(SyntaxError::new(span, format!("unknown option {other}"))),
                    }
                }
                let target_lag = target_lag.ok_or_else(|| SyntaxError::new(self.span(), "TARGET_LAG is required"))?;
                Ok(StatementKind::CreateDynamicTable {
                    name,
                    or_replace,
                    target_lag,
                    refresh_mode,
                    initialize,
                    query: self.query()?,
                })
            }
        }
    }

    fn data_type(&mut self) -> Result<DataType, SyntaxError> {
        let span = self.span();
        let Tok::Word(w) = self.bump() else {
            return Err(SyntaxError::new(span, "expected type name"));
        };
        match w.as_str() {
            "int" | "integer" | "bigint" | "number" => Ok(DataType::Int64),
            "float" | "double" | "real" => Ok(DataType::Float64),
            "text" | "varchar" | "string" => Ok(DataType::Text),
            "boolean" | "bool" => Ok(DataType::Bool),
            "timestamp" => Ok(DataType::Timestamp),
            _ => Err(SyntaxError::new(span, format!("unknown type {w}"))),
        }
    }

    fn insert(&mut self) -> Result<StatementKind, SyntaxError> {
        self.expect_kw("into")?;
        let table = self.ident()?;
        let columns = if matches!(self.peek(), Tok::Sym("(")) && !self.is_kw_at(1, "select") {
            self.bump();
            let mut cols = vec![self.ident()?];
            while self.eat_sym(",") {
                cols.push(self.ident()?);
            }
            self.expect_sym(")")?;
            Some(cols)
        } else {
            None
        };
        let source = if self.eat_kw("values") {
            let mut rows = Vec::new();
            loop {
                self.expect_sym("(")?;
                let mut row = vec![self.expr()?];
                while self.eat_sym(",") {
                    row.push(self.expr()?);
                }
                self.expect_sym(")")?;
                rows.push(row);
                if !self.eat_sym(",") {
                    break;
                }
            }
            InsertSource::Values(rows)
        } else {
            InsertSource::Query(self.query()?)
        };
        Ok(StatementKind::Insert { table, columns, source })
    }

    fn query(&mut self) -> Result<Query, SyntaxError> {
        let mut terms = vec![self.query_term()?];
        while self.is_kw("union") {
            self.bump();
            self.expect_kw("all")?;
            terms.push(self.query_term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one term") } else { Query::UnionAll(terms) })
    }

    fn query_term(&mut self) -> Result<Query, SyntaxError> {
        if self.eat_sym("(") {
            let q = self.query()?;
            self.expect_sym(")")?;
            return Ok(q);
        }
        Ok(Query::Select(Box::new(self.select()?)))
    }

    fn select(&mut self) -> Result<Select, SyntaxError> {
        self.expect_kw("select")?;
        let mut items = Vec::new();
        loop {
            items.push(self.select_item()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        let from = if self.eat_kw("from") { Some(self.table_ref()?) } else { None };
        let selection = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        let group_by = if self.eat_kw("group") {
            self.expect_kw("by")?;
            if self.eat_kw("all") {
                Some(GroupBy::All)
            } else {
                let mut es = vec![self.expr()?];
                while self.eat_sym(",") {
                    es.push(self.expr()?);
                }
                Some(GroupBy::Exprs(es))
            }
        } else {
            None
        };
        let having = if self.eat_kw("having") { Some(self.expr()?) } else { None };
        Ok(Select { items, from, selection, group_by, having })
    }

    fn select_item(&mut self) -> Result<SelectItem, SyntaxError> {
        if self.eat_sym("*") {
            return Ok(SelectItem::Wildcard);
        }
        if self.is_ident() && matches!(self.peek_at(1), Tok::Sym(".")) && matches!(self.peek_at(2), Tok::Sym("*")) {
            let q = self.ident()?;
            self.bump();
            self.bump();
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> Result<Option<String>, SyntaxError> {
        if self.eat_kw("as") {
            return self.ident().map(Some);
        }
        if self.is_ident() {
            return self.ident().map(Some);
        }
        Ok(None)
    }

    fn table_ref(&mut self) -> Result<TableRef, SyntaxError> {
        let mut left = self.table_factor()?;
        loop {
            let kind = if self.eat_kw("join") {
                JoinKind::Inner
            } else if self.is_kw("inner") {
                self.bump();
                self.expect_kw("join")?;
                JoinKind::Inner
            } else if self.is_kw("left") || self.is_kw("right") || self.is_kw("full") {
                let kind = match self.bump() {
                    Tok::Word(w) if w == "left" => JoinKind::Left,
                    Tok::Word(w) if w == "right" => JoinKind::Right,
                    _ => JoinKind::Full,
                };
                self.eat_kw("outer");
                self.expect_kw("join")?;
                kind
            } else {
                break;
            };
            let right = self.table_factor()?;
            self.expect_kw("on")?;
            let on = self.expr()?;
            left = TableRef::Join { kind, left: Box::new(left), right: Box::new(right), on };
        }
        Ok(left)
    }

    fn table_factor(&mut self) -> Result<TableRef, SyntaxError> {
        if self.eat_sym("(") {
            if self.is_kw("select") || matches!(self.peek(), Tok::Sym("(")) && self.is_subquery_ahead() {
                let query = self.query()?;
                self.expect_sym(")")?;
                self.eat_kw("as");
                let alias = self.ident()?;
                return Ok(TableRef::Derived { query: Box::new(query), alias });
            }
            let t = self.table_ref()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        let name = self.ident()?;
        let at = if self.is_kw("at") && matches!(self.peek_at(1), Tok::Sym("(")) {
            self.bump();
            self.bump();
            self.expect_kw("timestamp")?;
            self.expect_sym("=>")?;
            let t = self.int()?;
            self.expect_sym(")")?;
            Some(t)
        } else {
            None
        };
        let alias = self.alias()?;
        Ok(TableRef::Named { name, alias, at })
    }

    /// After one `(`, whether nested parentheses open a query.
    fn is_subquery_ahead(&self) -> bool {
        let mut n = 0;
        while matches!(self.peek_at(n), Tok::Sym("(")) {
            n += 1;
        }
        self.is_kw_at(n, "select")
    }

    pub fn expr(&mut self) -> Result<AstExpr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.and_expr()?;
        while self.eat_kw("or") {
            let right = self.and_expr()?;
            left = AstExpr::Binary { op: BinaryOp::Or, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.not_expr()?;
        while self.eat_kw("and") {
            let right = self.not_expr()?;
            left = AstExpr::Binary { op: BinaryOp::And, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        if self.eat_kw("not") {
            let e = self.not_expr()?;
            return Ok(AstExpr::Unary { op: UnaryOp::Not, expr: Box::new(e) });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<AstExpr, SyntaxError> {
        let left = self.additive()?;
        if self.is_kw("is") {
            self.bump();
            let negated = self.eat_kw("not");
            self.expect_kw("null")?;
            return Ok(AstExpr::IsNull { expr: Box::new(left), negated });
        }
        let op = match self.peek() {
            Tok::Sym("=") => BinaryOp::Eq,
            Tok::Sym("<>") | Tok::Sym("!=") => BinaryOp::NotEq,
            Tok::Sym("<") => BinaryOp::Lt,
            Tok::Sym("<=") => BinaryOp::LtEq,
            Tok::Sym(">") => BinaryOp::Gt,
            Tok::Sym(">=") => BinaryOp::GtEq,
            _ => return Ok(left),
        };
        self.bump();
        let right = self.additive()?;
        Ok(AstExpr::Binary { op, left: Box::new(left), right: Box::new(right) })
    }

    fn additive(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinaryOp::Add,
                Tok::Sym("-") => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.multiplicative()?;
            left = AstExpr::Binary { op, left: Box::new(left), right: Box::new(right) };
        }
    }

    fn multiplicative(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinaryOp::Mul,
                Tok::Sym("/") => BinaryOp::Div,
                Tok::Sym("%") => BinaryOp::Mod,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.unary()?;
            left = AstExpr::Binary { op, left: Box::new(left), right: Box::new(right) };
        }
    }

    fn unary(&mut self) -> Result<AstExpr, SyntaxError> {
        if self.eat_sym("-") {
            let e = self.unary()?;
            return Ok(AstExpr::Unary { op: UnaryOp::Neg, expr: Box::new(e) });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<AstExpr, SyntaxError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(AstExpr::Literal(Literal::Int(i)))
            }
            Tok::Float(x) => {
                self.bump();
                Ok(AstExpr::Literal(Literal::Float(x)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(AstExpr::Literal(Literal::Str(s)))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Word(w) => match w.as_str() {
                "null" => {
                    self.bump();
                    Ok(AstExpr::Literal(Literal::Null))
                }
                "true" | "false" => {
                    self.bump();
                    Ok(AstExpr::Literal(Literal::Bool(w == "true")))
                }
                "interval" => {
                    self.bump();
                    let span = self.span();
                    let s = self.string()?;
                    let secs =
                        parse_duration(&s).ok_or_else(|| SyntaxError::new(span, format!("bad interval '{s}'")))?;
                    Ok(AstExpr::Literal(Literal::Interval(secs)))
                }
                "timestamp" if matches!(self.peek_at(1), Tok::Int(_)) || matches!(self.peek_at(1), Tok::Sym("-")) => {
                    self.bump();
                    Ok(AstExpr::Literal(Literal::Timestamp(self.int()?)))
                }
                "case" => {
                    self.bump();
                    let mut branches = Vec::new();
                    while self.eat_kw("when") {
                        let c = self.expr()?;
                        self.expect_kw("then")?;
                        branches.push((c, self.expr()?));
                    }
                    if branches.is_empty() {
                        return Err(self.unexpected("WHEN"));
                    }
                    let else_expr = if self.eat_kw("else") { Some(Box::new(self.expr()?)) } else { None };
                    self.expect_kw("end")?;
                    Ok(AstExpr::Case { branches, else_expr })
                }
                _ if matches!(self.peek_at(1), Tok::Sym("(")) && !is_reserved(&w) => self.call(w),
                _ => self.column(),
            },
            Tok::Quoted(_) => self.column(),
            _ => Err(SyntaxError::new(span, format!("expected expression, found {}", self.peek().describe()))),
        }
    }

    fn column(&mut self) -> Result<AstExpr, SyntaxError> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            let name = self.ident()?;
            return Ok(AstExpr::Column { qualifier: Some(first), name });
        }
        Ok(AstExpr::Column { qualifier: None, name: first })
    }

    fn call(&mut self, name: String) -> Result<AstExpr, SyntaxError> {
        self.bump();
        self.expect_sym("(")?;
        if name == "date_trunc" {
            let span = self.span();
            let unit_text = match self.bump() {
                Tok::Word(w) | Tok::Str(w) => w,
                _ => return Err(SyntaxError::new(span, "expected time unit")),
            };
            let unit = TimeUnit::parse(&unit_text)
                .ok_or_else(|| SyntaxError::new(span, format!("unknown time unit {unit_text}")))?;
            self.expect_sym(",")?;
            let expr = self.expr()?;
            self.expect_sym(")")?;
            return Ok(AstExpr::DateTrunc { unit, expr: Box::new(expr) });
        }
        let mut args = Vec::new();
        let mut star = false;
        if self.eat_sym("*") {
            star = true;
        } else if !matches!(self.peek(), Tok::Sym(")")) {
            args.push(self.expr()?);
            while self.eat_sym(",") {
                args.push(self.expr()?);
            }
        }
        self.expect_sym(")")?;
        let over = if self.eat_kw("over") {
            self.expect_sym("(")?;
            let mut partition = Vec::new();
            if self.eat_kw("partition") {
                self.expect_kw("by")?;
                partition.push(self.expr()?);
                while self.eat_sym(",") {
                    partition.push(self.expr()?);
                }
            }
            let mut order = Vec::new();
            if self.eat_kw("order") {
                self.expect_kw("by")?;
                loop {
                    let expr = self.expr()?;
                    let descending = if self.eat_kw("desc") {
                        true
                    } else {
                        self.eat_kw("asc");
                        false
                    };
                    order.push(OrderItem { expr, descending });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            Some(WindowSpec { partition, order })
        } else {
            None
        };
        Ok(AstExpr::Call { name, args, star, over })
    }
}
