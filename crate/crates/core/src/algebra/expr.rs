use std::cmp::Ordering;
use std::fmt::Write as _;

use super::EvalError;
use crate::types::{DataType, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeUnit {
    Second,
    Minute,
    Hour,
    Day,
}

impl TimeUnit {
    pub fn seconds(self) -> i64 {
        match self {
            TimeUnit::Second => 1,
            TimeUnit::Minute => 60,
            TimeUnit::Hour => 3600,
            TimeUnit::Day => 86_400,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeUnit::Second => "second",
            TimeUnit::Minute => "minute",
            TimeUnit::Hour => "hour",
            TimeUnit::Day => "day",
        }
    }

    pub fn parse(s: &str) -> Option<TimeUnit> {
        match s.to_ascii_lowercase().trim_end_matches('s') {
            "second" => Some(TimeUnit::Second),
            "minute" => Some(TimeUnit::Minute),
            "hour" => Some(TimeUnit::Hour),
            "day" => Some(TimeUnit::Day),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScalarFunc {
    Coalesce,
    Abs,
    DateTrunc(TimeUnit),
}

/// A bound scalar expression; columns are referenced by input position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Column(usize),
    Literal(Value),
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr> },
    IsNull { expr: Box<Expr>, negated: bool },
    Case { branches: Vec<(Expr, Expr)>, else_expr: Option<Box<Expr>> },
    Function { func: ScalarFunc, args: Vec<Expr> },
}

impl Expr {
    pub fn col(i: usize) -> Expr {
        Expr::Column(i)
    }

    pub fn lit(v: Value) -> Expr {
        Expr::Literal(v)
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    /// Column indices referenced by the expression.
    pub fn columns(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Column(i) => out.push(*i),
            Expr::Literal(_) => {}
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => expr.columns(out),
            Expr::Binary { left, right, .. } => {
                left.columns(out);
                right.columns(out);
            }
            Expr::Case { branches, else_expr } => {
                for (c, r) in branches {
                    c.columns(out);
                    r.columns(out);
                }
                if let Some(e) = else_expr {
                    e.columns(out);
                }
            }
            Expr::Function { args, .. } => args.iter().for_each(|a| a.columns(out)),
        }
    }

    /// Rewrites column references through `f`.
    pub fn map_columns(&self, f: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Column(i) => Expr::Column(f(*i)),
            Expr::Literal(v) => Expr::Literal(v.clone()),
            Expr::Unary { op, expr } => Expr::Unary { op: *op, expr: Box::new(expr.map_columns(f)) },
            Expr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: Box::new(left.map_columns(f)),
                right: Box::new(right.map_columns(f)),
            },
            Expr::IsNull { expr, negated } => Expr::IsNull { expr: Box::new(expr.map_columns(f)), negated: *negated },
            Expr::Case { branches, else_expr } => Expr::Case {
                branches: branches.iter().map(|(c, r)| (c.map_columns(f), r.map_columns(f))).collect(),
                else_expr: else_expr.as_ref().map(|e| Box::new(e.map_columns(f))),
            },
            Expr::Function { func, args } => Expr::Function {
                func: func.clone(),
                args: args.iter().map(|a| a.map_columns(f)).collect(),
            },
        }
    }

    pub fn data_type(&self, schema: &Schema) -> Result<DataType, String> {
        match self {
            Expr::Column(i) => schema
                .columns
                .get(*i)
                .map(|c| c.ty)
                .ok_or_else(|| format!("column #{i} out of range")),
            Expr::Literal(v) => Ok(v.data_type()),
            Expr::Unary { op: UnaryOp::Not, expr } => {
                let t = expr.data_type(schema)?;
                expect_bool(t, "NOT")?;
                Ok(DataType::Bool)
            }
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                let t = expr.data_type(schema)?;
                if t.is_numeric() || t == DataType::Null {
                    Ok(t)
                } else {
                    Err(format!("cannot negate {t}"))
                }
            }
            Expr::Binary { op, left, right } => {
                let l = left.data_type(schema)?;
                let r = right.data_type(schema)?;
                binary_type(*op, l, r)
            }
            Expr::IsNull { expr, .. } => {
                expr.data_type(schema)?;
                Ok(DataType::Bool)
            }
            Expr::Case { branches, else_expr } => {
                let mut out = DataType::Null;
                for (cond, res) in branches {
                    expect_bool(cond.data_type(schema)?, "CASE WHEN")?;
                    let t = res.data_type(schema)?;
                    out = out.unify(t).ok_or_else(|| format!("CASE branches mix {out} and {t}"))?;
                }
                if let Some(e) = else_expr {
                    let t = e.data_type(schema)?;
                    out = out.unify(t).ok_or_else(|| format!("CASE branches mix {out} and {t}"))?;
                }
                Ok(out)
            }
            Expr::Function { func, args } => {
                let types = args.iter().map(|a| a.data_type(schema)).collect::<Result<Vec<_>, _>>()?;
                match func {
                    ScalarFunc::Coalesce => {
                        let mut out = DataType::Null;
                        for t in types {
                            out = out.unify(t).ok_or_else(|| format!("COALESCE mixes {out} and {t}"))?;
                        }
                        Ok(out)
                    }
                    ScalarFunc::Abs => match types.as_slice() {
                        [t] if t.is_numeric() || *t == DataType::Null => Ok(*t),
                        _ => Err("ABS expects one numeric argument".into()),
                    },
                    ScalarFunc::DateTrunc(_) => match types.as_slice() {
                        [DataType::Timestamp] | [DataType::Null] => Ok(DataType::Timestamp),
                        _ => Err("DATE_TRUNC expects a TIMESTAMP".into()),
                    },
                }
            }
        }
    }

    pub fn eval(&self, row: &[Value]) -> Result<Value, EvalError> {
        match self {
            Expr::Column(i) => Ok(row[*i].clone()),
            Expr::Literal(v) => Ok(v.clone()),
            Expr::Unary { op, expr } => {
                let v = expr.eval(row)?;
                match (op, v) {
                    (_, Value::Null) => Ok(Value::Null),
                    (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (UnaryOp::Neg, Value::Int64(i)) => i.checked_neg().map(Value::Int64).ok_or(EvalError::Overflow),
                    (UnaryOp::Neg, Value::Float64(f)) => Ok(Value::Float64(-f)),
                    (op, v) => Err(EvalError::Type(format!("cannot apply {op:?} to {v}"))),
                }
            }
            Expr::Binary { op: BinaryOp::And, left, right } => {
                let l = truth(&left.eval(row)?)?;
                if l == Some(false) {
                    return Ok(Value::Bool(false));
                }
                let r = truth(&right.eval(row)?)?;
                Ok(match (l, r) {
                    (_, Some(false)) => Value::Bool(false),
                    (Some(true), Some(true)) => Value::Bool(true),
                    _ => Value::Null,
                })
            }
            Expr::Binary { op: BinaryOp::Or, left, right } => {
                let l = truth(&left.eval(row)?)?;
                if l == Some(true) {
                    return Ok(Value::Bool(true));
                }
                let r = truth(&right.eval(row)?)?;
                Ok(match (l, r) {
                    (_, Some(true)) => Value::Bool(true),
                    (Some(false), Some(false)) => Value::Bool(false),
                    _ => Value::Null,
                })
            }
            Expr::Binary { op, left, right } => {
                let l = left.eval(row)?;
                let r = right.eval(row)?;
                eval_binary(*op, l, r)
            }
            Expr::IsNull { expr, negated } => Ok(Value::Bool(expr.eval(row)?.is_null() != *negated)),
            Expr::Case { branches, else_expr } => {
                for (cond, res) in branches {
                    if truth(&cond.eval(row)?)? == Some(true) {
                        return res.eval(row);
                    }
                }
                match else_expr {
                    Some(e) => e.eval(row),
                    None => Ok(Value::Null),
                }
            }
            Expr::Function { func, args } => match func {
                ScalarFunc::Coalesce => {
                    for a in args {
                        let v = a.eval(row)?;
                        if !v.is_null() {
                            return Ok(v);
                        }
                    }
                    Ok(Value::Null)
                }
                ScalarFunc::Abs => match args[0].eval(row)? {
                    Value::Int64(i) => i.checked_abs().map(Value::Int64).ok_or(EvalError::Overflow),
                    Value::Float64(f) => Ok(Value::Float64(f.abs())),
                    v => Ok(v),
                },
                ScalarFunc::DateTrunc(unit) => match args[0].eval(row)? {
                    Value::Timestamp(t) => Ok(Value::Timestamp(t - t.rem_euclid(unit.seconds()))),
                    v => Ok(v),
                },
            },
        }
    }

    /// Evaluates a predicate; NULL counts as false.
    pub fn eval_predicate(&self, row: &[Value]) -> Result<bool, EvalError> {
        Ok(truth(&self.eval(row)?)? == Some(true))
    }

    /// Renders with column names from `schema`.
    pub fn display(&self, schema: &Schema) -> String {
        let mut s = String::new();
        self.write(schema, &mut s);
        s
    }

    fn write(&self, schema: &Schema, out: &mut String) {
        match self {
            Expr::Column(i) => match schema.columns.get(*i) {
                Some(c) => out.push_str(&c.name),
                None => {
                    let _ = write!(out, "#{i}");
                }
            },
            Expr::Literal(Value::Text(s)) => {
                let _ = write!(out, "'{}'", s.replace('\'', "''"));
            }
            Expr::Literal(v) => {
                let _ = write!(out, "{v}");
            }
            Expr::Unary { op, expr } => {
                out.push_str(match op {
                    UnaryOp::Not => "NOT ",
                    UnaryOp::Neg => "-",
                });
                expr.write(schema, out);
            }
            Expr::Binary { op, left, right } => {
                out.push('(');
                left.write(schema, out);
                let _ = write!(out, " {} ", op.symbol());
                right.write(schema, out);
                out.push(')');
            }
            Expr::IsNull { expr, negated } => {
                expr.write(schema, out);
                out.push_str(if *negated { " IS NOT NULL" } else { " IS NULL" });
            }
            Expr::Case { branches, else_expr } => {
                out.push_str("CASE");
                for (c, r) in branches {
                    out.push_str(" WHEN ");
                    c.write(schema, out);
                    out.push_str(" THEN ");
                    r.write(schema, out);
                }
                if let Some(e) = else_expr {
                    out.push_str(" ELSE ");
                    e.write(schema, out);
                }
                out.push_str(" END");
            }
            Expr::Function { func, args } => {
                match func {
                    ScalarFunc::Coalesce => out.push_str("COALESCE("),
                    ScalarFunc::Abs => out.push_str("ABS("),
                    ScalarFunc::DateTrunc(u) => {
                        let _ = write!(out, "DATE_TRUNC({}, ", u.name());
                    }
                }
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.write(schema, out);
                }
                out.push(')');
            }
        }
    }
}

fn expect_bool(t: DataType, ctx: &str) -> Result<(), String> {
    match t {
        DataType::Bool | DataType::Null => Ok(()),
        t => Err(format!("{ctx} expects BOOLEAN, found {t}")),
    }
}

fn binary_type(op: BinaryOp, l: DataType, r: DataType) -> Result<DataType, String> {
    use DataType::*;
    let mismatch = || format!("operator {} cannot combine {l} and {r}", op.symbol());
    match op {
        BinaryOp::And | BinaryOp::Or => {
            expect_bool(l, op.symbol())?;
            expect_bool(r, op.symbol())?;
            Ok(Bool)
        }
        _ if op.is_comparison() => l.unify(r).map(|_| Bool).ok_or_else(mismatch),
        BinaryOp::Sub if l == Timestamp && r == Timestamp => Ok(Int64),
        BinaryOp::Add | BinaryOp::Sub if l == Timestamp && matches!(r, Int64 | Null) => Ok(Timestamp),
        BinaryOp::Add if r == Timestamp && matches!(l, Int64 | Null) => Ok(Timestamp),
        _ => match l.unify(r) {
            Some(t @ (Int64 | Float64)) => Ok(t),
            Some(Null) => Ok(Null),
            _ => Err(mismatch()),
        },
    }
}

fn truth(v: &Value) -> Result<Option<bool>, EvalError> {
    match v {
        Value::Bool(b) => Ok(Some(*b)),
        Value::Null => Ok(None),
        v => Err(EvalError::Type(format!("expected BOOLEAN, found {v}"))),
    }
}

fn eval_binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, EvalError> {
    if l.is_null() || r.is_null() {
        return Ok(Value::Null);
    }
    if op.is_comparison() {
        let ord = l.sql_cmp(&r).ok_or_else(|| EvalError::Type(format!("cannot compare {l} and {r}")))?;
        let b = match op {
            BinaryOp::Eq => ord == Ordering::Equal,
            BinaryOp::NotEq => ord != Ordering::Equal,
            BinaryOp::Lt => ord == Ordering::Less,
            BinaryOp::LtEq => ord != Ordering::Greater,
            BinaryOp::Gt => ord == Ordering::Greater,
            BinaryOp::GtEq => ord != Ordering::Less,
            _ => unreachable!(),
        };
        return Ok(Value::Bool(b));
    }
    match (l, r) {
        (Value::Int64(a), Value::Int64(b)) => int_arith(op, a, b).map(Value::Int64),
        (Value::Timestamp(a), Value::Timestamp(b)) if op == BinaryOp::Sub => {
            a.checked_sub(b).map(Value::Int64).ok_or(EvalError::Overflow)
        }
        (Value::Timestamp(a), Value::Int64(b)) | (Value::Int64(b), Value::Timestamp(a))
            if matches!(op, BinaryOp::Add | BinaryOp::Sub) =>
        {
            int_arith(op, a, b).map(Value::Timestamp)
        }
        (a, b) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => float_arith(op, x, y).map(Value::Float64),
            _ => Err(EvalError::Type(format!("cannot apply {} to {a} and {b}", op.symbol()))),
        },
    }
}

fn int_arith(op: BinaryOp, a: i64, b: i64) -> Result<i64, EvalError> {
    match op {
        BinaryOp::Add => a.checked_add(b).ok_or(EvalError::Overflow),
        BinaryOp::Sub => a.checked_sub(b).ok_or(EvalError::Overflow),
        BinaryOp::Mul => a.checked_mul(b).ok_or(EvalError::Overflow),
        BinaryOp::Div if b == 0 => Err(EvalError::DivisionByZero),
        BinaryOp::Div => a.checked_div(b).ok_or(EvalError::Overflow),
        BinaryOp::Mod if b == 0 => Err(EvalError::DivisionByZero),
        BinaryOp::Mod => a.checked_rem(b).ok_or(EvalError::Overflow),
        _ => unreachable!("non-arithmetic operator"),
    }
}

fn float_arith(op: BinaryOp, a: f64, b: f64) -> Result<f64, EvalError> {
    match op {
        BinaryOp::Add => Ok(a + b),
        BinaryOp::Sub => Ok(a - b),
        BinaryOp::Mul => Ok(a * b),
        BinaryOp::Div | BinaryOp::Mod if b == 0.0 => Err(EvalError::DivisionByZero),
        BinaryOp::Div => Ok(a / b),
        BinaryOp::Mod => Ok(a % b),
        _ => unreachable!("non-arithmetic operator"),
    }
}
