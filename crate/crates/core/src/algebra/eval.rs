use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use super::expr::Expr;
use super::plan::{AggCall, AggFunc, JoinKind, NodeId, Plan, PlanKind, ScanNode, SortKey, WindowFunc};
use super::EvalError;
use crate::store::{Row, RowId, RowMap, Store, TableId, VersionId};
use crate::types::{DataType, Schema, Value};

/// Which version each scan reads. Per-node entries override per-table ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionBinding {
    pub tables: BTreeMap<TableId, VersionId>,
    pub nodes: BTreeMap<NodeId, VersionId>,
}

impl VersionBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, table: TableId, version: VersionId) {
        self.tables.insert(table, version);
    }

    pub fn version_for(&self, node: NodeId, scan: &ScanNode) -> Result<VersionId, EvalError> {
        self.nodes
            .get(&node)
            .or_else(|| self.tables.get(&scan.table))
            .copied()
            .ok_or(EvalError::MissingBinding(scan.table))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Relation {
    pub fn sorted(mut self) -> Self {
        self.rows.sort();
        self
    }

    pub fn into_map(self) -> RowMap {
        self.rows.into_iter().map(|r| (r.row_id, r.values)).collect()
    }

    /// User-visible contents as a sorted multiset, ignoring row ids.
    pub fn contents(&self) -> Vec<Vec<Value>> {
        let mut v: Vec<Vec<Value>> = self.rows.iter().map(|r| r.values.clone()).collect();
        v.sort();
        v
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct EvalStats {
    pub rows_scanned: u64,
}

/// Batch evaluator over committed store versions.
pub struct Evaluator<'a> {
    store: &'a Store,
    scanned: Cell<u64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(store: &'a Store) -> Self {
        Evaluator { store, scanned: Cell::new(0) }
    }

    pub fn store(&self) -> &'a Store {
        self.store
    }

    pub fn stats(&self) -> EvalStats {
        EvalStats { rows_scanned: self.scanned.get() }
    }

    pub fn add_scanned(&self, n: usize) {
        self.scanned.set(self.scanned.get() + n as u64);
    }

    pub fn evaluate(&self, plan: &Plan, binding: &VersionBinding) -> Result<Relation, EvalError> {
        Ok(Relation { schema: plan.schema.clone(), rows: self.eval_rows(plan, binding)? })
    }

    pub fn scan(&self, plan: &Plan, scan: &ScanNode, binding: &VersionBinding) -> Result<Vec<Row>, EvalError> {
        let v = binding.version_for(plan.id, scan)?;
        let rows = self.store.table(scan.table)?.rows_at(v)?;
        self.add_scanned(rows.len());
        Ok(rows.iter().map(|(id, vals)| Row::new(*id, vals.clone())).collect())
    }

    pub fn eval_rows(&self, plan: &Plan, binding: &VersionBinding) -> Result<Vec<Row>, EvalError> {
        match &plan.kind {
            PlanKind::Scan(scan) => self.scan(plan, scan, binding),
            PlanKind::Values { rows } => rows
                .iter()
                .enumerate()
                .map(|(i, exprs)| {
                    let values = exprs.iter().map(|e| e.eval(&[])).collect::<Result<Vec<_>, _>>()?;
                    Ok(Row::new(RowId::values_row(plan.id as u64, i), coerce_row(values, &plan.schema)))
                })
                .collect(),
            PlanKind::Filter { input, predicate } => {
                let rows = self.eval_rows(input, binding)?;
                filter_rows(rows, predicate)
            }
            PlanKind::Project { input, exprs } => {
                let rows = self.eval_rows(input, binding)?;
                rows.into_iter().map(|r| project_row(r, exprs)).collect()
            }
            PlanKind::UnionAll { inputs, passthrough } => {
                let mut out = Vec::new();
                for (branch, input) in inputs.iter().enumerate() {
                    for r in self.eval_rows(input, binding)? {
                        out.push(union_row(plan, branch, *passthrough, r));
                    }
                }
                Ok(out)
            }
            PlanKind::Join { kind, left, right, keys } => {
                let spec = JoinSpec::new(plan.id, *kind, left, right, keys);
                let l = self.eval_rows(left, binding)?;
                let r = self.eval_rows(right, binding)?;
                Ok(spec.join(&l, &r))
            }
            PlanKind::Aggregate { input, group_keys, aggregates } => {
                let rows = self.eval_rows(input, binding)?;
                aggregate_rows(plan.id, group_keys, aggregates, &plan.schema, rows)
            }
            PlanKind::Window { input, partition, order, func } => {
                let rows = self.eval_rows(input, binding)?;
                window_rows(partition, order, func, rows)
            }
        }
    }
}

pub(crate) fn filter_rows(rows: Vec<Row>, predicate: &Expr) -> Result<Vec<Row>, EvalError> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        if predicate.eval_predicate(&r.values)? {
            out.push(r);
        }
    }
    Ok(out)
}

pub(crate) fn project_row(r: Row, exprs: &[Expr]) -> Result<Row, EvalError> {
    let values = exprs.iter().map(|e| e.eval(&r.values)).collect::<Result<Vec<_>, _>>()?;
    Ok(Row::new(r.row_id, values))
}

pub(crate) fn union_row(plan: &Plan, branch: usize, passthrough: bool, r: Row) -> Row {
    let id = if passthrough { r.row_id } else { RowId::union(plan.id as u64, branch, r.row_id) };
    Row::new(id, coerce_row(r.values, &plan.schema))
}

/// Widens Int64 values into Float64 columns so equal numbers compare equal.
pub fn coerce_row(values: Vec<Value>, schema: &Schema) -> Vec<Value> {
    values
        .into_iter()
        .zip(&schema.columns)
        .map(|(v, c)| match (v, c.ty) {
            (Value::Int64(i), DataType::Float64) => Value::Float64(i as f64),
            (v, _) => v,
        })
        .collect()
}

fn normalize_key(v: &Value, widen: bool) -> Value {
    match v {
        Value::Int64(i) if widen => Value::Float64(*i as f64),
        Value::Float64(f) if *f == 0.0 => Value::Float64(0.0),
        v => v.clone(),
    }
}

/// Equi-join of two inputs; shared by batch and delta evaluation.
#[derive(Debug, Clone)]
pub struct JoinSpec {
    pub node: NodeId,
    pub kind: JoinKind,
    pub left_keys: Vec<usize>,
    pub right_keys: Vec<usize>,
    widen: Vec<bool>,
    pub left_arity: usize,
    pub right_arity: usize,
}

impl JoinSpec {
    pub fn new(node: NodeId, kind: JoinKind, left: &Plan, right: &Plan, keys: &[(usize, usize)]) -> Self {
        let widen = keys
            .iter()
            .map(|(l, r)| {
                left.schema.columns[*l].ty.unify(right.schema.columns[*r].ty) == Some(DataType::Float64)
            })
            .collect();
        JoinSpec {
            node,
            kind,
            left_keys: keys.iter().map(|k| k.0).collect(),
            right_keys: keys.iter().map(|k| k.1).collect(),
            widen,
            left_arity: left.schema.arity(),
            right_arity: right.schema.arity(),
        }
    }

    fn key(&self, values: &[Value], idx: &[usize]) -> Option<Vec<Value>> {
        let mut key = Vec::with_capacity(idx.len());
        for (i, w) in idx.iter().zip(&self.widen) {
            let v = &values[*i];
            if v.is_null() {
                return None;
            }
            key.push(normalize_key(v, *w));
        }
        Some(key)
    }

    /// Join key of a left row; `None` when any key column is NULL.
    pub fn left_key(&self, values: &[Value]) -> Option<Vec<Value>> {
        self.key(values, &self.left_keys)
    }

    pub fn right_key(&self, values: &[Value]) -> Option<Vec<Value>> {
        self.key(values, &self.right_keys)
    }

    /// Output row for a match or a padded side.
    pub fn combine(&self, l: Option<&Row>, r: Option<&Row>) -> Row {
        let mut values = Vec::with_capacity(self.left_arity + self.right_arity);
        match l {
            Some(l) => values.extend(l.values.iter().cloned()),
            None => values.extend(std::iter::repeat(Value::Null).take(self.left_arity)),
        }
        match r {
            Some(r) => values.extend(r.values.iter().cloned()),
            None => values.extend(std::iter::repeat(Value::Null).take(self.right_arity)),
        }
        Row::new(RowId::join(self.node as u64, l.map(|x| x.row_id), r.map(|x| x.row_id)), values)
    }

    pub fn index<'r>(&self, rows: &'r [Row], left_side: bool) -> HashMap<Vec<Value>, Vec<&'r Row>> {
        let mut idx: HashMap<Vec<Value>, Vec<&Row>> = HashMap::new();
        for r in rows {
            let k = if left_side { self.left_key(&r.values) } else { self.right_key(&r.values) };
            if let Some(k) = k {
                idx.entry(k).or_default().push(r);
            }
        }
        idx
    }

    /// Matching pairs only.
    pub fn inner(&self, left: &[Row], right: &[Row]) -> Vec<Row> {
        let idx = self.index(right, false);
        let mut out = Vec::new();
        for l in left {
            if let Some(ms) = self.left_key(&l.values).and_then(|k| idx.get(&k)) {
                for r in ms {
                    out.push(self.combine(Some(l), Some(r)));
                }
            }
        }
        out
    }

    /// Full join semantics for `self.kind`.
    pub fn join(&self, left: &[Row], right: &[Row]) -> Vec<Row> {
        let idx = self.index(right, false);
        let mut matched_right: HashMap<RowId, ()> = HashMap::new();
        let mut out = Vec::new();
        for l in left {
            let ms = self.left_key(&l.values).and_then(|k| idx.get(&k));
            match ms {
                Some(ms) => {
                    for r in ms {
                        out.push(self.combine(Some(l), Some(r)));
                        if self.kind.pads_right() {
                            matched_right.insert(r.row_id, ());
                        }
                    }
                }
                None if self.kind.pads_left() => out.push(self.combine(Some(l), None)),
                None => {}
            }
        }
        if self.kind.pads_right() {
            for r in right {
                if !matched_right.contains_key(&r.row_id) {
                    out.push(self.combine(None, Some(r)));
                }
            }
        }
        out
    }
}

/// Evaluated group key of a row.
pub fn group_key(keys: &[Expr], values: &[Value]) -> Result<Vec<Value>, EvalError> {
    keys.iter().map(|k| k.eval(values).map(|v| normalize_key(&v, false))).collect()
}

/// Grouped aggregation. With no group keys the result is one row even over
/// empty input.
pub fn aggregate_rows(
    node: NodeId,
    group_keys: &[Expr],
    aggregates: &[AggCall],
    schema: &Schema,
    mut rows: Vec<Row>,
) -> Result<Vec<Row>, EvalError> {
    // Row-id order makes floating-point sums independent of input order.
    rows.sort_by(|a, b| a.row_id.cmp(&b.row_id));
    let mut groups: BTreeMap<Vec<Value>, Vec<&Row>> = BTreeMap::new();
    for r in &rows {
        groups.entry(group_key(group_keys, &r.values)?).or_default().push(r);
    }
    if group_keys.is_empty() && groups.is_empty() {
        groups.insert(Vec::new(), Vec::new());
    }
    let mut out = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let mut values = key.clone();
        for (i, call) in aggregates.iter().enumerate() {
            let ty = schema.columns[group_keys.len() + i].ty;
            values.push(aggregate(call, ty, &members)?);
        }
        out.push(Row::new(RowId::group(node as u64, &key), coerce_row(values, schema)));
    }
    Ok(out)
}

fn aggregate(call: &AggCall, ty: DataType, rows: &[&Row]) -> Result<Value, EvalError> {
    let args = |r: &Row| -> Result<Value, EvalError> {
        match &call.arg {
            Some(e) => e.eval(&r.values),
            None => Ok(Value::Int64(1)),
        }
    };
    match call.func {
        AggFunc::Count => {
            let mut n = 0i64;
            for r in rows {
                if !args(r)?.is_null() {
                    n += 1;
                }
            }
            Ok(Value::Int64(n))
        }
        AggFunc::CountIf => {
            let mut n = 0i64;
            for r in rows {
                if args(r)? == Value::Bool(true) {
                    n += 1;
                }
            }
            Ok(Value::Int64(n))
        }
        AggFunc::Sum | AggFunc::Avg => {
            let mut int_sum: Option<i64> = None;
            let mut float_sum: Option<f64> = None;
            let mut count = 0i64;
            for r in rows {
                match args(r)? {
                    Value::Null => continue,
                    Value::Int64(i) if ty == DataType::Int64 => {
                        int_sum = Some(int_sum.unwrap_or(0).checked_add(i).ok_or(EvalError::Overflow)?);
                    }
                    v => {
                        let f = v.as_f64().ok_or_else(|| EvalError::Type(format!("cannot sum {v}")))?;
                        float_sum = Some(float_sum.unwrap_or(0.0) + f);
                    }
                }
                count += 1;
            }
            if call.func == AggFunc::Sum {
                return Ok(match (int_sum, float_sum) {
                    (Some(i), None) => Value::Int64(i),
                    (i, Some(f)) => Value::Float64(f + i.unwrap_or(0) as f64),
                    (None, None) => Value::Null,
                });
            }
            if count == 0 {
                return Ok(Value::Null);
            }
            let total = float_sum.unwrap_or(0.0) + int_sum.unwrap_or(0) as f64;
            Ok(Value::Float64(total / count as f64))
        }
        AggFunc::Min | AggFunc::Max => {
            let mut best: Option<Value> = None;
            for r in rows {
                let v = args(r)?;
                if v.is_null() {
                    continue;
                }
                best = Some(match best {
                    None => v,
                    Some(b) => {
                        let ord = v.sql_cmp(&b).unwrap_or(Ordering::Equal);
                        let take = if call.func == AggFunc::Min { ord == Ordering::Less } else { ord == Ordering::Greater };
                        if take {
                            v
                        } else {
                            b
                        }
                    }
                });
            }
            Ok(best.unwrap_or(Value::Null))
        }
    }
}

fn compare_sort_keys(a: &[Value], b: &[Value], order: &[SortKey]) -> Ordering {
    for ((x, y), k) in a.iter().zip(b).zip(order) {
        let o = x.cmp(y);
        let o = if k.descending { o.reverse() } else { o };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Appends the window column. Rows keep their ids; ordering ties are broken
/// by row id. With ORDER BY, SUM and COUNT use a cumulative row frame;
/// without it they span the whole partition.
pub fn window_rows(
    partition: &[Expr],
    order: &[SortKey],
    func: &WindowFunc,
    rows: Vec<Row>,
) -> Result<Vec<Row>, EvalError> {
    let mut parts: BTreeMap<Vec<Value>, Vec<(Vec<Value>, Row)>> = BTreeMap::new();
    for r in rows {
        let pk = group_key(partition, &r.values)?;
        let ok = order.iter().map(|k| k.expr.eval(&r.values)).collect::<Result<Vec<_>, _>>()?;
        parts.entry(pk).or_default().push((ok, r));
    }
    let mut out = Vec::new();
    for (_, mut members) in parts {
        members.sort_by(|(ka, ra), (kb, rb)| compare_sort_keys(ka, kb, order).then(ra.row_id.cmp(&rb.row_id)));
        let arg = |r: &Row| -> Result<Value, EvalError> {
            match func {
                WindowFunc::Sum(e) | WindowFunc::Count(Some(e)) => e.eval(&r.values),
                _ => Ok(Value::Int64(1)),
            }
        };
        let args = members.iter().map(|(_, r)| arg(r)).collect::<Result<Vec<_>, _>>()?;
        let cumulative = !order.is_empty();
        let whole = match func {
            WindowFunc::Sum(_) => sum_values(&args)?,
            WindowFunc::Count(_) => Value::Int64(args.iter().filter(|v| !v.is_null()).count() as i64),
            _ => Value::Null,
        };
        let mut rank = 0i64;
        for i in 0..members.len() {
            let v = match func {
                WindowFunc::RowNumber => Value::Int64(i as i64 + 1),
                WindowFunc::Rank => {
                    if i == 0 || compare_sort_keys(&members[i - 1].0, &members[i].0, order) != Ordering::Equal {
                        rank = i as i64 + 1;
                    }
                    Value::Int64(rank)
                }
                WindowFunc::Sum(_) if cumulative => sum_values(&args[..=i])?,
                WindowFunc::Count(_) if cumulative => {
                    Value::Int64(args[..=i].iter().filter(|v| !v.is_null()).count() as i64)
                }
                _ => whole.clone(),
            };
            let (_, r) = &members[i];
            let mut values = r.values.clone();
            values.push(v);
            out.push(Row::new(r.row_id, values));
        }
    }
    Ok(out)
}

fn sum_values(vals: &[Value]) -> Result<Value, EvalError> {
    let mut acc: Option<Value> = None;
    for v in vals {
        acc = match (acc, v) {
            (a, Value::Null) => a,
            (None, v) => Some(v.clone()),
            (Some(Value::Int64(a)), Value::Int64(b)) => Some(Value::Int64(a.checked_add(*b).ok_or(EvalError::Overflow)?)),
            (Some(a), b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => Some(Value::Float64(x + y)),
                _ => return Err(EvalError::Type(format!("cannot sum {a} and {b}"))),
            },
        };
    }
    Ok(acc.unwrap_or(Value::Null))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{BinaryOp, PlanBuilder, SourceKind};
    use crate::store::{Action, ChangeSet, Hlc, TableKind};
    use crate::types::Column;

    fn int_schema(names: &[&str]) -> Schema {
        Schema::new(names.iter().map(|n| Column::new(*n, DataType::Int64)).collect())
    }

    fn load(store: &mut Store, id: TableId, name: &str, schema: Schema, rows: Vec<Vec<Value>>) {
        let t = store.create_table(id, name, TableKind::Base, schema, Hlc::new(0, 0));
        let mut cs = ChangeSet::new();
        for r in rows {
            let rid = t.next_row_id();
            cs.push(Action::Insert, Row::new(rid, r));
        }
        t.commit(cs, Hlc::new(1, 0), None).unwrap();
    }

    fn scan(b: &mut PlanBuilder, store: &Store, id: TableId) -> Plan {
        let t = store.table(id).unwrap();
        b.scan(
            ScanNode { table: id, name: t.name.clone(), source: SourceKind::Table, at: None },
            (**t.schema()).clone(),
        )
    }

    fn ints(v: &[i64]) -> Vec<Value> {
        v.iter().map(|i| Value::Int64(*i)).collect()
    }

    fn binding(ids: &[TableId]) -> VersionBinding {
        let mut b = VersionBinding::new();
        for id in ids {
            b.bind(*id, 1);
        }
        b
    }

    #[test]
    fn filter_keeps_matching_rows_and_ids() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![ints(&[1]), ints(&[2]), ints(&[3])]);
        let mut b = PlanBuilder::new();
        let s = scan(&mut b, &store, 1);
        let p = b.filter(s, Expr::binary(BinaryOp::Gt, Expr::col(0), Expr::lit(Value::Int64(1)))).unwrap();
        let ev = Evaluator::new(&store);
        let rel = ev.evaluate(&p, &binding(&[1])).unwrap();
        assert_eq!(rel.contents(), vec![ints(&[2]), ints(&[3])]);
        assert_eq!(rel.rows[0].row_id, RowId::table(1, 2));
        assert_eq!(ev.stats().rows_scanned, 3);
    }

    #[test]
    fn left_join_pads_missing_right() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![ints(&[1])]);
        load(&mut store, 2, "u", int_schema(&["b"]), vec![]);
        let mut b = PlanBuilder::new();
        let l = scan(&mut b, &store, 1);
        let r = scan(&mut b, &store, 2);
        let j = b.join(JoinKind::Left, l, r, vec![(0, 0)]).unwrap();
        let rel = Evaluator::new(&store).evaluate(&j, &binding(&[1, 2])).unwrap();
        assert_eq!(rel.contents(), vec![vec![Value::Int64(1), Value::Null]]);
        assert_eq!(rel.rows[0].row_id, RowId::join(j.id as u64, Some(RowId::table(1, 1)), None));
    }

    #[test]
    fn full_join_pads_both_sides() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![ints(&[1]), ints(&[2])]);
        load(&mut store, 2, "u", int_schema(&["b"]), vec![ints(&[2]), ints(&[3])]);
        let mut b = PlanBuilder::new();
        let l = scan(&mut b, &store, 1);
        let r = scan(&mut b, &store, 2);
        let j = b.join(JoinKind::Full, l, r, vec![(0, 0)]).unwrap();
        let rel = Evaluator::new(&store).evaluate(&j, &binding(&[1, 2])).unwrap();
        assert_eq!(
            rel.contents(),
            vec![
                vec![Value::Null, Value::Int64(3)],
                vec![Value::Int64(1), Value::Null],
                vec![Value::Int64(2), Value::Int64(2)],
            ]
        );
    }

    #[test]
    fn null_keys_never_match() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![vec![Value::Null]]);
        load(&mut store, 2, "u", int_schema(&["b"]), vec![vec![Value::Null]]);
        let mut b = PlanBuilder::new();
        let l = scan(&mut b, &store, 1);
        let r = scan(&mut b, &store, 2);
        let j = b.join(JoinKind::Inner, l, r, vec![(0, 0)]).unwrap();
        assert!(Evaluator::new(&store).evaluate(&j, &binding(&[1, 2])).unwrap().rows.is_empty());
    }

    #[test]
    fn grouped_aggregate_counts_late_arrivals() {
        // arrivals(train, delay): one train late out of three.
        let mut store = Store::new();
        load(
            &mut store,
            1,
            "arrivals",
            int_schema(&["train", "delay"]),
            vec![ints(&[7, 0]), ints(&[7, 12]), ints(&[7, 1])],
        );
        let mut b = PlanBuilder::new();
        let s = scan(&mut b, &store, 1);
        let late = Expr::binary(BinaryOp::Gt, Expr::col(1), Expr::lit(Value::Int64(5)));
        let agg = b
            .aggregate(
                s,
                vec![Expr::col(0)],
                vec![AggCall { func: AggFunc::CountIf, arg: Some(late) }],
                vec!["train".into(), "num_delays".into()],
            )
            .unwrap();
        let rel = Evaluator::new(&store).evaluate(&agg, &binding(&[1])).unwrap();
        assert_eq!(rel.contents(), vec![ints(&[7, 1])]);
        assert_eq!(rel.rows[0].row_id, RowId::group(agg.id as u64, &ints(&[7])));
    }

    #[test]
    fn scalar_aggregate_over_empty_input_yields_one_row() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![]);
        let mut b = PlanBuilder::new();
        let s = scan(&mut b, &store, 1);
        let agg = b
            .aggregate(
                s,
                vec![],
                vec![AggCall { func: AggFunc::Count, arg: None }, AggCall { func: AggFunc::Sum, arg: Some(Expr::col(0)) }],
                vec!["n".into(), "s".into()],
            )
            .unwrap();
        let rel = Evaluator::new(&store).evaluate(&agg, &binding(&[1])).unwrap();
        assert_eq!(rel.contents(), vec![vec![Value::Int64(0), Value::Null]]);
    }

    #[test]
    fn window_functions_by_partition() {
        let mut store = Store::new();
        load(
            &mut store,
            1,
            "t",
            int_schema(&["k", "v"]),
            vec![ints(&[1, 10]), ints(&[1, 10]), ints(&[1, 5]), ints(&[2, 7])],
        );
        let order = vec![SortKey { expr: Expr::col(1), descending: false }];
        let ev = Evaluator::new(&store);
        let run = |func: WindowFunc, order: Vec<SortKey>| {
            let mut b = PlanBuilder::new();
            let s = scan(&mut b, &store, 1);
            let w = b.window(s, vec![Expr::col(0)], order, func, "w".into()).unwrap();
            ev.evaluate(&w, &binding(&[1])).unwrap().contents()
        };
        assert_eq!(
            run(WindowFunc::Rank, order.clone()),
            vec![ints(&[1, 5, 1]), ints(&[1, 10, 2]), ints(&[1, 10, 2]), ints(&[2, 7, 1])]
        );
        assert_eq!(
            run(WindowFunc::RowNumber, order.clone()),
            vec![ints(&[1, 5, 1]), ints(&[1, 10, 2]), ints(&[1, 10, 3]), ints(&[2, 7, 1])]
        );
        assert_eq!(
            run(WindowFunc::Sum(Expr::col(1)), order.clone()),
            vec![ints(&[1, 5, 5]), ints(&[1, 10, 15]), ints(&[1, 10, 25]), ints(&[2, 7, 7])]
        );
        assert_eq!(
            run(WindowFunc::Count(None), vec![]),
            vec![ints(&[1, 5, 3]), ints(&[1, 10, 3]), ints(&[1, 10, 3]), ints(&[2, 7, 1])]
        );
    }

    #[test]
    fn union_retags_overlapping_branches() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![ints(&[1])]);
        let mut b = PlanBuilder::new();
        let s1 = scan(&mut b, &store, 1);
        let s2 = scan(&mut b, &store, 1);
        let u = b.union_all(vec![s1, s2]).unwrap();
        assert!(matches!(u.kind, PlanKind::UnionAll { passthrough: false, .. }));
        let rel = Evaluator::new(&store).evaluate(&u, &binding(&[1])).unwrap();
        assert_eq!(rel.rows.len(), 2);
        assert_ne!(rel.rows[0].row_id, rel.rows[1].row_id);
    }

    #[test]
    fn typecheck_rejects_bad_plans() {
        let mut store = Store::new();
        load(&mut store, 1, "t", Schema::new(vec![Column::new("s", DataType::Text)]), vec![]);
        load(&mut store, 2, "u", int_schema(&["a"]), vec![]);
        let mut b = PlanBuilder::new();
        let s = scan(&mut b, &store, 1);
        let sum = AggCall { func: AggFunc::Sum, arg: Some(Expr::col(0)) };
        assert!(b.aggregate(s.clone(), vec![], vec![sum], vec!["x".into()]).is_err());
        let count = AggCall { func: AggFunc::Count, arg: Some(Expr::col(0)) };
        let agg = b.aggregate(s.clone(), vec![], vec![count], vec!["x".into()]).unwrap();
        assert_eq!(agg.schema.columns[0].ty, DataType::Int64);
        assert_eq!(agg.typecheck().unwrap(), agg.schema);
        let u = scan(&mut b, &store, 2);
        assert!(b.join(JoinKind::Inner, s, u, vec![(0, 0)]).is_err());
    }

    #[test]
    fn explain_lists_one_node_per_line() {
        let mut store = Store::new();
        load(&mut store, 1, "t", int_schema(&["a"]), vec![]);
        let mut b = PlanBuilder::new();
        let s = scan(&mut b, &store, 1);
        let p = b.filter(s, Expr::binary(BinaryOp::Gt, Expr::col(0), Expr::lit(Value::Int64(1)))).unwrap();
        assert_eq!(p.explain(), "Filter [1] ((a > 1))\n  Scan [0] (table t #1)\n");
    }
}
