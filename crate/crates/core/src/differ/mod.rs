//! Query differentiation.
//!
//! A delta is a signed multiset of rows (weight +1 insert, -1 delete) that
//! is consolidated into a [`ChangeSet`] at the boundary. Rules per operator:
//!
//! - scan: net changes between the two bound versions
//! - filter, project, union: applied to the input delta
//! - inner join: `ΔL ⋈ R1 + L0 ⋈ ΔR`
//! - outer join: the inner rule plus padding deltas restricted to the keys
//!   touched by the other side's delta
//! - aggregate, window: recompute the groups (partitions) whose key appears
//!   in the input delta, deleting the old rows and inserting the new ones
//!
//! Subterms are evaluated lazily; an empty input delta short-circuits the
//! whole operator without reading any snapshot.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::rc::Rc;

use crate::algebra::{
    aggregate_rows, group_key, window_rows, EvalError, Evaluator, JoinKind, JoinSpec, NodeId, Plan, PlanKind,
    SourceKind, VersionBinding,
};
use crate::store::{Action, Change, ChangeSet, Row, RowId};
use crate::types::Value;

pub type Signed = Vec<(Row, i64)>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum DiffError {
    #[error("node {node} is not differentiable: {reason}")]
    NotDifferentiable { node: NodeId, reason: String },
    #[error("consolidation violation at row {row_id}: {detail}")]
    ConsolidationViolation { row_id: RowId, detail: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Source versions at both ends of a refresh interval.
#[derive(Debug, Clone)]
pub struct Interval {
    pub t0: i64,
    pub t1: i64,
    pub before: VersionBinding,
    pub after: VersionBinding,
}

/// A plan annotated for delta evaluation.
#[derive(Debug, Clone)]
pub struct DeltaPlan {
    pub plan: Plan,
    /// Scan nodes whose change sets are known to hold only inserts.
    pub insert_only_scans: BTreeSet<NodeId>,
    /// Outer joins whose left (resp. right) padding-insert term is pruned.
    pub pruned_left_pad: BTreeSet<NodeId>,
    pub pruned_right_pad: BTreeSet<NodeId>,
}

pub fn differentiate(plan: &Plan) -> Result<DeltaPlan, DiffError> {
    let mut err = None;
    plan.walk(&mut |p| {
        if err.is_some() {
            return;
        }
        match &p.kind {
            PlanKind::Scan(s) if s.at.is_some() => {
                err = Some(DiffError::NotDifferentiable { node: p.id, reason: "time-travel scan".into() })
            }
            PlanKind::Aggregate { group_keys, .. } if group_keys.is_empty() => {
                err = Some(DiffError::NotDifferentiable { node: p.id, reason: "aggregate without grouping keys".into() })
            }
            _ => {}
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(DeltaPlan {
            plan: plan.clone(),
            insert_only_scans: BTreeSet::new(),
            pruned_left_pad: BTreeSet::new(),
            pruned_right_pad: BTreeSet::new(),
        }),
    }
}

/// True when the delta of `plan` can never hold two rows with the same
/// (row id, action): scans, filters, projections and id-passthrough unions.
pub fn can_skip_consolidation(plan: &Plan) -> bool {
    let mut ok = true;
    plan.walk(&mut |p| {
        ok &= match &p.kind {
            PlanKind::Scan(_) | PlanKind::Filter { .. } | PlanKind::Project { .. } => true,
            PlanKind::UnionAll { passthrough, .. } => *passthrough,
            _ => false,
        }
    });
    ok
}

fn insert_only_node(dp: &DeltaPlan, p: &Plan) -> bool {
    match &p.kind {
        PlanKind::Scan(_) => dp.insert_only_scans.contains(&p.id),
        PlanKind::Values { .. } => true,
        PlanKind::Filter { input, .. } | PlanKind::Project { input, .. } => insert_only_node(dp, input),
        PlanKind::UnionAll { inputs, .. } => inputs.iter().all(|i| insert_only_node(dp, i)),
        PlanKind::Join { kind: JoinKind::Inner, left, right, .. } => {
            insert_only_node(dp, left) && insert_only_node(dp, right)
        }
        _ => false,
    }
}

/// Marks insert-only scans and prunes outer-join padding terms that are
/// empty when the opposite side only gains rows. `insert_only` maps scan
/// node ids to whether their change set holds only inserts.
pub fn specialize_insert_only(mut dp: DeltaPlan, insert_only: &BTreeMap<NodeId, bool>) -> DeltaPlan {
    dp.insert_only_scans = insert_only.iter().filter(|(_, v)| **v).map(|(k, _)| *k).collect();
    dp.pruned_left_pad.clear();
    dp.pruned_right_pad.clear();
    let mut left = BTreeSet::new();
    let mut right = BTreeSet::new();
    dp.plan.walk(&mut |p| {
        if let PlanKind::Join { kind, left: l, right: r, .. } = &p.kind {
            if kind.pads_left() && insert_only_node(&dp, r) {
                left.insert(p.id);
            }
            if kind.pads_right() && insert_only_node(&dp, l) {
                right.insert(p.id);
            }
        }
    });
    dp.pruned_left_pad = left;
    dp.pruned_right_pad = right;
    dp
}

impl DeltaPlan {
    /// Algebra EXPLAIN format with the delta rule of every node.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        let annotate = |p: &Plan| -> String {
            let rule = match &p.kind {
                PlanKind::Scan(s) => {
                    let src = match s.source {
                        SourceKind::Table => "version",
                        SourceKind::Dynamic => "exact refresh version",
                    };
                    let io = if self.insert_only_scans.contains(&p.id) { ", insert-only" } else { "" };
                    format!("changes between {src} at t0 and t1{io}")
                }
                PlanKind::Values { .. } => "constant, empty".into(),
                PlanKind::Filter { .. } => "filter of input delta".into(),
                PlanKind::Project { .. } => "projection of input delta, ids kept".into(),
                PlanKind::UnionAll { passthrough: true, .. } => "union of branch deltas, ids kept".into(),
                PlanKind::UnionAll { passthrough: false, .. } => "union of branch deltas, ids retagged".into(),
                PlanKind::Join { kind: JoinKind::Inner, .. } => "ΔL ⋈ R@t1 + L@t0 ⋈ ΔR".into(),
                PlanKind::Join { kind, .. } => {
                    let mut s = String::from("ΔL ⋈ R@t1 + L@t0 ⋈ ΔR");
                    if kind.pads_left() {
                        if self.pruned_left_pad.contains(&p.id) {
                            s.push_str(" + left pads: ΔL∖K(ΔR) ▷ R@t1 - L@t0⋉K(ΔR) ▷ R@t0 [L@t1 term pruned]");
                        } else {
                            s.push_str(" + left pads: ΔL∖K(ΔR) ▷ R@t1 + L@t1⋉K(ΔR) ▷ R@t1 - L@t0⋉K(ΔR) ▷ R@t0");
                        }
                    }
                    if kind.pads_right() {
                        if self.pruned_right_pad.contains(&p.id) {
                            s.push_str(" + right pads: ΔR∖K(ΔL) ◁ L@t1 - R@t0⋉K(ΔL) ◁ L@t0 [R@t1 term pruned]");
                        } else {
                            s.push_str(" + right pads: ΔR∖K(ΔL) ◁ L@t1 + R@t1⋉K(ΔL) ◁ L@t1 - R@t0⋉K(ΔL) ◁ L@t0");
                        }
                    }
                    s
                }
                PlanKind::Aggregate { .. } => "-γ(Q@t0 ⋉ K(ΔQ)) + γ(Q@t1 ⋉ K(ΔQ))".into(),
                PlanKind::Window { .. } => "-ξ(Q@t0 ⋉ K(ΔQ)) + ξ(Q@t1 ⋉ K(ΔQ))".into(),
            };
            format!("Δ: {rule}")
        };
        self.plan.explain_into(0, &mut out, &annotate);
        if can_skip_consolidation(&self.plan) {
            out.push_str("consolidation: uniqueness check only\n");
        } else {
            let _ = writeln!(out, "consolidation: sum weights per (row id, contents)");
        }
        out
    }
}

/// Memoized delta evaluation over one interval.
pub struct DeltaEvaluator<'e, 'a> {
    ev: &'e Evaluator<'a>,
    dp: &'e DeltaPlan,
    interval: &'e Interval,
    deltas: HashMap<NodeId, Rc<Signed>>,
    snaps: HashMap<(NodeId, bool), Rc<Vec<Row>>>,
}

impl<'e, 'a> DeltaEvaluator<'e, 'a> {
    pub fn new(ev: &'e Evaluator<'a>, dp: &'e DeltaPlan, interval: &'e Interval) -> Self {
        DeltaEvaluator { ev, dp, interval, deltas: HashMap::new(), snaps: HashMap::new() }
    }

    /// The signed delta of the whole plan.
    pub fn run(&mut self) -> Result<Signed, DiffError> {
        let plan = self.dp.plan.clone();
        Ok((*self.delta(&plan)?).clone())
    }

    fn snap(&mut self, p: &Plan, after: bool) -> Result<Rc<Vec<Row>>, DiffError> {
        if let Some(r) = self.snaps.get(&(p.id, after)) {
            return Ok(r.clone());
        }
        let binding = if after { &self.interval.after } else { &self.interval.before };
        let rows = Rc::new(self.ev.eval_rows(p, binding)?);
        self.snaps.insert((p.id, after), rows.clone());
        Ok(rows)
    }

    fn delta(&mut self, p: &Plan) -> Result<Rc<Signed>, DiffError> {
        if let Some(d) = self.deltas.get(&p.id) {
            return Ok(d.clone());
        }
        let d = Rc::new(self.compute(p)?);
        self.deltas.insert(p.id, d.clone());
        Ok(d)
    }

    fn compute(&mut self, p: &Plan) -> Result<Signed, DiffError> {
        match &p.kind {
            PlanKind::Scan(scan) => {
                let v0 = self.interval.before.version_for(p.id, scan)?;
                let v1 = self.interval.after.version_for(p.id, scan)?;
                if v0 == v1 {
                    return Ok(Vec::new());
                }
                let cs = self.ev.store().changes_between(scan.table, v0, v1).map_err(EvalError::from)?;
                self.ev.add_scanned(cs.len());
                Ok(cs.changes.into_iter().map(|c| (c.row, sign(c.action))).collect())
            }
            PlanKind::Values { .. } => Ok(Vec::new()),
            PlanKind::Filter { input, predicate } => {
                let d = self.delta(input)?;
                let mut out = Vec::new();
                for (r, w) in d.iter() {
                    if predicate.eval_predicate(&r.values).map_err(EvalError::from)? {
                        out.push((r.clone(), *w));
                    }
                }
                Ok(out)
            }
            PlanKind::Project { input, exprs } => {
                let d = self.delta(input)?;
                d.iter()
                    .map(|(r, w)| {
                        let values = exprs.iter().map(|e| e.eval(&r.values)).collect::<Result<Vec<_>, _>>()?;
                        Ok((Row::new(r.row_id, values), *w))
                    })
                    .collect::<Result<_, EvalError>>()
                    .map_err(DiffError::from)
            }
            PlanKind::UnionAll { inputs, passthrough } => {
                let mut out = Vec::new();
                for (branch, input) in inputs.iter().enumerate() {
                    for (r, w) in self.delta(input)?.iter() {
                        out.push((crate::algebra::union_row(p, branch, *passthrough, r.clone()), *w));
                    }
                }
                Ok(out)
            }
            PlanKind::Join { kind, left, right, keys } => {
                let spec = JoinSpec::new(p.id, *kind, left, right, keys);
                self.join_delta(p, &spec, left, right)
            }
            PlanKind::Aggregate { input, group_keys, aggregates } => {
                let d = self.delta(input)?;
                if d.is_empty() {
                    return Ok(Vec::new());
                }
                let mut changed = HashSet::new();
                for (r, _) in d.iter() {
                    changed.insert(group_key(group_keys, &r.values)?);
                }
                let mut out = Vec::new();
                for (after, w) in [(false, -1), (true, 1)] {
                    let rows = self.snap(input, after)?;
                    let mut restricted = Vec::new();
                    for r in rows.iter() {
                        if changed.contains(&group_key(group_keys, &r.values)?) {
                            restricted.push(r.clone());
                        }
                    }
                    for r in aggregate_rows(p.id, group_keys, aggregates, &p.schema, restricted)? {
                        out.push((r, w));
                    }
                }
                Ok(out)
            }
            PlanKind::Window { input, partition, order, func } => {
                let d = self.delta(input)?;
                if d.is_empty() {
                    return Ok(Vec::new());
                }
                let mut changed = HashSet::new();
                for (r, _) in d.iter() {
                    changed.insert(group_key(partition, &r.values)?);
                }
                let mut out = Vec::new();
                for (after, w) in [(false, -1), (true, 1)] {
                    let rows = self.snap(input, after)?;
                    let mut restricted = Vec::new();
                    for r in rows.iter() {
                        if changed.contains(&group_key(partition, &r.values)?) {
                            restricted.push(r.clone());
                        }
                    }
                    for r in window_rows(partition, order, func, restricted)? {
                        out.push((r, w));
                    }
                }
                Ok(out)
            }
        }
    }

    fn join_delta(&mut self, p: &Plan, spec: &JoinSpec, left: &Plan, right: &Plan) -> Result<Signed, DiffError> {
        let dl = self.delta(left)?;
        let dr = self.delta(right)?;
        if dl.is_empty() && dr.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        if !dl.is_empty() {
            let r1 = self.snap(right, true)?;
            let idx = spec.index(&r1, false);
            for (l, w) in dl.iter() {
                if let Some(ms) = spec.left_key(&l.values).and_then(|k| idx.get(&k)) {
                    for r in ms {
                        out.push((spec.combine(Some(l), Some(r)), *w));
                    }
                }
            }
        }
        if !dr.is_empty() {
            let l0 = self.snap(left, false)?;
            let idx = spec.index(&l0, true);
            for (r, w) in dr.iter() {
                if let Some(ms) = spec.right_key(&r.values).and_then(|k| idx.get(&k)) {
                    for l in ms {
                        out.push((spec.combine(Some(l), Some(r)), *w));
                    }
                }
            }
        }
        if spec.kind.pads_left() {
            let prune = self.dp.pruned_left_pad.contains(&p.id);
            self.pad_delta(spec, left, right, &dl, &dr, true, prune, &mut out)?;
        }
        if spec.kind.pads_right() {
            let prune = self.dp.pruned_right_pad.contains(&p.id);
            self.pad_delta(spec, right, left, &dr, &dl, false, prune, &mut out)?;
        }
        Ok(out)
    }

    /// Padding rows for `side` (the preserved side): a padded row exists iff
    /// the row has no match on the `other` side.
    #[allow(clippy::too_many_arguments)]
    fn pad_delta(
        &mut self,
        spec: &JoinSpec,
        side: &Plan,
        other: &Plan,
        d_side: &Signed,
        d_other: &Signed,
        side_is_left: bool,
        prune_new: bool,
        out: &mut Signed,
    ) -> Result<(), DiffError> {
        let side_key = |v: &[Value]| if side_is_left { spec.left_key(v) } else { spec.right_key(v) };
        let other_key = |v: &[Value]| if side_is_left { spec.right_key(v) } else { spec.left_key(v) };
        let pad = |r: &Row| if side_is_left { spec.combine(Some(r), None) } else { spec.combine(None, Some(r)) };
        let touched: HashSet<Vec<Value>> = d_other.iter().filter_map(|(r, _)| other_key(&r.values)).collect();

        let keys_of = |rows: &[Row]| -> HashSet<Vec<Value>> { rows.iter().filter_map(|r| other_key(&r.values)).collect() };

        // Rows of Δside whose key the other side did not touch keep their
        // match status, evaluated against the other side at t1.
        let untouched: Vec<&(Row, i64)> = d_side
            .iter()
            .filter(|(r, _)| side_key(&r.values).is_none_or(|k| !touched.contains(&k)))
            .collect();
        if !untouched.is_empty() {
            let other1 = self.snap(other, true)?;
            let present = keys_of(&other1);
            for (r, w) in untouched {
                if side_key(&r.values).is_none_or(|k| !present.contains(&k)) {
                    out.push((pad(r), *w));
                }
            }
        }
        if touched.is_empty() {
            return Ok(());
        }
        let phases: &[(bool, i64)] = if prune_new { &[(false, -1)] } else { &[(false, -1), (true, 1)] };
        for &(after, w) in phases {
            let rows = self.snap(side, after)?;
            let other_rows = self.snap(other, after)?;
            let present = keys_of(&other_rows);
            for r in rows.iter() {
                if let Some(k) = side_key(&r.values) {
                    if touched.contains(&k) && !present.contains(&k) {
                        out.push((pad(r), w));
                    }
                }
            }
        }
        Ok(())
    }
}

fn sign(a: Action) -> i64 {
    match a {
        Action::Insert => 1,
        Action::Delete => -1,
    }
}

/// Evaluates the delta of `dp` over `interval`.
pub fn evaluate_delta(ev: &Evaluator<'_>, dp: &DeltaPlan, interval: &Interval) -> Result<Signed, DiffError> {
    DeltaEvaluator::new(ev, dp, interval).run()
}

/// Sums weights per (row id, contents) and converts to actions. Any
/// surviving weight outside {-1, +1}, or two rows for one (row id, action),
/// is a differentiation bug.
pub fn consolidate(delta: Signed) -> Result<ChangeSet, DiffError> {
    let mut sums: BTreeMap<(RowId, Vec<Value>), i64> = BTreeMap::new();
    for (r, w) in delta {
        *sums.entry((r.row_id, r.values)).or_insert(0) += w;
    }
    let mut changes = Vec::new();
    for ((row_id, values), w) in sums {
        let action = match w {
            0 => continue,
            1 => Action::Insert,
            -1 => Action::Delete,
            w => {
                return Err(DiffError::ConsolidationViolation { row_id, detail: format!("net weight {w}") });
            }
        };
        changes.push(Change { action, row: Row::new(row_id, values) });
    }
    check_unique(&changes)?;
    Ok(ChangeSet::from_changes(changes))
}

/// Converts without summing weights; only valid when
/// [`can_skip_consolidation`] holds. The uniqueness check still runs.
pub fn without_consolidation(delta: Signed) -> Result<ChangeSet, DiffError> {
    let mut changes = Vec::with_capacity(delta.len());
    for (r, w) in delta {
        let action = match w {
            1 => Action::Insert,
            -1 => Action::Delete,
            w => return Err(DiffError::ConsolidationViolation { row_id: r.row_id, detail: format!("weight {w}") }),
        };
        changes.push(Change { action, row: r });
    }
    check_unique(&changes)?;
    Ok(ChangeSet::from_changes(changes))
}

fn check_unique(changes: &[Change]) -> Result<(), DiffError> {
    let mut seen = HashSet::with_capacity(changes.len());
    for c in changes {
        if !seen.insert((c.row.row_id, c.action)) {
            return Err(DiffError::ConsolidationViolation {
                row_id: c.row.row_id,
                detail: format!("more than one {:?} row", c.action),
            });
        }
    }
    Ok(())
}
