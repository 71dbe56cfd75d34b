use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use super::history::{EventKind, History, HistoryError, Outcome, TxnId, VersionRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeKind {
    WW,
    WR,
    RW,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::WW => "WW",
            EdgeKind::WR => "WR",
            EdgeKind::RW => "RW",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub from: TxnId,
    pub to: TxnId,
    pub kind: EdgeKind,
    /// Derivation path that induced the edge, outermost version first.
    pub via: Option<Vec<VersionRef>>,
}

/// Direct serialization graph over committed transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dsg {
    pub nodes: BTreeSet<TxnId>,
    pub edges: Vec<Edge>,
}

impl Dsg {
    /// Edges without their derivation paths; the dependency relation itself.
    pub fn edge_set(&self) -> BTreeSet<(TxnId, TxnId, EdgeKind)> {
        self.edges.iter().map(|e| (e.from, e.to, e.kind)).collect()
    }

    pub fn has_edge(&self, from: TxnId, to: TxnId, kind: EdgeKind) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to && e.kind == kind)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dsg {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  T{n};");
        }
        for e in &self.edges {
            let tooltip = match &e.via {
                Some(path) => {
                    let p: Vec<String> = path.iter().map(|v| v.to_string()).collect();
                    format!(", tooltip=\"{}\"", p.join(" <- "))
                }
                None => String::new(),
            };
            let _ = writeln!(out, "  T{} -> T{} [label=\"{}\"{tooltip}];", e.from, e.to, e.kind.name());
        }
        out.push_str("}\n");
        out
    }
}

/// Derivation structure of a history.
pub struct Provenance {
    derivations: BTreeMap<VersionRef, Vec<VersionRef>>,
    /// Versions produced by a write, as opposed to a derivation.
    written: BTreeSet<VersionRef>,
}

impl Provenance {
    pub fn new(h: &History) -> Self {
        let mut written = BTreeSet::new();
        for e in &h.events {
            if let EventKind::Write { obj, version } = &e.kind {
                written.insert(VersionRef::new(obj.clone(), *version));
            }
        }
        Provenance { derivations: h.derivations(), written }
    }

    pub fn is_written(&self, v: &VersionRef) -> bool {
        self.written.contains(v)
    }

    /// Every version `v` derives from (including itself), each with the
    /// derivation path leading to it.
    pub fn sources(&self, v: &VersionRef) -> BTreeMap<VersionRef, Vec<VersionRef>> {
        let mut out: BTreeMap<VersionRef, Vec<VersionRef>> = BTreeMap::new();
        let mut queue = VecDeque::from([vec![v.clone()]]);
        while let Some(path) = queue.pop_front() {
            let last = path.last().expect("non-empty path").clone();
            if out.contains_key(&last) {
                continue;
            }
            out.insert(last.clone(), path.clone());
            for input in self.derivations.get(&last).into_iter().flatten() {
                if !out.contains_key(input) {
                    let mut p = path.clone();
                    p.push(input.clone());
                    queue.push_back(p);
                }
            }
        }
        out
    }
}

/// True iff a path of derivations leads from `x` to `y`, or `x == y`.
pub fn derives_from(h: &History, x: &VersionRef, y: &VersionRef) -> Result<bool, HistoryError> {
    let known = |v: &VersionRef| h.installed().contains_key(v);
    for v in [x, y] {
        if !known(v) {
            return Err(HistoryError::UnknownVersion(v.to_string()));
        }
    }
    Ok(Provenance::new(h).sources(x).contains_key(y))
}

fn path_of(path: &[VersionRef]) -> Option<Vec<VersionRef>> {
    if path.len() > 1 {
        Some(path.to_vec())
    } else {
        None
    }
}

/// Builds the graph from the extended dependency definitions. Only writes
/// install versions; derived versions connect readers to the writers they
/// derive from.
pub fn build_dsg(h: &History) -> Result<Dsg, HistoryError> {
    h.validate()?;
    let outcomes = h.outcomes();
    let committed: BTreeSet<TxnId> = outcomes.iter().filter(|(_, o)| **o == Outcome::Committed).map(|(t, _)| *t).collect();
    let prov = Provenance::new(h);
    let mut edges: BTreeMap<(TxnId, TxnId, EdgeKind), Option<Vec<VersionRef>>> = BTreeMap::new();
    let mut add = |from: TxnId, to: TxnId, kind: EdgeKind, via: Option<Vec<VersionRef>>| {
        if from != to && committed.contains(&from) && committed.contains(&to) {
            let slot = edges.entry((from, to, kind)).or_insert(via.clone());
            if slot.is_some() && via.is_none() {
                *slot = None;
            }
        }
    };
    let next_version = |v: &VersionRef| -> Option<TxnId> {
        let order = h.version_order.get(&v.obj)?;
        let pos = order.iter().position(|x| *x == v.version)?;
        order.get(pos + 1).copied()
    };

    for e in &h.events {
        let EventKind::Read { obj, version } = &e.kind else { continue };
        let read = VersionRef::new(obj.clone(), *version);
        for (src, path) in prov.sources(&read) {
            if prov.is_written(&src) {
                add(src.version, e.txn, EdgeKind::WR, path_of(&path));
            }
            if let Some(next) = next_version(&src) {
                if prov.is_written(&VersionRef::new(src.obj.clone(), next)) {
                    add(e.txn, next, EdgeKind::RW, path_of(&path));
                }
            }
        }
    }

    for (obj, order) in &h.version_order {
        for pair in order.windows(2) {
            let zk = VersionRef::new(obj.clone(), pair[0]);
            let zm = VersionRef::new(obj.clone(), pair[1]);
            let sk = prov.sources(&zk);
            let sm = prov.sources(&zm);
            for (x, px) in &sk {
                if !prov.is_written(x) {
                    continue;
                }
                for (y, py) in &sm {
                    if !prov.is_written(y) {
                        continue;
                    }
                    let via = if px.len() > 1 || py.len() > 1 {
                        Some(vec![zk.clone(), x.clone(), zm.clone(), y.clone()])
                    } else {
                        None
                    };
                    add(x.version, y.version, EdgeKind::WW, via);
                }
            }
        }
    }

    Ok(Dsg {
        nodes: committed,
        edges: edges.into_iter().map(|((from, to, kind), via)| Edge { from, to, kind, via }).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PhenomenonKind {
    G0,
    G1a,
    G1b,
    G1c,
    G2,
    GSingle,
}

impl PhenomenonKind {
    pub fn name(self) -> &'static str {
        match self {
            PhenomenonKind::G0 => "G0",
            PhenomenonKind::G1a => "G1a",
            PhenomenonKind::G1b => "G1b",
            PhenomenonKind::G1c => "G1c",
            PhenomenonKind::G2 => "G2",
            PhenomenonKind::GSingle => "G-single",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Witness {
    /// Edges forming a cycle, in order.
    Cycle(Vec<(TxnId, TxnId, EdgeKind)>),
    /// Indices of the offending events.
    Events(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phenomenon {
    pub kind: PhenomenonKind,
    pub witness: Witness,
}

type Adj = BTreeMap<TxnId, Vec<(TxnId, EdgeKind)>>;

fn adjacency(dsg: &Dsg, allowed: &[EdgeKind]) -> Adj {
    let mut adj: Adj = BTreeMap::new();
    for e in &dsg.edges {
        if allowed.contains(&e.kind) {
            adj.entry(e.from).or_default().push((e.to, e.kind));
        }
    }
    adj
}

/// Shortest path of edges from `from` to `to`.
fn path(adj: &Adj, from: TxnId, to: TxnId) -> Option<Vec<(TxnId, TxnId, EdgeKind)>> {
    let mut prev: BTreeMap<TxnId, (TxnId, EdgeKind)> = BTreeMap::new();
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            let mut out = Vec::new();
            let mut cur = to;
            while cur != from {
                let (p, k) = prev[&cur];
                out.push((p, cur, k));
                cur = p;
            }
            out.reverse();
            return Some(out);
        }
        for (m, k) in adj.get(&n).into_iter().flatten() {
            if seen.insert(*m) {
                prev.insert(*m, (n, *k));
                queue.push_back(*m);
            }
        }
    }
    None
}

/// Some cycle through edges of `allowed`, found by closing an edge with a
/// return path.
fn find_cycle(dsg: &Dsg, allowed: &[EdgeKind]) -> Option<Vec<(TxnId, TxnId, EdgeKind)>> {
    let adj = adjacency(dsg, allowed);
    for e in dsg.edges.iter().filter(|e| allowed.contains(&e.kind)) {
        if let Some(back) = path(&adj, e.to, e.from) {
            let mut c = vec![(e.from, e.to, e.kind)];
            c.extend(back);
            return Some(c);
        }
    }
    None
}

/// A cycle containing anti-dependency edges; `single` restricts it to
/// exactly one.
fn find_rw_cycle(dsg: &Dsg, single: bool) -> Option<Vec<(TxnId, TxnId, EdgeKind)>> {
    let back_kinds: &[EdgeKind] = if single { &[EdgeKind::WW, EdgeKind::WR] } else { &[EdgeKind::WW, EdgeKind::WR, EdgeKind::RW] };
    let adj = adjacency(dsg, back_kinds);
    for e in dsg.edges.iter().filter(|e| e.kind == EdgeKind::RW) {
        if let Some(back) = path(&adj, e.to, e.from) {
            let mut c = vec![(e.from, e.to, e.kind)];
            c.extend(back);
            return Some(c);
        }
    }
    None
}

/// Detects the phenomena present in `h`, each with one witness.
pub fn detect_phenomena(h: &History, dsg: &Dsg) -> Vec<Phenomenon> {
    let mut out = Vec::new();
    if let Some(c) = find_cycle(dsg, &[EdgeKind::WW]) {
        out.push(Phenomenon { kind: PhenomenonKind::G0, witness: Witness::Cycle(c) });
    }
    if let Some(w) = aborted_reads(h) {
        out.push(Phenomenon { kind: PhenomenonKind::G1a, witness: Witness::Events(w) });
    }
    if let Some(w) = intermediate_reads(h) {
        out.push(Phenomenon { kind: PhenomenonKind::G1b, witness: Witness::Events(w) });
    }
    if let Some(c) = find_cycle(dsg, &[EdgeKind::WW, EdgeKind::WR]) {
        out.push(Phenomenon { kind: PhenomenonKind::G1c, witness: Witness::Cycle(c) });
    }
    if let Some(c) = find_rw_cycle(dsg, false) {
        out.push(Phenomenon { kind: PhenomenonKind::G2, witness: Witness::Cycle(c) });
    }
    if let Some(c) = find_rw_cycle(dsg, true) {
        out.push(Phenomenon { kind: PhenomenonKind::GSingle, witness: Witness::Cycle(c) });
    }
    out
}

/// Committed reads of versions written by, or derived from versions written
/// by, aborted transactions. Returns the read event index.
fn aborted_reads(h: &History) -> Option<Vec<usize>> {
    let outcomes = h.outcomes();
    let prov = Provenance::new(h);
    for (i, e) in h.events.iter().enumerate() {
        let EventKind::Read { obj, version } = &e.kind else { continue };
        if outcomes.get(&e.txn) != Some(&Outcome::Committed) {
            continue;
        }
        for src in prov.sources(&VersionRef::new(obj.clone(), *version)).keys() {
            if prov.is_written(src) && src.version != e.txn && outcomes.get(&src.version) == Some(&Outcome::Aborted) {
                return Some(vec![i]);
            }
        }
    }
    None
}

/// Committed reads of a non-final write, directly or through derivations
/// whose input was intermediate when the derivation ran. Returns the read
/// event index and the index of the later write that superseded it.
fn intermediate_reads(h: &History) -> Option<Vec<usize>> {
    let outcomes = h.outcomes();
    let mut writes: BTreeMap<VersionRef, Vec<usize>> = BTreeMap::new();
    let mut derive_at: BTreeMap<VersionRef, usize> = BTreeMap::new();
    for (i, e) in h.events.iter().enumerate() {
        match &e.kind {
            EventKind::Write { obj, version } => writes.entry(VersionRef::new(obj.clone(), *version)).or_default().push(i),
            EventKind::Derive { obj, version, .. } => {
                derive_at.insert(VersionRef::new(obj.clone(), *version), i);
            }
            _ => {}
        }
    }
    let derivations = h.derivations();
    // Index of a later write when `v`, observed at position `pos` by `reader`,
    // is intermediate or derives from an intermediate version.
    fn check(
        v: &VersionRef,
        pos: usize,
        reader: TxnId,
        writes: &BTreeMap<VersionRef, Vec<usize>>,
        derive_at: &BTreeMap<VersionRef, usize>,
        derivations: &BTreeMap<VersionRef, Vec<VersionRef>>,
        depth: usize,
    ) -> Option<usize> {
        if depth > derivations.len() + 1 {
            return None;
        }
        if let Some(ws) = writes.get(v) {
            if v.version != reader && ws.iter().any(|w| *w < pos) {
                if let Some(later) = ws.iter().find(|w| **w > pos) {
                    return Some(*later);
                }
            }
        }
        if let (Some(inputs), Some(at)) = (derivations.get(v), derive_at.get(v)) {
            for input in inputs {
                if let Some(w) = check(input, *at, v.version, writes, derive_at, derivations, depth + 1) {
                    return Some(w);
                }
            }
        }
        None
    }
    for (i, e) in h.events.iter().enumerate() {
        let EventKind::Read { obj, version } = &e.kind else { continue };
        if outcomes.get(&e.txn) != Some(&Outcome::Committed) {
            continue;
        }
        let v = VersionRef::new(obj.clone(), *version);
        if let Some(w) = check(&v, i, e.txn, &writes, &derive_at, &derivations, 0) {
            return Some(vec![i, w]);
        }
    }
    None
}

/// Re-checks a cycle witness against the graph and the phenomenon kind.
pub fn witness_holds(dsg: &Dsg, p: &Phenomenon) -> bool {
    let Witness::Cycle(c) = &p.witness else { return true };
    if c.is_empty() {
        return false;
    }
    let closed = c.windows(2).all(|w| w[0].1 == w[1].0) && c.last().map(|l| l.1) == c.first().map(|f| f.0);
    let present = c.iter().all(|(f, t, k)| dsg.has_edge(*f, *t, *k));
    let rw = c.iter().filter(|e| e.2 == EdgeKind::RW).count();
    let kinds_ok = match p.kind {
        PhenomenonKind::G0 => c.iter().all(|e| e.2 == EdgeKind::WW),
        PhenomenonKind::G1c => rw == 0,
        PhenomenonKind::G2 => rw >= 1,
        PhenomenonKind::GSingle => rw == 1,
        _ => true,
    };
    closed && present && kinds_ok
}

/// Moves derivation `x_i` into transaction `target`, renaming the version
/// to `x_target` everywhere it is referenced. The derivation event is
/// placed just before the target's commit.
pub fn move_derivation(h: &History, derived: &VersionRef, target: TxnId) -> Result<History, HistoryError> {
    let source = derived.version;
    let pos = h
        .events
        .iter()
        .position(|e| matches!(&e.kind, EventKind::Derive { obj, version, .. } if *obj == derived.obj && *version == source))
        .ok_or_else(|| HistoryError::InvalidMove(format!("no derivation of {derived}")))?;
    if target == source {
        return Ok(h.clone());
    }
    let outcomes = h.outcomes();
    if outcomes.get(&target) != Some(&Outcome::Committed) || outcomes.get(&source) != Some(&Outcome::Committed) {
        return Err(HistoryError::InvalidMove("both transactions must commit".into()));
    }
    let renamed = VersionRef::new(derived.obj.clone(), target);
    if h.installed().contains_key(&renamed) {
        return Err(HistoryError::InvalidMove(format!("T{target} already has a version of {}", derived.obj)));
    }
    let rename = |v: &VersionRef| if v == derived { renamed.clone() } else { v.clone() };
    let mut events = Vec::with_capacity(h.events.len());
    let mut moved = None;
    for (i, e) in h.events.iter().enumerate() {
        let mut e = e.clone();
        if i == pos {
            if let EventKind::Derive { inputs, .. } = &e.kind {
                moved = Some(super::history::Event {
                    txn: target,
                    kind: EventKind::Derive { obj: derived.obj.clone(), version: target, inputs: inputs.iter().map(rename).collect() },
                });
            }
            continue;
        }
        match &mut e.kind {
            EventKind::Read { obj, version } if *obj == derived.obj && *version == source => *version = target,
            EventKind::Derive { inputs, .. } => {
                for v in inputs.iter_mut() {
                    *v = rename(v);
                }
            }
            _ => {}
        }
        if e.txn == target && matches!(e.kind, EventKind::Commit) {
            events.push(moved.take().ok_or_else(|| HistoryError::InvalidMove("target commits before the derivation".into()))?);
        }
        events.push(e);
    }
    let mut version_order = h.version_order.clone();
    if let Some(order) = version_order.get_mut(&derived.obj) {
        for v in order.iter_mut() {
            if *v == source {
                *v = target;
            }
        }
    }
    let out = History { events, version_order };
    out.validate()?;
    Ok(out)
}

/// A derivation is encapsulated when no other transaction observes it or
/// supplies its inputs: its inputs, and everything they derive from, carry
/// its own transaction index, only its own transaction reads the result, no
/// derivation consumes the result, and the result is the only committed
/// version of its object.
pub fn is_encapsulated(h: &History, derived: &VersionRef) -> Result<bool, HistoryError> {
    let ders = h.derivations();
    let inputs = ders.get(derived).ok_or_else(|| HistoryError::UnknownVersion(derived.to_string()))?;
    let own = derived.version;
    let prov = Provenance::new(h);
    if inputs.iter().any(|i| prov.sources(i).keys().any(|s| s.version != own)) {
        return Ok(false);
    }
    for e in &h.events {
        match &e.kind {
            EventKind::Read { obj, version } if *obj == derived.obj && *version == own && e.txn != own => return Ok(false),
            _ => {}
        }
    }
    if ders.values().any(|ins| ins.contains(derived)) {
        return Ok(false);
    }
    let order = h.version_order.get(&derived.obj).cloned().unwrap_or_default();
    Ok(order.iter().all(|v| *v == own))
}

/// Removes an encapsulated derivation together with its own transaction's
/// reads of the result.
pub fn drop_encapsulated(h: &History, derived: &VersionRef) -> Result<History, HistoryError> {
    if !is_encapsulated(h, derived)? {
        return Err(HistoryError::NotEncapsulated(derived.to_string()));
    }
    let events = h
        .events
        .iter()
        .filter(|e| match &e.kind {
            EventKind::Derive { obj, version, .. } | EventKind::Read { obj, version } => {
                !(*obj == derived.obj && *version == derived.version)
            }
            _ => true,
        })
        .cloned()
        .collect();
    let mut version_order = h.version_order.clone();
    if let Some(order) = version_order.get_mut(&derived.obj) {
        order.retain(|v| *v != derived.version);
        if order.is_empty() {
            version_order.remove(&derived.obj);
        }
    }
    let out = History { events, version_order };
    out.validate()?;
    Ok(out)
}
