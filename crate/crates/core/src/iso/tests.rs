use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;

fn v(obj: &str, version: TxnId) -> VersionRef {
    VersionRef::new(obj, version)
}

fn init(objs: &[&str]) -> Vec<Event> {
    let mut out: Vec<Event> = objs.iter().map(|o| Event::write(0, o)).collect();
    out.push(Event::commit(0));
    out
}

/// Base table x, dynamic table y. T1 and T2 write x; T3 and T4 refresh y at
/// two data timestamps; T5 reads the older y together with the newer x.
fn refresh_scenario(derived: bool) -> History {
    let mut e = init(&["x"]);
    e.extend([Event::write(1, "x"), Event::commit(1), Event::write(2, "x"), Event::commit(2)]);
    for (t, input) in [(3, 1), (4, 2)] {
        if derived {
            e.push(Event::derive(t, "y", vec![v("x", input)]));
        } else {
            e.push(Event::read(t, "x", input));
            e.push(Event::write(t, "y"));
        }
        e.push(Event::commit(t));
    }
    e.extend([Event::read(5, "y", 3), Event::read(5, "x", 2), Event::commit(5)]);
    History::with_commit_order(e)
}

fn kinds(h: &History) -> BTreeSet<PhenomenonKind> {
    let dsg = build_dsg(h).unwrap();
    detect_phenomena(h, &dsg).into_iter().map(|p| p.kind).collect()
}

#[test]
fn persisted_refreshes_mask_read_skew() {
    let h = refresh_scenario(false);
    assert!(kinds(&h).is_empty());
    let dsg = build_dsg(&h).unwrap();
    assert!(dsg.has_edge(3, 2, EdgeKind::RW));
    assert!(dsg.has_edge(3, 5, EdgeKind::WR));
}

#[test]
fn derived_refreshes_expose_read_skew() {
    let h = refresh_scenario(true);
    let dsg = build_dsg(&h).unwrap();
    assert!(dsg.has_edge(2, 5, EdgeKind::WR));
    assert!(dsg.has_edge(5, 2, EdgeKind::RW));
    assert!(!dsg.edges.iter().any(|e| e.from == 3 || e.to == 3 || e.from == 4 || e.to == 4));
    assert_eq!(kinds(&h), BTreeSet::from([PhenomenonKind::G2, PhenomenonKind::GSingle]));
    for p in detect_phenomena(&h, &dsg) {
        assert!(witness_holds(&dsg, &p));
    }
    let rw = dsg.edges.iter().find(|e| e.kind == EdgeKind::RW).unwrap();
    assert_eq!(rw.via, Some(vec![v("y", 3), v("x", 1)]));
    assert!(dsg.to_dot().contains("T5 -> T2 [label=\"RW\", tooltip=\"y3 <- x1\"]"));
}

#[test]
fn derives_from_follows_paths_in_one_direction() {
    let h = refresh_scenario(true);
    assert!(derives_from(&h, &v("y", 3), &v("x", 1)).unwrap());
    assert!(!derives_from(&h, &v("x", 1), &v("y", 3)).unwrap());
    assert!(derives_from(&h, &v("x", 1), &v("x", 1)).unwrap());
    assert!(derives_from(&h, &v("y", 9), &v("x", 1)).is_err());

    let mut e = init(&["b"]);
    e.extend([Event::derive(3, "a", vec![v("b", 0)]), Event::commit(3), Event::derive(4, "c", vec![v("a", 3)]), Event::commit(4)]);
    let chain = History::with_commit_order(e);
    assert!(derives_from(&chain, &v("c", 4), &v("b", 0)).unwrap());
}

#[test]
fn single_write_has_no_edges() {
    let h = History::with_commit_order(vec![Event::write(1, "x"), Event::commit(1)]);
    assert!(build_dsg(&h).unwrap().edges.is_empty());
}

#[test]
fn aborted_read_through_derivation() {
    let mut e = init(&["x"]);
    e.extend([
        Event::write(1, "x"),
        Event::derive(3, "y", vec![v("x", 1)]),
        Event::commit(3),
        Event::abort(1),
        Event::read(2, "y", 3),
        Event::commit(2),
    ]);
    let h = History::with_commit_order(e);
    assert_eq!(kinds(&h), BTreeSet::from([PhenomenonKind::G1a]));
}

#[test]
fn intermediate_read_through_derivation() {
    let mut e = init(&["x"]);
    e.extend([
        Event::write(1, "x"),
        Event::derive(3, "y", vec![v("x", 1)]),
        Event::commit(3),
        Event::write(1, "x"),
        Event::commit(1),
        Event::read(2, "y", 3),
        Event::commit(2),
    ]);
    let h = History::with_commit_order(e);
    assert!(kinds(&h).contains(&PhenomenonKind::G1b));
    let mut direct = init(&["x"]);
    direct.extend([Event::write(1, "x"), Event::read(2, "x", 1), Event::write(1, "x"), Event::commit(1), Event::commit(2)]);
    assert!(kinds(&History::with_commit_order(direct)).contains(&PhenomenonKind::G1b));
}

#[test]
fn write_cycle_is_g0() {
    let e = vec![
        Event::write(1, "x"),
        Event::write(2, "x"),
        Event::write(2, "y"),
        Event::write(1, "y"),
        Event::commit(1),
        Event::commit(2),
    ];
    let mut h = History::with_commit_order(e);
    h.version_order.insert("x".into(), vec![1, 2]);
    h.version_order.insert("y".into(), vec![2, 1]);
    let k = kinds(&h);
    assert!(k.contains(&PhenomenonKind::G0) && k.contains(&PhenomenonKind::G1c), "{k:?}");
}

#[test]
fn moving_the_fig_derivation_keeps_edges() {
    let h = refresh_scenario(true);
    let moved = move_derivation(&h, &v("y", 3), 5).unwrap();
    assert_eq!(build_dsg(&h).unwrap().edge_set(), build_dsg(&moved).unwrap().edge_set());
    assert!(moved.events.iter().any(|e| e.kind == EventKind::Read { obj: "y".into(), version: 5 }));
    assert_eq!(move_derivation(&h, &v("y", 3), 3).unwrap(), h);
    assert!(matches!(move_derivation(&h, &v("y", 3), 4), Err(HistoryError::InvalidMove(_))));
}

#[test]
fn fig_derivation_is_not_encapsulated() {
    let h = refresh_scenario(true);
    assert!(!is_encapsulated(&h, &v("y", 3)).unwrap());
    assert!(drop_encapsulated(&h, &v("y", 3)).is_err());

    let mut e = init(&["x"]);
    e.extend([Event::write(1, "a"), Event::derive(1, "b", vec![v("a", 1)]), Event::read(1, "b", 1), Event::commit(1)]);
    let own = History::with_commit_order(e);
    assert!(is_encapsulated(&own, &v("b", 1)).unwrap());
    let dropped = drop_encapsulated(&own, &v("b", 1)).unwrap();
    assert_eq!(build_dsg(&own).unwrap().edge_set(), build_dsg(&dropped).unwrap().edge_set());
}

#[test]
fn jsonl_round_trip() {
    let h = refresh_scenario(true);
    let text = h.to_jsonl();
    assert!(text.lines().next().unwrap().contains("\"kind\":\"write\""));
    assert_eq!(History::from_jsonl(&text).unwrap(), h);
    assert!(History::from_jsonl("{\"txn\":1}").is_err());
    let unfinished = "{\"txn\":1,\"kind\":\"write\",\"obj\":\"x\",\"version\":1}\n";
    assert!(matches!(History::from_jsonl(unfinished), Err(HistoryError::Malformed(_))));
}

/// One generated step: which transaction acts and what it does.
#[derive(Debug, Clone)]
struct Step {
    txn: u8,
    op: u8,
    a: u8,
    b: u8,
}

const BASE: [&str; 3] = ["a", "b", "c"];
const DERIVED: [&str; 2] = ["p", "q"];

/// Interprets steps as an interleaved history over `n` transactions. Reads
/// and derivation inputs pick among versions installed so far; a few
/// transactions end by aborting; some carry a self-contained derivation.
fn build_history(n: u8, steps: &[Step], aborts: u8, encapsulate: u8) -> History {
    let mut events = init(&BASE);
    let mut versions: Vec<VersionRef> = BASE.iter().map(|o| v(o, 0)).collect();
    let mut derived_by: BTreeSet<(TxnId, &str)> = BTreeSet::new();
    for s in steps {
        let t = (s.txn % n) as TxnId + 1;
        match s.op % 4 {
            0 | 1 => {
                let pick = versions[s.a as usize % versions.len()].clone();
                events.push(Event::read(t, &pick.obj, pick.version));
            }
            2 => {
                let obj = BASE[s.a as usize % BASE.len()];
                events.push(Event::write(t, obj));
                versions.push(v(obj, t));
            }
            _ => {
                let obj = DERIVED[s.a as usize % DERIVED.len()];
                if derived_by.insert((t, obj)) {
                    let mut inputs = vec![versions[s.b as usize % versions.len()].clone()];
                    let second = versions[(s.b as usize / 3) % versions.len()].clone();
                    if !inputs.contains(&second) && second.obj != obj {
                        inputs.push(second);
                    }
                    inputs.retain(|i| i.obj != obj);
                    if !inputs.is_empty() {
                        events.push(Event::derive(t, obj, inputs));
                        versions.push(v(obj, t));
                    }
                }
            }
        }
    }
    for t in 1..=n as TxnId {
        if encapsulate & (1 << (t - 1)) != 0 {
            let (src, out) = (format!("e{t}"), format!("f{t}"));
            events.push(Event::write(t, &src));
            events.push(Event::derive(t, &out, vec![v(&src, t)]));
            events.push(Event::read(t, &out, t));
        }
    }
    for t in 1..=n as TxnId {
        if aborts & (1 << (t - 1)) != 0 {
            events.push(Event::abort(t));
        } else {
            events.push(Event::commit(t));
        }
    }
    History::with_commit_order(events)
}

fn step() -> impl Strategy<Value = Step> {
    (any::<u8>(), any::<u8>(), any::<u8>(), any::<u8>()).prop_map(|(txn, op, a, b)| Step { txn, op, a, b })
}

fn history() -> impl Strategy<Value = History> {
    (1u8..=8, prop::collection::vec(step(), 0..24), any::<u8>(), any::<u8>())
        .prop_map(|(n, steps, aborts, enc)| build_history(n, &steps, aborts & aborts.rotate_left(3), enc))
}

/// Cycle classes found by enumerating every simple cycle of the graph.
fn brute_force(dsg: &Dsg) -> BTreeSet<PhenomenonKind> {
    let nodes: Vec<TxnId> = dsg.nodes.iter().copied().collect();
    let kinds_between = |a: TxnId, b: TxnId| -> BTreeSet<EdgeKind> {
        dsg.edges.iter().filter(|e| e.from == a && e.to == b).map(|e| e.kind).collect()
    };
    let mut found = BTreeSet::new();
    fn classify(cycle: &[BTreeSet<EdgeKind>], found: &mut BTreeSet<PhenomenonKind>) {
        if cycle.iter().all(|k| k.contains(&EdgeKind::WW)) {
            found.insert(PhenomenonKind::G0);
        }
        let non_rw = |k: &BTreeSet<EdgeKind>| k.contains(&EdgeKind::WW) || k.contains(&EdgeKind::WR);
        if cycle.iter().all(non_rw) {
            found.insert(PhenomenonKind::G1c);
        }
        if cycle.iter().any(|k| k.contains(&EdgeKind::RW)) {
            found.insert(PhenomenonKind::G2);
        }
        for i in 0..cycle.len() {
            if cycle[i].contains(&EdgeKind::RW) && cycle.iter().enumerate().all(|(j, k)| j == i || non_rw(k)) {
                found.insert(PhenomenonKind::GSingle);
            }
        }
    }
    // Cycles rooted at their smallest node.
    fn dfs(
        start: TxnId,
        cur: TxnId,
        path: &mut Vec<TxnId>,
        nodes: &[TxnId],
        kinds_between: &dyn Fn(TxnId, TxnId) -> BTreeSet<EdgeKind>,
        found: &mut BTreeSet<PhenomenonKind>,
    ) {
        for &next in nodes {
            let k = kinds_between(cur, next);
            if k.is_empty() {
                continue;
            }
            if next == start {
                let mut steps: Vec<BTreeSet<EdgeKind>> = path.windows(2).map(|w| kinds_between(w[0], w[1])).collect();
                steps.push(k);
                classify(&steps, found);
            } else if next > start && !path.contains(&next) {
                path.push(next);
                dfs(start, next, path, nodes, kinds_between, found);
                path.pop();
            }
        }
    }
    for &s in &nodes {
        dfs(s, s, &mut vec![s], &nodes, &kinds_between, &mut found);
    }
    found
}

fn cycle_kinds(h: &History, dsg: &Dsg) -> BTreeSet<PhenomenonKind> {
    detect_phenomena(h, dsg)
        .into_iter()
        .map(|p| p.kind)
        .filter(|k| !matches!(k, PhenomenonKind::G1a | PhenomenonKind::G1b))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn moving_a_derivation_preserves_dependencies(h in history(), pick in any::<usize>(), to in any::<usize>()) {
        let ders: Vec<VersionRef> = h.derivations().into_keys().collect();
        prop_assume!(!ders.is_empty());
        let d = &ders[pick % ders.len()];
        let committed: Vec<TxnId> = h.committed().into_iter().collect();
        let target = committed[to % committed.len()];
        match move_derivation(&h, d, target) {
            Ok(moved) => prop_assert_eq!(build_dsg(&h).unwrap().edge_set(), build_dsg(&moved).unwrap().edge_set()),
            Err(HistoryError::InvalidMove(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn dropping_encapsulated_derivations_preserves_dependencies(h in history()) {
        let before = build_dsg(&h).unwrap().edge_set();
        for d in h.derivations().into_keys() {
            if is_encapsulated(&h, &d).unwrap() {
                let dropped = drop_encapsulated(&h, &d).unwrap();
                prop_assert_eq!(&before, &build_dsg(&dropped).unwrap().edge_set());
            }
        }
    }

    #[test]
    fn detectors_agree_with_cycle_enumeration(h in history()) {
        let dsg = build_dsg(&h).unwrap();
        prop_assert_eq!(cycle_kinds(&h, &dsg), brute_force(&dsg));
        for p in detect_phenomena(&h, &dsg) {
            prop_assert!(witness_holds(&dsg, &p));
        }
    }
}
