//! Random relations and queries. Every generated relation has the shape
//! `(k INT, v INT)` so any query composes with any source.

use std::collections::BTreeSet;

use dynotab_core::iso::{Event, History, TxnId, VersionRef};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpClass {
    Filter,
    Project,
    UnionAll,
    InnerJoin,
    LeftJoin,
    RightJoin,
    FullJoin,
    Aggregate,
    Window,
}

impl OpClass {
    pub const ALL: [OpClass; 9] = [
        OpClass::Filter,
        OpClass::Project,
        OpClass::UnionAll,
        OpClass::InnerJoin,
        OpClass::LeftJoin,
        OpClass::RightJoin,
        OpClass::FullJoin,
        OpClass::Aggregate,
        OpClass::Window,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpClass::Filter => "filter",
            OpClass::Project => "project",
            OpClass::UnionAll => "union-all",
            OpClass::InnerJoin => "inner join",
            OpClass::LeftJoin => "left join",
            OpClass::RightJoin => "right join",
            OpClass::FullJoin => "full join",
            OpClass::Aggregate => "grouped aggregate",
            OpClass::Window => "partitioned window",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            OpClass::UnionAll | OpClass::InnerJoin | OpClass::LeftJoin | OpClass::RightJoin | OpClass::FullJoin => 2,
            _ => 1,
        }
    }

    /// Joins first, then aggregates and windows, then the simple operators.
    pub fn weighted<R: Rng>(rng: &mut R) -> OpClass {
        const W: [(OpClass, u32); 9] = [
            (OpClass::InnerJoin, 14),
            (OpClass::LeftJoin, 8),
            (OpClass::RightJoin, 4),
            (OpClass::FullJoin, 4),
            (OpClass::Aggregate, 18),
            (OpClass::Window, 12),
            (OpClass::Filter, 16),
            (OpClass::Project, 12),
            (OpClass::UnionAll, 12),
        ];
        *W.choose_weighted(rng, |(_, w)| *w).map(|(c, _)| c).expect("weights are positive")
    }
}

fn small<R: Rng>(rng: &mut R) -> i64 {
    rng.gen_range(-2..8)
}

pub fn value<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.1) {
        "NULL".into()
    } else {
        small(rng).to_string()
    }
}

pub fn key<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.05) {
        "NULL".into()
    } else {
        rng.gen_range(0..5).to_string()
    }
}

/// A defining query of class `op` over `sources` (one or two names).
pub fn query<R: Rng>(rng: &mut R, op: OpClass, sources: &[&str]) -> String {
    let s = sources[0];
    let t = sources.get(1).copied().unwrap_or(s);
    let c = small(rng);
    match op {
        OpClass::Filter => {
            let pred = match rng.gen_range(0..4) {
                0 => format!("v > {c}"),
                1 => format!("k = {}", rng.gen_range(0..5)),
                2 => format!("v IS NOT NULL AND v < {c}"),
                _ => "k % 2 = 0 OR v IS NULL".into(),
            };
            format!("SELECT k, v FROM {s} WHERE {pred}")
        }
        OpClass::Project => match rng.gen_range(0..3) {
            0 => format!("SELECT k, v * 2 - k AS v FROM {s}"),
            1 => format!("SELECT k + 1 AS k, COALESCE(v, {c}) AS v FROM {s}"),
            _ => format!("SELECT v AS k, k AS v FROM {s}"),
        },
        OpClass::UnionAll => format!("SELECT k, v FROM {s} UNION ALL SELECT k, v FROM {t}"),
        OpClass::InnerJoin | OpClass::LeftJoin | OpClass::RightJoin | OpClass::FullJoin => {
            let join = match op {
                OpClass::InnerJoin => "JOIN",
                OpClass::LeftJoin => "LEFT JOIN",
                OpClass::RightJoin => "RIGHT JOIN",
                _ => "FULL OUTER JOIN",
            };
            let cols = match rng.gen_range(0..3) {
                0 => "x.k AS k, y.v AS v",
                1 => "COALESCE(x.k, y.k) AS k, x.v + y.v AS v",
                _ => "y.k AS k, x.v AS v",
            };
            format!("SELECT {cols} FROM {s} x {join} {t} y ON x.k = y.k")
        }
        OpClass::Aggregate => {
            let agg = ["SUM(v)", "COUNT(v)", "COUNT(*)", "MIN(v)", "MAX(v)"].choose(rng).expect("nonempty");
            format!("SELECT k, {agg} AS v FROM {s} GROUP BY k")
        }
        OpClass::Window => {
            let win = [
                "RANK() OVER (PARTITION BY k ORDER BY v)",
                "SUM(v) OVER (PARTITION BY k)",
                "COUNT(*) OVER (PARTITION BY k)",
                "RANK() OVER (PARTITION BY k ORDER BY v DESC)",
            ]
            .choose(rng)
            .expect("nonempty");
            format!("SELECT k, {win} AS v FROM {s}")
        }
    }
}

pub fn insert<R: Rng>(rng: &mut R, table: &str, rows: usize) -> String {
    let vals: Vec<String> = (0..rows).map(|_| format!("({}, {})", key(rng), value(rng))).collect();
    format!("INSERT INTO {table} VALUES {}", vals.join(", "))
}

/// A random insert, delete or update against `table`.
pub fn dml<R: Rng>(rng: &mut R, table: &str) -> String {
    match rng.gen_range(0..6) {
        0..=2 => {
            let n = rng.gen_range(1..4);
            insert(rng, table, n)
        }
        3 => format!("DELETE FROM {table} WHERE k = {} AND v > {}", rng.gen_range(0..5), small(rng)),
        4 => format!("UPDATE {table} SET v = v + 1 WHERE k = {}", rng.gen_range(0..5)),
        _ => format!("DELETE FROM {table} WHERE v = {}", small(rng)),
    }
}

const HIST_BASE: [&str; 3] = ["a", "b", "c"];
const HIST_DERIVED: [&str; 2] = ["p", "q"];

/// A random interleaved history of up to eight transactions over three base
/// objects and two derived ones. Reads and derivation inputs pick among
/// versions installed so far; some transactions abort; some carry a
/// derivation over a private object that only they observe.
pub fn random_history<R: Rng>(rng: &mut R) -> History {
    let mut events: Vec<Event> = HIST_BASE.iter().map(|o| Event::write(0, o)).collect();
    events.push(Event::commit(0));
    let mut versions: Vec<VersionRef> = HIST_BASE.iter().map(|o| VersionRef::new(*o, 0)).collect();
    let n: TxnId = rng.gen_range(1..=8);
    let mut derived_by: BTreeSet<(TxnId, &str)> = BTreeSet::new();
    for _ in 0..rng.gen_range(0..24) {
        let t = rng.gen_range(1..=n);
        match rng.gen_range(0..4) {
            0 | 1 => {
                let pick = versions.choose(rng).expect("base versions exist").clone();
                events.push(Event::read(t, &pick.obj, pick.version));
            }
            2 => {
                let obj = *HIST_BASE.choose(rng).expect("nonempty");
                events.push(Event::write(t, obj));
                versions.push(VersionRef::new(obj, t));
            }
            _ => {
                let obj = *HIST_DERIVED.choose(rng).expect("nonempty");
                if !derived_by.insert((t, obj)) {
                    continue;
                }
                let mut inputs: Vec<VersionRef> = Vec::new();
                for _ in 0..rng.gen_range(1..=2) {
                    let i = versions.choose(rng).expect("base versions exist").clone();
                    if i.obj != obj && !inputs.iter().any(|x| x.obj == i.obj) {
                        inputs.push(i);
                    }
                }
                if !inputs.is_empty() {
                    events.push(Event::derive(t, obj, inputs));
                    versions.push(VersionRef::new(obj, t));
                }
            }
        }
    }
    for t in 1..=n {
        if rng.gen_bool(0.3) {
            let (src, out) = (format!("e{t}"), format!("f{t}"));
            events.push(Event::write(t, &src));
            events.push(Event::derive(t, &out, vec![VersionRef::new(src.as_str(), t)]));
            events.push(Event::read(t, &out, t));
        }
    }
    for t in 1..=n {
        events.push(if rng.gen_bool(0.15) { Event::abort(t) } else { Event::commit(t) });
    }
    History::with_commit_order(events)
}
