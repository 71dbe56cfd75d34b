use dynotab_core::engine::Engine;
use dynotab_core::refreshd::{RefreshAction, RefreshMode};
use dynotab_core::sched;
use dynotab_core::types::Value;
use proptest::prelude::*;

/// One query per operator class over `l (k, v)` and `r (k, v)`.
const QUERIES: [&str; 12] = [
    "SELECT k, v FROM l WHERE v > 2",
    "SELECT k, v * 3 - k AS v FROM l",
    "SELECT k, v FROM l UNION ALL SELECT k, v FROM r",
    "SELECT x.k AS k, y.v AS v FROM l x JOIN r y ON x.k = y.k",
    "SELECT x.k AS k, y.v AS v FROM l x LEFT JOIN r y ON x.k = y.k",
    "SELECT y.k AS k, x.v AS v FROM l x RIGHT JOIN r y ON x.k = y.k",
    "SELECT COALESCE(x.k, y.k) AS k, x.v + y.v AS v FROM l x FULL OUTER JOIN r y ON x.k = y.k",
    "SELECT k, SUM(v) AS s, COUNT(*) AS n, MIN(v) AS lo, MAX(v) AS hi FROM l GROUP BY k",
    "SELECT k, RANK() OVER (PARTITION BY k ORDER BY v) AS rk FROM l",
    "SELECT k, SUM(v) OVER (PARTITION BY k) AS s FROM l",
    "SELECT a.k AS k, COUNT(*) AS n FROM l a JOIN r b ON a.k = b.k GROUP BY a.k",
    "SELECT k, v FROM (SELECT k, v FROM l WHERE k < 3 UNION ALL SELECT v AS k, k AS v FROM r) AS u WHERE v IS NOT NULL",
];

#[derive(Debug, Clone)]
enum Dml {
    Insert(bool, Option<i64>, Option<i64>),
    Delete(bool, i64),
    Update(bool, i64),
}

fn lit(x: Option<i64>) -> String {
    x.map_or("NULL".into(), |v| v.to_string())
}

impl Dml {
    fn sql(&self) -> String {
        let t = |left: &bool| if *left { "l" } else { "r" };
        match self {
            Dml::Insert(l, k, v) => format!("INSERT INTO {} VALUES ({}, {})", t(l), lit(*k), lit(*v)),
            Dml::Delete(l, k) => format!("DELETE FROM {} WHERE k = {k}", t(l)),
            Dml::Update(l, k) => format!("UPDATE {} SET v = v + 1 WHERE k = {k}", t(l)),
        }
    }
}

fn nullable() -> impl Strategy<Value = Option<i64>> {
    prop_oneof![1 => Just(None), 9 => (0i64..5).prop_map(Some)]
}

fn dml() -> impl Strategy<Value = Dml> {
    prop_oneof![
        4 => (any::<bool>(), nullable(), nullable()).prop_map(|(l, k, v)| Dml::Insert(l, k, v)),
        1 => (any::<bool>(), 0i64..5).prop_map(|(l, k)| Dml::Delete(l, k)),
        1 => (any::<bool>(), 0i64..5).prop_map(|(l, k)| Dml::Update(l, k)),
    ]
}

fn sorted(e: &Engine, name: &str) -> Vec<Vec<Value>> {
    let mut v: Vec<_> = e.contents(name).unwrap().into_iter().map(|r| r.values).collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn incremental_matches_full(
        q in 0..QUERIES.len(),
        seed in prop::collection::vec(dml(), 0..8),
        rounds in prop::collection::vec(prop::collection::vec(dml(), 0..6), 1..5),
    ) {
        let mut e = Engine::default();
        e.run_sql("CREATE TABLE l (k INT, v INT); CREATE TABLE r (k INT, v INT);").unwrap();
        for d in &seed {
            e.run_sql(&d.sql()).unwrap();
        }
        let query = QUERIES[q];
        e.run_sql(&format!("CREATE DYNAMIC TABLE inc TARGET_LAG = '60 seconds' AS {query}")).unwrap();
        e.run_sql(&format!("CREATE DYNAMIC TABLE whole TARGET_LAG = '60 seconds' REFRESH_MODE = FULL AS {query}")).unwrap();
        prop_assert_eq!(e.dt_by_name("inc").unwrap().refresh_mode, RefreshMode::Incremental);
        let mut now = 0;
        for round in &rounds {
            for d in round {
                e.run_sql(&d.sql()).unwrap();
            }
            now += 48;
            let recs = sched::run_until(&mut e, now);
            prop_assert!(recs.iter().all(|r| r.succeeded()), "{:?}", recs);
            let inc = recs.iter().find(|r| r.dt == "inc").unwrap();
            prop_assert!(matches!(inc.action, Some(RefreshAction::Incremental | RefreshAction::NoData)));
            prop_assert_eq!(sorted(&e, "inc"), sorted(&e, "whole"));
        }
        let id = e.dt_id("inc").unwrap();
        prop_assert!(e.validate_against_oracle(id, now).unwrap());
    }
}
