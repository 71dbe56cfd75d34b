use dynotab_core::engine::{Engine, EngineError, Output};
use dynotab_core::refreshd::{DtState, Isolation, RefreshAction, RefreshKind};
use dynotab_core::store::StoreError;
use dynotab_core::differ::DiffError;
use dynotab_core::types::Value;

fn engine(script: &str) -> Engine {
    let mut e = Engine::default();
    e.run_sql(script).unwrap();
    e
}

fn values(e: &Engine, name: &str) -> Vec<Vec<Value>> {
    let mut v: Vec<_> = e.contents(name).unwrap().into_iter().map(|r| r.values).collect();
    v.sort();
    v
}

fn ints(rows: &[&[i64]]) -> Vec<Vec<Value>> {
    rows.iter().map(|r| r.iter().map(|x| Value::Int64(*x)).collect()).collect()
}

fn refresh(e: &mut Engine, dt: &str) -> Result<dynotab_core::refreshd::RefreshRecord, EngineError> {
    let id = e.dt_id(dt).unwrap();
    e.manual_refresh(id)
}

fn validate(e: &Engine) -> bool {
    e.validate_all(None).unwrap().iter().all(|v| v.passed)
}

const TRAINS: &str = "
    CREATE TABLE train_events (train_id INT, type TEXT, arrival_time TIMESTAMP, schedule_id INT);
    CREATE TABLE trains (id INT, name TEXT);
    CREATE TABLE schedule (id INT, expected_arrival_time TIMESTAMP);
    INSERT INTO trains VALUES (1, 'red'), (2, 'blue');
    INSERT INTO schedule VALUES (10, TIMESTAMP 3600), (11, TIMESTAMP 3700), (12, TIMESTAMP 7300);
    INSERT INTO train_events VALUES
        (1, 'ARRIVAL', TIMESTAMP 3610, 10),
        (2, 'ARRIVAL', TIMESTAMP 4400, 11),
        (1, 'DEPARTURE', TIMESTAMP 3650, 10);
    CREATE DYNAMIC TABLE train_arrivals TARGET_LAG = DOWNSTREAM AS
        SELECT t.id train_id, e.arrival_time arrival_time, e.schedule_id schedule_id
        FROM train_events e JOIN trains t ON e.train_id = t.id
        WHERE e.type = 'ARRIVAL';
    ADVANCE TIME BY 30;
    CREATE DYNAMIC TABLE delayed_trains TARGET_LAG = '1 minute' AS
        SELECT train_id, DATE_TRUNC(hour, s.expected_arrival_time) hour,
            COUNT_IF(arrival_time - s.expected_arrival_time > INTERVAL '10 minutes') num_delays
        FROM train_arrivals a JOIN schedule s ON a.schedule_id = s.id
        GROUP BY ALL;
";

#[test]
fn trains_pipeline_matches_hand_evaluation() {
    let e = engine(TRAINS);
    // train 1 arrives 10s late, train 2 arrives 700s late; both in hour 3600.
    let expect = vec![
        vec![Value::Int64(1), Value::Timestamp(3600), Value::Int64(0)],
        vec![Value::Int64(2), Value::Timestamp(3600), Value::Int64(1)],
    ];
    assert_eq!(values(&e, "delayed_trains"), expect);
    assert!(validate(&e));
}

#[test]
fn downstream_initializes_at_existing_upstream_timestamp() {
    let e = engine(TRAINS);
    let log = e.refresh_log();
    assert_eq!(log.len(), 2, "{log:?}");
    assert_eq!(log[0].dt, "train_arrivals");
    assert_eq!(log[1].dt, "delayed_trains");
    assert_eq!(log[0].refresh_ts, 0);
    assert_eq!(log[1].refresh_ts, 0);
    assert!(log.iter().all(|r| r.kind == RefreshKind::Initialization));
}

#[test]
fn stale_upstream_forces_refresh_at_creation_time() {
    let e = engine(
        "CREATE TABLE t (a INT);
         CREATE DYNAMIC TABLE up TARGET_LAG = DOWNSTREAM AS SELECT a FROM t;
         ADVANCE TIME BY 120;
         CREATE DYNAMIC TABLE down TARGET_LAG = '60 seconds' AS SELECT a FROM up;",
    );
    let log = e.refresh_log();
    let summary: Vec<_> = log.iter().map(|r| (r.dt.as_str(), r.refresh_ts)).collect();
    assert_eq!(summary, vec![("up", 0), ("up", 120), ("down", 120)]);
}

#[test]
fn no_upstream_initializes_now() {
    let e = engine("ADVANCE TIME BY 77; CREATE TABLE t (a INT); CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;");
    assert_eq!(e.dt_by_name("d").unwrap().data_timestamp(), Some(77));
}

#[test]
fn no_data_scans_nothing_and_only_maps() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1), (2);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t WHERE a > 1;
         ADVANCE TIME BY 5;",
    );
    let id = e.dt_id("d").unwrap();
    let versions_before = e.store().table(id).unwrap().versions().len();
    let r = refresh(&mut e, "d").unwrap();
    assert_eq!(r.action, Some(RefreshAction::NoData));
    assert_eq!(r.rows_scanned, 0);
    let t = e.store().table(id).unwrap();
    assert_eq!(t.versions().len(), versions_before);
    assert_eq!(t.refresh_ts_map().get(&5), Some(&t.latest_version()));
    assert!(e.validate_against_oracle(id, 5).unwrap());
}

#[test]
fn incremental_then_full_actions() {
    let mut e = engine(
        "CREATE TABLE t (a INT);
         CREATE DYNAMIC TABLE inc TARGET_LAG = '60 seconds' AS SELECT a FROM t WHERE a > 1;
         CREATE DYNAMIC TABLE whole TARGET_LAG = '60 seconds' REFRESH_MODE = FULL AS SELECT a FROM t WHERE a > 1;
         INSERT INTO t VALUES (1), (2), (3);
         ADVANCE TIME BY 1;",
    );
    assert_eq!(refresh(&mut e, "inc").unwrap().action, Some(RefreshAction::Incremental));
    assert_eq!(refresh(&mut e, "whole").unwrap().action, Some(RefreshAction::Full));
    assert_eq!(values(&e, "inc"), values(&e, "whole"));
    assert_eq!(values(&e, "inc"), ints(&[&[2], &[3]]));
}

#[test]
fn view_change_reinitializes() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1), (5);
         CREATE VIEW v AS SELECT a FROM t WHERE a > 2;
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM v;
         ADVANCE TIME BY 1;",
    );
    let id = e.dt_id("d").unwrap();
    assert!(!e.detect_query_evolution(id).unwrap());
    e.run_sql("CREATE OR REPLACE VIEW v AS SELECT a FROM t WHERE a > 0;").unwrap();
    assert!(e.detect_query_evolution(id).unwrap());
    let r = refresh(&mut e, "d").unwrap();
    assert_eq!(r.action, Some(RefreshAction::Reinitialize));
    assert_eq!(values(&e, "d"), ints(&[&[1], &[5]]));
    assert!(validate(&e));
}

#[test]
fn drop_and_undrop_resumes() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         DROP TABLE t;
         ADVANCE TIME BY 1;",
    );
    let id = e.dt_id("d").unwrap();
    assert!(matches!(e.detect_query_evolution(id), Err(EngineError::UnboundableDefinition { .. })));
    e.run_sql("UNDROP TABLE t; INSERT INTO t VALUES (2); ADVANCE TIME BY 1;").unwrap();
    assert!(!e.detect_query_evolution(id).unwrap());
    assert_eq!(refresh(&mut e, "d").unwrap().action, Some(RefreshAction::Incremental));
    assert_eq!(values(&e, "d"), ints(&[&[1], &[2]]));
}

#[test]
fn replaced_table_reinitializes() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         CREATE OR REPLACE TABLE t (a INT); INSERT INTO t VALUES (7);
         ADVANCE TIME BY 1;",
    );
    assert_eq!(refresh(&mut e, "d").unwrap().action, Some(RefreshAction::Reinitialize));
    assert_eq!(values(&e, "d"), ints(&[&[7]]));
}

#[test]
fn user_errors_suspend_after_threshold() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT 10 / a AS q FROM t;
         INSERT INTO t VALUES (0);",
    );
    for i in 1..=5 {
        e.advance(1);
        let err = refresh(&mut e, "d").unwrap_err();
        assert!(!err.is_internal(), "{err}");
        assert_eq!(e.dt_by_name("d").unwrap().error_count, i);
    }
    assert_eq!(e.dt_by_name("d").unwrap().state, DtState::Suspended);
    e.advance(1);
    assert!(matches!(refresh(&mut e, "d"), Err(EngineError::Refresh { .. })));
    assert_eq!(e.dt_by_name("d").unwrap().error_count, 5);
}

#[test]
fn success_resets_error_count() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT 10 / a AS q FROM t;
         INSERT INTO t VALUES (0); ADVANCE TIME BY 1;",
    );
    refresh(&mut e, "d").unwrap_err();
    assert_eq!(e.dt_by_name("d").unwrap().error_count, 1);
    e.run_sql("DELETE FROM t WHERE a = 0; ADVANCE TIME BY 1;").unwrap();
    refresh(&mut e, "d").unwrap();
    assert_eq!(e.dt_by_name("d").unwrap().error_count, 0);
}

fn faulted(fault: &str) -> (Engine, Vec<Vec<Value>>, EngineError) {
    let mut e = engine(
        "CREATE TABLE t (a INT, b INT); INSERT INTO t VALUES (1, 1), (2, 1);
         CREATE DYNAMIC TABLE up TARGET_LAG = DOWNSTREAM AS SELECT a, b FROM t;
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT b, SUM(a) AS s FROM up GROUP BY b;
         INSERT INTO t VALUES (3, 2); ADVANCE TIME BY 1;",
    );
    let before = values(&e, "d");
    e.run_sql(&format!("INJECT FAULT {fault} ON d")).unwrap();
    let err = refresh(&mut e, "d").unwrap_err();
    (e, before, err)
}

#[test]
fn duplicate_delta_is_caught() {
    let (e, before, err) = faulted("DUPLICATE_DELTA");
    assert!(err.is_internal());
    let EngineError::Refresh { source, .. } = &err else { panic!("{err}") };
    assert!(matches!(**source, EngineError::Diff(DiffError::ConsolidationViolation { .. })), "{err}");
    assert_eq!(values(&e, "d"), before);
    assert_eq!(e.dt_by_name("d").unwrap().error_count, 0);
}

#[test]
fn delete_of_missing_row_is_caught() {
    let (e, before, err) = faulted("DELETE_MISSING");
    assert!(err.is_internal());
    let EngineError::Refresh { source, .. } = &err else { panic!("{err}") };
    assert!(matches!(**source, EngineError::Store(StoreError::DeleteMissingRow { .. })), "{err}");
    assert_eq!(values(&e, "d"), before);
}

#[test]
fn missing_upstream_version_is_caught() {
    let (e, before, err) = faulted("SKIP_UPSTREAM");
    assert!(err.is_internal());
    let EngineError::Refresh { source, .. } = &err else { panic!("{err}") };
    assert!(matches!(**source, EngineError::Store(StoreError::ExactVersionMissing { .. })), "{err}");
    assert_eq!(values(&e, "d"), before);
    let id = e.dt_id("d").unwrap();
    assert_eq!(e.dt(id).unwrap().data_timestamp(), Some(0));
}

#[test]
fn faults_are_one_shot() {
    let (mut e, _, _) = faulted("DUPLICATE_DELTA");
    e.advance(1);
    refresh(&mut e, "d").unwrap();
    assert!(validate(&e));
}

#[test]
fn corruption_is_visible_to_the_oracle() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1), (2);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;",
    );
    assert!(validate(&e));
    e.run_sql("INJECT FAULT CORRUPT_ROW ON d").unwrap();
    let report = e.validate_all(None).unwrap();
    assert_eq!(report.len(), 1);
    assert!(!report[0].passed);
}

#[test]
fn reads_report_isolation() {
    let mut e = engine(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d1 TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         CREATE DYNAMIC TABLE d2 TARGET_LAG = '120 seconds' AS SELECT a FROM t;",
    );
    let one = e.query_sql("SELECT a FROM d1").unwrap();
    assert_eq!(one.isolation, Some(Isolation::SnapshotIsolation));
    let both = e.query_sql("SELECT x.a FROM d1 x JOIN d2 y ON x.a = y.a").unwrap();
    assert_eq!(both.isolation, Some(Isolation::ReadCommitted));
    let mixed = e.query_sql("SELECT x.a FROM d1 x JOIN t y ON x.a = y.a").unwrap();
    assert_eq!(mixed.isolation, Some(Isolation::ReadCommitted));
    let base = e.query_sql("SELECT a FROM t").unwrap();
    assert_eq!(base.isolation, Some(Isolation::SnapshotIsolation));
}

#[test]
fn uninitialized_dt_cannot_be_read() {
    let mut e = engine(
        "CREATE TABLE t (a INT);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' INITIALIZE = ON_SCHEDULE AS SELECT a FROM t;",
    );
    assert!(matches!(e.query_sql("SELECT a FROM d"), Err(EngineError::UninitializedDt(_))));
}

#[test]
fn failed_initialization_discards_the_table() {
    let mut e = engine("CREATE TABLE t (a INT); INSERT INTO t VALUES (0);");
    let err = e.run_sql("CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT 1 / a AS q FROM t").unwrap_err();
    assert!(!err.is_internal());
    assert!(e.dt_id("d").is_err());
    e.run_sql("DELETE FROM t; CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT 1 / a AS q FROM t").unwrap();
}

#[test]
fn incremental_mode_rejects_scalar_aggregates() {
    let mut e = engine("CREATE TABLE t (a INT);");
    assert!(e.run_sql("CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' REFRESH_MODE = INCREMENTAL AS SELECT COUNT(*) AS n FROM t").is_err());
    e.run_sql("CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT COUNT(*) AS n FROM t").unwrap();
    assert_eq!(values(&e, "d"), ints(&[&[0]]));
    e.run_sql("INSERT INTO t VALUES (4), (5); ADVANCE TIME BY 1; ALTER DYNAMIC TABLE d REFRESH;").unwrap();
    assert_eq!(values(&e, "d"), ints(&[&[2]]));
}

#[test]
fn target_lag_minimum_is_enforced() {
    let mut e = engine("CREATE TABLE t (a INT);");
    assert!(e.run_sql("CREATE DYNAMIC TABLE d TARGET_LAG = '30 seconds' AS SELECT a FROM t").is_err());
}

#[test]
fn cycles_are_rejected() {
    let mut e = engine("CREATE TABLE t (a INT); CREATE DYNAMIC TABLE d1 TARGET_LAG = '60 seconds' AS SELECT a FROM t;");
    assert!(e.run_sql("CREATE OR REPLACE DYNAMIC TABLE d1 TARGET_LAG = '60 seconds' AS SELECT a FROM d1").is_err());
}

#[test]
fn dml_round_trip() {
    let mut e = engine(
        "CREATE TABLE t (a INT, b TEXT, c FLOAT);
         INSERT INTO t (a, b) VALUES (1, 'x'), (2, 'y');
         INSERT INTO t SELECT a + 10, b, 1 FROM t;
         UPDATE t SET b = 'z' WHERE a > 10;
         DELETE FROM t WHERE a = 2;",
    );
    let rows = e.query_sql("SELECT a, b, c FROM t").unwrap().rows;
    let got: Vec<_> = rows.into_iter().map(|r| r.values).collect();
    assert_eq!(
        got,
        vec![
            vec![Value::Int64(1), Value::Text("x".into()), Value::Null],
            vec![Value::Int64(11), Value::Text("z".into()), Value::Float64(1.0)],
            vec![Value::Int64(12), Value::Text("z".into()), Value::Float64(1.0)],
        ]
    );
    let versions = e.store().table(e.table_id("t").unwrap()).unwrap().versions().len();
    e.run_sql("DELETE FROM t WHERE a = 99; UPDATE t SET a = a WHERE a = 1;").unwrap();
    assert_eq!(e.store().table(e.table_id("t").unwrap()).unwrap().versions().len(), versions);
}

#[test]
fn copy_into_loads_one_version() {
    let dir = std::env::temp_dir().join(format!("dynotab-copy-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("ok.csv"), "a,b\n1,x\n2,y\n3,\"z,w\"\n").unwrap();
    std::fs::write(dir.join("empty.csv"), "").unwrap();
    std::fs::write(dir.join("bad.csv"), "1,x\nnope,y\n").unwrap();
    let mut e = engine("CREATE TABLE t (a INT, b TEXT);");
    e.config_mut().base_dir = Some(dir.clone());
    let id = e.table_id("t").unwrap();
    let out = e.run_sql("COPY INTO t FROM 'ok.csv' HEADER").unwrap();
    assert_eq!(out, vec![Output::Message("3 rows loaded".into())]);
    assert_eq!(e.store().table(id).unwrap().versions().len(), 2);
    e.run_sql("COPY INTO t FROM 'empty.csv'").unwrap();
    assert_eq!(e.store().table(id).unwrap().versions().len(), 2);
    let err = e.run_sql("COPY INTO t FROM 'bad.csv'").unwrap_err();
    assert!(matches!(err, EngineError::Csv { row: 2, .. }), "{err}");
    assert!(err.to_string().starts_with("row 2"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn show_lists_dynamic_tables() {
    let mut e = engine(
        "CREATE TABLE t (a INT);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         ADVANCE TIME BY 7;",
    );
    let out = e.run_sql("SHOW DYNAMIC TABLES").unwrap();
    let Output::Rows(r) = &out[0] else { panic!() };
    let names: Vec<_> = r.schema.columns.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["name", "state", "target_lag", "refresh_mode", "data_timestamp", "lag_seconds", "error_count"]);
    assert_eq!(r.rows[0].values[1], Value::Text("ACTIVE".into()));
    assert_eq!(r.rows[0].values[3], Value::Text("INCREMENTAL".into()));
    assert_eq!(r.rows[0].values[5], Value::Int64(7));
}

#[test]
fn explain_refresh_marks_pruned_terms() {
    let mut e = engine(
        "CREATE TABLE l (k INT, v INT); CREATE TABLE r (k INT, w INT);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT l.k, v, w FROM l LEFT JOIN r ON l.k = r.k;
         INSERT INTO r VALUES (1, 1);",
    );
    let out = e.run_sql("EXPLAIN REFRESH d").unwrap();
    let Output::Text(t) = &out[0] else { panic!() };
    assert!(t.starts_with("INCREMENTAL refresh"), "{t}");
    assert!(t.contains("Join"), "{t}");
}
