use std::io::Cursor;
use std::path::Path;
use std::process::Command;

use dynotab::fuzz::{fuzz, generate, run_case};
use dynotab::repl::repl;
use dynotab::{run_script, ClockMode, ExitStatus, Format, Session};
use dynotab_core::engine::EngineConfig;

const TRAINS: &str = "
CREATE TABLE train_events (train_id INT, type TEXT, arrival_time TIMESTAMP, schedule_id INT);
CREATE TABLE trains (id INT, name TEXT);
CREATE TABLE schedule (id INT, expected_arrival_time TIMESTAMP);
COPY INTO trains FROM 'trains.csv' HEADER;
INSERT INTO schedule VALUES (10, TIMESTAMP 3600), (11, TIMESTAMP 3700);
INSERT INTO train_events VALUES (1, 'ARRIVAL', TIMESTAMP 3610, 10), (2, 'ARRIVAL', TIMESTAMP 4400, 11);
CREATE DYNAMIC TABLE train_arrivals TARGET_LAG = DOWNSTREAM AS
    SELECT t.id train_id, e.arrival_time arrival_time, e.schedule_id schedule_id
    FROM train_events e JOIN trains t ON e.train_id = t.id
    WHERE e.type = 'ARRIVAL';
CREATE DYNAMIC TABLE delayed_trains TARGET_LAG = '1 minute' AS
    SELECT train_id, DATE_TRUNC(hour, s.expected_arrival_time) hour,
        COUNT_IF(arrival_time - s.expected_arrival_time > INTERVAL '10 minutes') num_delays
    FROM train_arrivals a JOIN schedule s ON a.schedule_id = s.id
    GROUP BY ALL;
INSERT INTO train_events VALUES (1, 'ARRIVAL', TIMESTAMP 7300, 10);
RUN SCHEDULER UNTIL 100;
VALIDATE;
SELECT train_id, num_delays FROM delayed_trains;
";

fn script(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(path: &Path, format: Format, keep_going: bool) -> (ExitStatus, String) {
    let mut out = String::new();
    let status = run_script(path, EngineConfig::default(), ClockMode::Virtual, format, keep_going, &mut |s| out.push_str(s));
    (status, out)
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("trains.csv"), "id,name\n1,red\n2,blue\n").unwrap();
    script(dir.path(), "trains.sql", TRAINS);
    dir
}

#[test]
fn trains_script_validates() {
    let dir = fixture();
    let (status, out) = run(&dir.path().join("trains.sql"), Format::Table, false);
    assert_eq!(status, ExitStatus::Success, "{out}");
    assert!(out.contains("2 rows loaded"), "{out}");
    assert!(out.contains("validate delayed_trains @ 96: PASS"), "{out}");
    assert!(out.contains("validate train_arrivals @ 96: PASS"), "{out}");
    assert!(out.contains("1        | 1\n2        | 1\n(2 rows, PL-SI)"), "{out}");
}

#[test]
fn division_by_zero_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        dir.path(),
        "div.sql",
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT 1 / a AS q FROM t;
         INSERT INTO t VALUES (0); ADVANCE TIME BY 1;
         ALTER DYNAMIC TABLE d REFRESH;
         SELECT q FROM d;",
    );
    let (status, out) = run(&p, Format::Table, false);
    assert_eq!(status, ExitStatus::UserError);
    assert!(out.contains("division by zero"), "{out}");
    assert!(!out.contains("(1 row"), "stopped at the failure: {out}");
    let (status, out) = run(&p, Format::Table, true);
    assert_eq!(status, ExitStatus::UserError);
    assert!(out.contains("(1 row, PL-SI)"), "kept going: {out}");
}

#[test]
fn injected_duplicate_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        dir.path(),
        "dup.sql",
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         INSERT INTO t VALUES (2); ADVANCE TIME BY 1;
         INJECT FAULT DUPLICATE_DELTA ON d;
         ALTER DYNAMIC TABLE d REFRESH;",
    );
    assert_eq!(run(&p, Format::Table, false).0, ExitStatus::Internal);
}

#[test]
fn internal_failure_outranks_later_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        dir.path(),
        "mixed.sql",
        "CREATE TABLE t (a INT);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         INSERT INTO t VALUES (2);
         INJECT FAULT DELETE_MISSING ON d;
         RUN SCHEDULER UNTIL 48;
         SELECT nope FROM t;",
    );
    let (status, out) = run(&p, Format::Table, true);
    assert_eq!(status, ExitStatus::Internal, "{out}");
    assert!(out.contains("\"outcome\":\"FAILED\""), "{out}");
}

#[test]
fn corrupted_row_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        dir.path(),
        "corrupt.sql",
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (1);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         INJECT FAULT CORRUPT_ROW ON d;
         VALIDATE;",
    );
    let (status, out) = run(&p, Format::Table, false);
    assert_eq!(status, ExitStatus::Internal);
    assert!(out.contains("validate d @ 0: FAIL"), "{out}");
}

#[test]
fn empty_validation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(dir.path(), "empty.sql", "VALIDATE;");
    let (status, out) = run(&p, Format::Table, false);
    assert_eq!(status, ExitStatus::Success);
    assert_eq!(out, "validation: no dynamic tables\n");
}

#[test]
fn syntax_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(dir.path(), "bad.sql", "CREATE TABLE t (a INT); SELEC a FROM t;");
    assert_eq!(run(&p, Format::Table, false).0, ExitStatus::UserError);
    assert_eq!(run(&dir.path().join("missing.sql"), Format::Table, false).0, ExitStatus::UserError);
}

#[test]
fn formats_render_in_row_id_order() {
    let text = "CREATE TABLE t (a INT, b TEXT); INSERT INTO t VALUES (3, 'x'), (1, 'y, z'), (2, NULL); SELECT a, b FROM t;";
    let render = |format| {
        let mut s = Session::new(EngineConfig::default(), ClockMode::Virtual, format);
        let mut out = String::new();
        assert_eq!(s.run_text(text, false, &mut |x| out.push_str(x)), ExitStatus::Success);
        out
    };
    let csv = render(Format::Csv);
    let body: Vec<&str> = csv.lines().skip_while(|l| *l != "a,b").collect();
    assert_eq!(body.len(), 4);
    let mut rows = body[1..].to_vec();
    rows.sort();
    assert_eq!(rows, ["1,\"y, z\"", "2,NULL", "3,x"]);
    let json = render(Format::Json);
    let last = json.lines().last().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 3);
    assert!(parsed.as_array().unwrap().iter().any(|r| r["b"].is_null() && r["a"] == 2));
    let table = render(Format::Table);
    assert!(table.contains("a | b\n--+-----\n"), "{table}");
    // identical sessions render identically
    assert_eq!(render(Format::Table), table);
}

#[test]
fn repl_executes_terminated_statements() {
    let mut s = Session::new(EngineConfig::default(), ClockMode::Virtual, Format::Csv);
    let input = "CREATE TABLE t (a INT);\nINSERT INTO t\n VALUES (4);\nSELECT a FROM t;\nSELECT nope FROM t;\nSELECT a + 1 AS b FROM t";
    let mut out = Vec::new();
    repl(&mut s, Cursor::new(input), &mut out).unwrap();
    let out = String::from_utf8(out).unwrap();
    assert!(out.contains("a\n4\n"), "{out}");
    assert!(out.contains("error:"), "{out}");
    assert!(out.contains("b\n5\n"), "{out}");
}

#[test]
fn real_clock_moves_forward() {
    let mut s = Session::new(EngineConfig::default(), ClockMode::Real, Format::Table);
    assert_eq!(s.run_text("CREATE TABLE t (a INT); ADVANCE TIME BY 5;", false, &mut |_| {}), ExitStatus::Success);
    assert!(s.engine.now() >= 5);
}

#[test]
fn fuzz_is_deterministic_and_passes() {
    let a = fuzz(3, 25, &EngineConfig::default());
    let b = fuzz(3, 25, &EngineConfig::default());
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.failed(), 0, "{}", a.transcript);
    assert!(a.refreshes > 0 && a.skipped > 0);
    assert_ne!(fuzz(4, 25, &EngineConfig::default()).transcript, a.transcript);
}

#[test]
fn generated_dags_respect_bounds() {
    for seed in 0..200 {
        let case = generate(seed);
        assert!((1..=6).contains(&case.dts));
        let creates = case.statements.iter().filter(|s| s.starts_with("CREATE DYNAMIC TABLE")).count();
        assert_eq!(creates, case.dts);
    }
}

#[test]
fn disabled_consolidation_is_caught_with_a_small_reproducer() {
    let config = EngineConfig { disable_consolidation: true, ..Default::default() };
    let report = fuzz(1, 30, &config);
    assert!(report.failed() > 0, "{}", report.transcript);
    assert!(report.transcript.contains("-- minimized reproducer"));
    let repro = &report.reproducers[0];
    let statements: Vec<String> =
        repro.lines().map(|l| l.trim_end_matches(';').to_string()).filter(|l| !l.is_empty()).collect();
    assert!(statements.len() < 15, "{repro}");
    assert!(run_case(&statements, &config).is_err());
    assert!(run_case(&statements, &EngineConfig::default()).is_ok());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynotab"))
}

#[test]
fn binary_runs_scripts_with_exit_codes() {
    let dir = fixture();
    let ok = bin().args(["run", "--format", "csv"]).arg(dir.path().join("trains.sql")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.contains("train_id,num_delays"), "{stdout}");

    let p = script(
        dir.path(),
        "dup.sql",
        "CREATE TABLE t (a INT); CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;
         INSERT INTO t VALUES (1); INJECT FAULT DUPLICATE_DELTA ON d; RUN SCHEDULER UNTIL 48;",
    );
    assert_eq!(bin().arg("run").arg(&p).output().unwrap().status.code(), Some(2));
}

#[test]
fn binary_records_history() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        dir.path(),
        "h.sql",
        "CREATE TABLE bt (x INT);
         CREATE DYNAMIC TABLE dt TARGET_LAG = '60 seconds' INITIALIZE = ON_SCHEDULE AS SELECT x FROM bt;
         ADVANCE TIME BY 10; INSERT INTO bt VALUES (1);
         ADVANCE TIME BY 39; INSERT INTO bt VALUES (2);
         RUN SCHEDULER UNTIL 49; RUN SCHEDULER UNTIL 96;
         SELECT d.x FROM dt AT(TIMESTAMP => 48) d JOIN bt b ON d.x = b.x;
         DUMP DSG;",
    );
    let out = bin().args(["run", "--record-history", "dvs", "--cost-model", "linear:1,0.5"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("digraph"), "{stdout}");
    assert!(stdout.contains("T5 -> T2 [label=\"RW\""), "{stdout}");
    let bad = bin().args(["run", "--cost-model", "cubic"]).arg(&p).output().unwrap();
    assert_eq!(bad.status.code(), Some(2), "clap usage errors exit 2");
}

#[test]
fn binary_enforces_min_target_lag() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(dir.path(), "lag.sql", "CREATE TABLE t (a INT); CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;");
    let out = bin().args(["run", "--min-target-lag", "120"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn binary_fuzz_transcript_is_stable() {
    let a = bin().args(["fuzz", "--seed", "9", "--cases", "10"]).output().unwrap();
    let b = bin().args(["fuzz", "--seed", "9", "--cases", "10"]).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("10 cases, 10 passed, 0 failed"), "{text}");
}
