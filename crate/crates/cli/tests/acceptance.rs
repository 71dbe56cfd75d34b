//! Acceptance criteria. Each criterion prints one line:
//! `PASS <n> <title>: <measurement>` or `FAIL <n> <title>: <reason>`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use dynotab::fuzz::{equivalence_case, fuzz};
use dynotab::gen::{random_history, OpClass};
use dynotab::{ClockMode, ExitStatus, Format, Session};
use dynotab_core::engine::{Engine, EngineConfig, RecordMode};
use dynotab_core::iso::{
    build_dsg, detect_phenomena, drop_encapsulated, is_encapsulated, move_derivation, EdgeKind, HistoryError,
    PhenomenonKind,
};
use dynotab_core::refreshd::{RefreshAction, RefreshKind};
use dynotab_core::sched::{self, choose_period, lag_series, max_peak_lag, CostModel, LagKind};
use dynotab_core::types::Value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const FUZZ_CASES: usize = 1000;
const EQUIV_INSTANCES: u64 = 100;
const HISTORIES: usize = 1000;
const NO_DATA_SHARE: f64 = 0.90;
const BASE_ROWS: usize = 100_000;
const CHANGED_SHARE: f64 = 0.01;
const SCAN_SHARE: f64 = 0.10;

fn oracle_suite() -> Outcome {
    let report = fuzz(1, FUZZ_CASES, &EngineConfig::default());
    ensure!(report.failed() == 0, "{} of {} cases failed:\n{}", report.failed(), report.cases, report.reproducers.join("\n"));
    ensure!(report.skipped > 0, "no refresh was skipped");
    Ok(format!(
        "{} cases, 0 failures, {} refreshes checked ({} skipped)",
        report.cases, report.refreshes, report.skipped
    ))
}

fn incremental_equals_full() -> Outcome {
    let mut total = 0;
    let mut incremental = 0;
    for op in OpClass::ALL {
        let mut seen_incremental = 0;
        for i in 0..EQUIV_INSTANCES {
            let s = equivalence_case(op, 0x5eed_0000 + i).map_err(|e| format!("{} instance {i}: {e}", op.name()))?;
            total += s.compared;
            seen_incremental += s.incremental;
        }
        ensure!(seen_incremental > 0, "{} never refreshed incrementally", op.name());
        incremental += seen_incremental;
    }
    Ok(format!(
        "{} classes x {EQUIV_INSTANCES} instances, {total} comparisons ({incremental} incremental refreshes), 0 differences",
        OpClass::ALL.len()
    ))
}

const READ_SKEW: &str = "
    CREATE TABLE bt (x INT);
    CREATE DYNAMIC TABLE dt TARGET_LAG = '60 seconds' INITIALIZE = ON_SCHEDULE AS SELECT x FROM bt;
    ADVANCE TIME BY 10;
    INSERT INTO bt VALUES (1);
    ADVANCE TIME BY 39;
    INSERT INTO bt VALUES (2);
    RUN SCHEDULER UNTIL 49;
    RUN SCHEDULER UNTIL 96;
    SELECT d.x, b.x FROM dt AT(TIMESTAMP => 48) d JOIN bt b ON d.x = b.x;
";

fn read_skew_structure() -> Outcome {
    let history = |mode| -> Result<_, String> {
        let mut e = Engine::new(EngineConfig { record: Some(mode), ..Default::default() });
        e.run_sql(READ_SKEW).map_err(|x| x.to_string())?;
        let h = e.history();
        let dsg = build_dsg(&h).map_err(|x| x.to_string())?;
        let kinds: BTreeSet<_> = detect_phenomena(&h, &dsg).into_iter().map(|p| p.kind).collect();
        Ok((dsg, kinds))
    };
    let (persisted, pk) = history(RecordMode::Persisted)?;
    ensure!(pk.is_empty(), "persisted history shows {pk:?}");
    let (derived, dk) = history(RecordMode::Dvs)?;
    ensure!(dk == BTreeSet::from([PhenomenonKind::G2, PhenomenonKind::GSingle]), "derived history shows {dk:?}");
    ensure!(derived.has_edge(2, 5, EdgeKind::WR), "missing T2 -> T5 WR");
    ensure!(derived.has_edge(5, 2, EdgeKind::RW), "missing T5 -> T2 RW");
    Ok(format!(
        "persisted: acyclic, {} edges; derived: G2 + G-single via T2->T5 WR, T5->T2 RW",
        persisted.edges.len()
    ))
}

fn history_transformations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut moves = 0;
    for i in 0..HISTORIES {
        let h = random_history(&mut rng);
        let ders: Vec<_> = h.derivations().into_keys().collect();
        let committed: Vec<_> = h.committed().into_iter().collect();
        if ders.is_empty() {
            continue;
        }
        let d = &ders[rng.gen_range(0..ders.len())];
        let target = committed[rng.gen_range(0..committed.len())];
        match move_derivation(&h, d, target) {
            Ok(moved) => {
                let before = build_dsg(&h).map_err(|e| e.to_string())?.edge_set();
                let after = build_dsg(&moved).map_err(|e| e.to_string())?.edge_set();
                ensure!(before == after, "history {i}: moving {d} to T{target} changed the edges");
                moves += 1;
            }
            Err(HistoryError::InvalidMove(_)) => {}
            Err(e) => return Err(format!("history {i}: {e}")),
        }
    }
    let mut drops = 0;
    for i in 0..HISTORIES {
        let h = random_history(&mut rng);
        let before = build_dsg(&h).map_err(|e| e.to_string())?.edge_set();
        for d in h.derivations().into_keys() {
            if is_encapsulated(&h, &d).map_err(|e| e.to_string())? {
                let dropped = drop_encapsulated(&h, &d).map_err(|e| e.to_string())?;
                ensure!(before == build_dsg(&dropped).map_err(|e| e.to_string())?.edge_set(), "history {i}: dropping {d} changed the graph");
                drops += 1;
            }
        }
    }
    ensure!(moves > HISTORIES / 4 && drops > HISTORIES / 4, "too few non-trivial checks: {moves} moves, {drops} drops");
    Ok(format!("{HISTORIES} + {HISTORIES} histories, {moves} moves and {drops} encapsulated removals, 0 failures"))
}

fn feed(e: &mut Engine, from: i64, until: i64, step: i64) -> Result<(), String> {
    let mut t = from;
    while t <= until {
        sched::run_until(e, t);
        e.run_sql(&format!("INSERT INTO t VALUES ({t})")).map_err(|x| x.to_string())?;
        t += step;
    }
    Ok(())
}

fn scheduler_formulas() -> Outcome {
    for target in 1..=100_000 {
        let p = choose_period(target);
        ensure!(p % 48 == 0 && (p as u64 / 48).is_power_of_two(), "period {p} for target {target}");
        ensure!(p <= target.max(48) && (p == 48 || 2 * p > target), "period {p} not largest for {target}");
    }
    ensure!(choose_period(60) == 48 && choose_period(3600) == 3072, "canonical periods wrong");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut runs = 0;
    while runs < 30 {
        let depth: usize = rng.gen_range(1..4);
        let d: i64 = rng.gen_range(0..25);
        let target: i64 = rng.gen_range(60..400);
        let p = choose_period(target);
        let w = (depth as i64 - 1) * d;
        if p + w + d >= target {
            continue;
        }
        let mut script = String::from("CREATE TABLE t (a INT);");
        for i in 0..depth {
            let src = if i == 0 { "t".to_string() } else { format!("d{}", i - 1) };
            let lag = if i + 1 == depth { format!("'{target} seconds'") } else { "DOWNSTREAM".into() };
            script.push_str(&format!("CREATE DYNAMIC TABLE d{i} TARGET_LAG = {lag} AS SELECT a FROM {src};"));
        }
        let mut e = Engine::new(EngineConfig { cost_model: CostModel::Constant(d), ..Default::default() });
        e.run_sql(&script).map_err(|x| x.to_string())?;
        feed(&mut e, 1, 8 * p, p / 2)?;
        let last = format!("d{}", depth - 1);
        let peak = max_peak_lag(&lag_series(e.refresh_log(), Some(&last)), &last).ok_or("no peak samples")?;
        ensure!(peak <= p + w + d && peak < target, "peak {peak} with p={p} w={w} d={d} target={target}");
        runs += 1;
    }

    let mut e = Engine::new(EngineConfig { cost_model: CostModel::Constant(5), ..Default::default() });
    e.run_sql("CREATE TABLE t (a INT); CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t;")
        .map_err(|x| x.to_string())?;
    feed(&mut e, 1, 1000, 24)?;
    let ok: Vec<_> = e.refresh_log().iter().filter(|r| r.succeeded()).cloned().collect();
    let mut expect = vec![(LagKind::Trough, ok[0].end, ok[0].end - ok[0].refresh_ts)];
    for w in ok.windows(2) {
        expect.push((LagKind::Peak, w[1].end, w[1].end - w[0].refresh_ts));
        expect.push((LagKind::Trough, w[1].end, w[1].end - w[1].refresh_ts));
    }
    let samples = lag_series(e.refresh_log(), Some("d"));
    let got: Vec<_> = samples.iter().map(|s| (s.kind, s.time, s.lag)).collect();
    ensure!(got == expect, "sawtooth samples differ");
    let peak = max_peak_lag(&samples, "d");
    ensure!(peak == Some(53), "d=5 p=48 peak {peak:?}, expected 53");
    Ok(format!("periods exact for targets 1..100000; {runs} bounded runs; {} sawtooth samples exact; peak 53", samples.len()))
}

fn contents(s: &Session, name: &str) -> Vec<Vec<Value>> {
    let mut v: Vec<_> = s.engine.contents(name).unwrap().into_iter().map(|r| r.values).collect();
    v.sort();
    v
}

fn production_validations() -> Outcome {
    let setup = "
        CREATE TABLE t (a INT, b INT); INSERT INTO t VALUES (1, 1), (2, 1);
        CREATE DYNAMIC TABLE up TARGET_LAG = DOWNSTREAM AS SELECT a, b FROM t;
        CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT b, SUM(a) AS s FROM up GROUP BY b;
        INSERT INTO t VALUES (3, 2); ADVANCE TIME BY 1;";
    let mut lines = Vec::new();
    for (fault, expect) in [
        ("DUPLICATE_DELTA", "consolidation violation"),
        ("DELETE_MISSING", "delete of missing row"),
        ("SKIP_UPSTREAM", "no version"),
    ] {
        let mut s = Session::new(EngineConfig::default(), ClockMode::Virtual, Format::Table);
        ensure!(s.run_text(setup, false, &mut |_| {}) == ExitStatus::Success, "setup failed");
        let before = contents(&s, "d");
        let mut out = String::new();
        let status = s.run_text(&format!("INJECT FAULT {fault} ON d; ALTER DYNAMIC TABLE d REFRESH;"), false, &mut |x| out.push_str(x));
        ensure!(status == ExitStatus::Internal, "{fault}: exit {}, output {out}", status.code());
        ensure!(out.contains(expect), "{fault}: error {out:?} lacks {expect:?}");
        ensure!(contents(&s, "d") == before, "{fault}: contents changed");
        lines.push(fault);
    }
    Ok(format!("{} each exit 2 with contents intact", lines.join(", ")))
}

fn no_data_refreshes() -> Outcome {
    let mut e = Engine::default();
    e.run_sql(
        "CREATE TABLE t (a INT); INSERT INTO t VALUES (0);
         CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS SELECT a FROM t WHERE a >= 0;",
    )
    .map_err(|x| x.to_string())?;
    let id = e.dt_id("d").map_err(|x| x.to_string())?;
    let mut no_data = 0;
    let mut total = 0;
    for round in 1..=40 {
        let versions = e.store().table(id).map_err(|x| x.to_string())?.versions().len();
        let recs = sched::run_until(&mut e, round * 48 * 5);
        for r in recs.iter().filter(|r| r.succeeded()) {
            total += 1;
            if r.action == Some(RefreshAction::NoData) {
                no_data += 1;
                ensure!(r.rows_scanned == 0, "NO_DATA at {} scanned {}", r.refresh_ts, r.rows_scanned);
                let t = e.store().table(id).map_err(|x| x.to_string())?;
                ensure!(t.refresh_ts_map().contains_key(&r.refresh_ts), "NO_DATA at {} left no mapping", r.refresh_ts);
            }
        }
        let grew = e.store().table(id).map_err(|x| x.to_string())?.versions().len() - versions;
        let data = recs.iter().filter(|r| r.succeeded() && r.action != Some(RefreshAction::NoData)).count();
        ensure!(grew == data, "round {round}: {grew} new versions for {data} data refreshes");
        if round % 10 == 0 {
            e.run_sql(&format!("INSERT INTO t VALUES ({round})")).map_err(|x| x.to_string())?;
        }
    }
    let share = no_data as f64 / total as f64;
    ensure!(share > NO_DATA_SHARE, "NO_DATA share {share:.3}");
    Ok(format!("{no_data} of {total} refreshes NO_DATA ({:.1}%), all scanned 0 rows", share * 100.0))
}

fn incremental_cost() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csv = String::with_capacity(BASE_ROWS * 12);
    for i in 0..BASE_ROWS {
        csv.push_str(&format!("{i},{}\n", i % 1000));
    }
    std::fs::write(dir.path().join("facts.csv"), csv).map_err(|e| e.to_string())?;
    let mut e = Engine::new(EngineConfig { base_dir: Some(dir.path().to_path_buf()), ..Default::default() });
    let mut script = String::from(
        "CREATE TABLE facts (id INT, dim INT); CREATE TABLE dims (id INT, label INT);
         COPY INTO facts FROM 'facts.csv';",
    );
    let dims: Vec<String> = (0..1000).map(|i| format!("({i}, {})", i % 7)).collect();
    script.push_str(&format!("INSERT INTO dims VALUES {};", dims.join(", ")));
    script.push_str(
        "CREATE DYNAMIC TABLE d TARGET_LAG = '60 seconds' AS
            SELECT f.id AS id, f.dim * 2 AS dim2, g.label AS label
            FROM facts f JOIN dims g ON f.dim = g.id WHERE f.id % 3 <> 1;",
    );
    e.run_sql(&script).map_err(|x| x.to_string())?;
    let changed = (BASE_ROWS as f64 * CHANGED_SHARE) as usize;
    // a third each of updates, deletes and inserts
    let third = changed / 3;
    e.run_sql(&format!("UPDATE facts SET dim = dim + 1 WHERE id < {third}")).map_err(|x| x.to_string())?;
    e.run_sql(&format!("DELETE FROM facts WHERE id >= {third} AND id < {}", 2 * third)).map_err(|x| x.to_string())?;
    let ins: Vec<String> = (0..changed - 2 * third).map(|i| format!("({}, {})", BASE_ROWS + i, i % 1000)).collect();
    e.run_sql(&format!("INSERT INTO facts VALUES {}", ins.join(", "))).map_err(|x| x.to_string())?;
    let recs = sched::run_until(&mut e, 48);
    let r = recs.iter().find(|r| r.dt == "d").ok_or("no refresh at 48")?;
    ensure!(r.action == Some(RefreshAction::Incremental), "action {:?}", r.action);
    let id = e.dt_id("d").map_err(|x| x.to_string())?;
    ensure!(e.validate_against_oracle(id, 48).map_err(|x| x.to_string())?, "oracle mismatch");
    let share = r.rows_scanned as f64 / BASE_ROWS as f64;
    ensure!(share < SCAN_SHARE, "scanned {} rows ({:.1}%)", r.rows_scanned, share * 100.0);
    Ok(format!(
        "{changed} of {BASE_ROWS} rows changed; incremental refresh scanned {} rows ({:.2}%)",
        r.rows_scanned,
        share * 100.0
    ))
}

const TRAINS: &str = "
    CREATE TABLE train_events (train_id INT, type TEXT, arrival_time TIMESTAMP, schedule_id INT);
    CREATE TABLE trains (id INT, name TEXT);
    CREATE TABLE schedule (id INT, expected_arrival_time TIMESTAMP);
    INSERT INTO trains VALUES (1, 'red'), (2, 'blue');
    INSERT INTO schedule VALUES (10, TIMESTAMP 3600), (11, TIMESTAMP 3700);
    INSERT INTO train_events VALUES (1, 'ARRIVAL', TIMESTAMP 3610, 10), (2, 'ARRIVAL', TIMESTAMP 4400, 11);
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

fn initialization_rule() -> Outcome {
    let mut e = Engine::default();
    e.run_sql(TRAINS).map_err(|x| x.to_string())?;
    let log = e.refresh_log();
    let upstream: Vec<_> = log.iter().filter(|r| r.dt == "train_arrivals").collect();
    ensure!(upstream.len() == 1, "upstream refreshed {} times", upstream.len());
    let up_ts = e.dt_by_name("train_arrivals").map_err(|x| x.to_string())?.data_timestamp();
    let down_ts = e.dt_by_name("delayed_trains").map_err(|x| x.to_string())?.data_timestamp();
    ensure!(up_ts.is_some() && down_ts == up_ts, "downstream at {down_ts:?}, upstream at {up_ts:?}");
    ensure!(log.iter().all(|r| r.kind == RefreshKind::Initialization), "unexpected refresh kinds");
    ensure!(e.validate_all(None).map_err(|x| x.to_string())?.iter().all(|v| v.passed), "oracle mismatch");
    Ok(format!(
        "0 redundant upstream refreshes; downstream initialized at {} (created at 30)",
        down_ts.unwrap_or_default()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("randomized oracle suite", oracle_suite),
        ("incremental equals full", incremental_equals_full),
        ("read-skew graph structure", read_skew_structure),
        ("derivation moves and encapsulated removal", history_transformations),
        ("scheduler formulas", scheduler_formulas),
        ("production validations", production_validations),
        ("NO_DATA refreshes", no_data_refreshes),
        ("incremental cost scaling", incremental_cost),
        ("initialization rule", initialization_rule),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(m) => println!("PASS {} {title}: {m}", i + 1),
            Err(m) => {
                failed += 1;
                println!("FAIL {} {title}: {m}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
