//! Randomized oracle testing: random DAGs of dynamic tables under random
//! DML and scheduler advances, with every successful refresh checked
//! against a full evaluation of its defining query at its data timestamp.

use std::fmt::Write as _;

use dynotab_core::engine::{Engine, EngineConfig};
use dynotab_core::refreshd::{RefreshAction, RefreshMode};
use dynotab_core::types::Value;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gen::{self, OpClass};

pub const MAX_DTS: usize = 6;
pub const MAX_DEPTH: usize = 4;
/// Bound on rows per join key, as a power of a base table's rows per key.
/// Chained self-joins otherwise grow exponentially with depth.
pub const MAX_MULTIPLICITY: u32 = 3;

#[derive(Debug, Clone)]
struct Source {
    name: String,
    depth: usize,
    mult: u32,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub dts: usize,
    pub statements: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseStats {
    pub refreshes: usize,
    pub no_data: usize,
    pub skipped: usize,
    pub rejected_statements: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub statement: usize,
    pub message: String,
}

const LAGS: [&str; 4] = ["'60 seconds'", "'2 minutes'", "'5 minutes'", "DOWNSTREAM"];

/// Builds one random case. Deterministic in `seed`.
pub fn generate(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let bases = rng.gen_range(1..=3);
    let mut sources: Vec<Source> = Vec::new();
    for b in 0..bases {
        let name = format!("b{b}");
        out.push(format!("CREATE TABLE {name} (k INT, v INT)"));
        let n = rng.gen_range(3..9);
        out.push(gen::insert(&mut rng, &name, n));
        sources.push(Source { name, depth: 0, mult: 1 });
    }
    let dts = rng.gen_range(1..=MAX_DTS);
    let mut now = 0i64;
    let step = |rng: &mut ChaCha8Rng, out: &mut Vec<String>, now: &mut i64, names: &[String]| {
        let base = format!("b{}", rng.gen_range(0..bases));
        match rng.gen_range(0..100) {
            0..=44 => out.push(gen::dml(rng, &base)),
            45..=54 => {
                let by = rng.gen_range(1..100);
                *now += by;
                out.push(format!("ADVANCE TIME BY {by}"));
            }
            55..=79 => {
                *now += rng.gen_range(1..150);
                out.push(format!("RUN SCHEDULER UNTIL {now}"));
            }
            80..=87 if !names.is_empty() => {
                let d = names.choose(rng).expect("nonempty");
                let dur = if rng.gen_bool(0.5) { rng.gen_range(49..150) } else { rng.gen_range(0..20) };
                out.push(format!("ALTER DYNAMIC TABLE {d} SET SIMULATED_DURATION = {dur}"));
            }
            _ if !names.is_empty() => {
                let d = names.choose(rng).expect("nonempty");
                out.push(format!("ALTER DYNAMIC TABLE {d} REFRESH"));
            }
            _ => out.push(gen::dml(rng, &base)),
        }
    };
    let mut names: Vec<String> = Vec::new();
    for i in 0..dts {
        let mut op = OpClass::weighted(&mut rng);
        let eligible: Vec<&Source> = sources.iter().filter(|s| s.depth < MAX_DEPTH).collect();
        let mut picked: Vec<&Source> = (0..op.arity()).map(|_| *eligible.choose(&mut rng).expect("bases are eligible")).collect();
        let mult = match op {
            OpClass::UnionAll => picked[0].mult.max(picked[1].mult),
            OpClass::Aggregate => 0,
            _ if op.arity() == 2 => picked[0].mult + picked[1].mult,
            _ => picked[0].mult,
        };
        let mult = if mult > MAX_MULTIPLICITY {
            op = OpClass::Filter;
            picked.truncate(1);
            picked[0].mult
        } else {
            mult
        };
        let depth = 1 + picked.iter().map(|s| s.depth).max().unwrap_or(0);
        let src: Vec<&str> = picked.iter().map(|s| s.name.as_str()).collect();
        let q = gen::query(&mut rng, op, &src);
        let name = format!("d{i}");
        let lag = LAGS.choose(&mut rng).expect("nonempty");
        let mode = if rng.gen_bool(0.15) { " REFRESH_MODE = FULL" } else { "" };
        let init = if rng.gen_bool(0.2) { " INITIALIZE = ON_SCHEDULE" } else { "" };
        out.push(format!("CREATE DYNAMIC TABLE {name} TARGET_LAG = {lag}{mode}{init} AS {q}"));
        sources.push(Source { name: name.clone(), depth, mult });
        names.push(name);
        for _ in 0..rng.gen_range(0..4) {
            step(&mut rng, &mut out, &mut now, &names);
        }
    }
    for _ in 0..rng.gen_range(20..50) {
        step(&mut rng, &mut out, &mut now, &names);
    }
    out.push(format!("RUN SCHEDULER UNTIL {}", now + 200));
    Case { seed, dts, statements: out }
}

/// Runs statements in order, checking every new refresh. Statements the
/// engine rejects with a user error are tolerated and counted.
pub fn run_case(statements: &[String], config: &EngineConfig) -> Result<CaseStats, Failure> {
    let mut e = Engine::new(config.clone());
    let mut stats = CaseStats::default();
    for (i, stmt) in statements.iter().enumerate() {
        let seen = e.refresh_log().len();
        if let Err(err) = e.run_sql(stmt) {
            if err.is_internal() {
                return Err(Failure { statement: i, message: err.to_string() });
            }
            stats.rejected_statements += 1;
        }
        check_new_refreshes(&e, seen, &mut stats).map_err(|message| Failure { statement: i, message })?;
    }
    Ok(stats)
}

fn check_new_refreshes(e: &Engine, seen: usize, stats: &mut CaseStats) -> Result<(), String> {
    for r in &e.refresh_log()[seen..] {
        match r.outcome.as_str() {
            "SKIPPED" => stats.skipped += 1,
            "FAILED" if r.internal => {
                return Err(format!("refresh of {} at {} failed: {}", r.dt, r.refresh_ts, r.error.clone().unwrap_or_default()))
            }
            "SUCCEEDED" => {
                stats.refreshes += 1;
                if r.action == Some(RefreshAction::NoData) {
                    stats.no_data += 1;
                }
                let id = e.dt_id(&r.dt).map_err(|x| x.to_string())?;
                match e.validate_against_oracle(id, r.refresh_ts) {
                    Ok(true) => {}
                    Ok(false) => return Err(format!("oracle mismatch for {} at {}", r.dt, r.refresh_ts)),
                    Err(x) => return Err(format!("oracle for {} at {} failed: {x}", r.dt, r.refresh_ts)),
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Greedily drops statements while the case still fails.
pub fn minimize(statements: &[String], config: &EngineConfig) -> Vec<String> {
    let mut cur = statements.to_vec();
    loop {
        let mut changed = false;
        let mut i = cur.len();
        while i > 0 {
            i -= 1;
            let mut cand = cur.clone();
            cand.remove(i);
            if run_case(&cand, config).is_err() {
                cur = cand;
                changed = true;
            }
        }
        if !changed {
            return cur;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FuzzReport {
    pub cases: usize,
    pub passed: usize,
    pub refreshes: usize,
    pub no_data: usize,
    pub skipped: usize,
    /// Minimized failing scripts, one per failed case.
    pub reproducers: Vec<String>,
    pub transcript: String,
}

impl FuzzReport {
    pub fn failed(&self) -> usize {
        self.cases - self.passed
    }
}

/// Runs `cases` random cases derived from `seed`. The transcript is
/// byte-identical across runs with the same arguments.
pub fn fuzz(seed: u64, cases: usize, config: &EngineConfig) -> FuzzReport {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport { cases, ..Default::default() };
    for n in 0..cases {
        let case = generate(master.gen());
        let head = format!("case {n:04} seed {:016x} dts {} statements {}", case.seed, case.dts, case.statements.len());
        match run_case(&case.statements, config) {
            Ok(s) => {
                report.passed += 1;
                report.refreshes += s.refreshes;
                report.no_data += s.no_data;
                report.skipped += s.skipped;
                writeln!(
                    report.transcript,
                    "{head}: PASS refreshes {} no_data {} skipped {} rejected {}",
                    s.refreshes, s.no_data, s.skipped, s.rejected_statements
                )
                .unwrap();
            }
            Err(f) => {
                writeln!(report.transcript, "{head}: FAIL at statement {}: {}", f.statement, f.message).unwrap();
                let min = minimize(&case.statements, config);
                let script: String = min.iter().map(|s| format!("{s};\n")).collect();
                writeln!(report.transcript, "-- minimized reproducer ({} statements)", min.len()).unwrap();
                report.transcript.push_str(&script);
                report.reproducers.push(script);
            }
        }
    }
    writeln!(
        report.transcript,
        "{} cases, {} passed, {} failed; {} refreshes, {} no-data, {} skipped",
        report.cases,
        report.passed,
        report.failed(),
        report.refreshes,
        report.no_data,
        report.skipped
    )
    .unwrap();
    report
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EquivalenceStats {
    pub compared: usize,
    pub incremental: usize,
}

fn sorted_values(e: &Engine, name: &str) -> Result<Vec<Vec<Value>>, String> {
    let mut v: Vec<_> = e.contents(name).map_err(|x| x.to_string())?.into_iter().map(|r| r.values).collect();
    v.sort();
    Ok(v)
}

/// One random instance of `op`: the same query maintained incrementally and
/// by full recomputation, refreshed at the same timestamps, must hold the
/// same multiset after every refresh.
pub fn equivalence_case(op: OpClass, seed: u64) -> Result<EquivalenceStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Engine::default();
    let mut script = vec!["CREATE TABLE b0 (k INT, v INT)".to_string(), "CREATE TABLE b1 (k INT, v INT)".to_string()];
    for b in ["b0", "b1"] {
        let n = rng.gen_range(4..11);
        script.push(gen::insert(&mut rng, b, n));
    }
    let q = gen::query(&mut rng, op, &["b0", "b1"]);
    script.push(format!("CREATE DYNAMIC TABLE inc TARGET_LAG = '60 seconds' AS {q}"));
    script.push(format!("CREATE DYNAMIC TABLE whole TARGET_LAG = '60 seconds' REFRESH_MODE = FULL AS {q}"));
    for s in &script {
        e.run_sql(s).map_err(|x| format!("{s}: {x}"))?;
    }
    let inc = e.dt_id("inc").map_err(|x| x.to_string())?;
    if e.dt(inc).map_err(|x| x.to_string())?.refresh_mode != RefreshMode::Incremental {
        return Err(format!("{q}: not maintained incrementally"));
    }
    let mut stats = EquivalenceStats::default();
    let mut now = 0;
    for _ in 0..rng.gen_range(3..7) {
        for _ in 0..rng.gen_range(1..6) {
            let b = if rng.gen_bool(0.5) { "b0" } else { "b1" };
            let s = gen::dml(&mut rng, b);
            e.run_sql(&s).map_err(|x| format!("{s}: {x}"))?;
        }
        now += 48;
        let recs = dynotab_core::sched::run_until(&mut e, now);
        let find = |name: &str| recs.iter().find(|r| r.dt == name && r.refresh_ts == now);
        let (Some(a), Some(b)) = (find("inc"), find("whole")) else {
            return Err(format!("{q}: refreshes at {now} missing: {recs:?}"));
        };
        if !a.succeeded() || !b.succeeded() {
            return Err(format!("{q}: refresh failed at {now}: {:?} {:?}", a.error, b.error));
        }
        if a.action == Some(RefreshAction::Incremental) {
            stats.incremental += 1;
        }
        let (x, y) = (sorted_values(&e, "inc")?, sorted_values(&e, "whole")?);
        if x != y {
            return Err(format!("{q}: contents differ at {now}\n incremental {x:?}\n full {y:?}"));
        }
        stats.compared += 1;
    }
    Ok(stats)
}
