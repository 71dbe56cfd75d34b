//! Lag-driven scheduling in virtual time.
//!
//! Every dynamic table refreshes on a grid of multiples of its period, with
//! periods drawn from `48 * 2^n`. Because periods only grow downstream and
//! all grids share phase 0, every data timestamp a consumer picks is also
//! one its producers picked, so upstream-first issuing always finds the
//! exact versions a refresh needs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::engine::{Engine, EngineError};
use crate::refreshd::{DtState, RefreshAction, RefreshKind, RefreshRecord};
use crate::sqlfront::ast::{InitializeSpec, TargetLag};
use crate::store::TableId;

pub const BASE_PERIOD: i64 = 48;

/// Largest `48 * 2^n` not above `target`; 48 for smaller targets.
pub fn choose_period(target: i64) -> i64 {
    let mut p = BASE_PERIOD;
    while p.saturating_mul(2) <= target {
        p *= 2;
    }
    p
}

/// Largest multiple of `period` at or before `now` that is newer than
/// `as_of`, if any.
pub fn next_data_timestamp(period: i64, as_of: Option<i64>, now: i64) -> Option<i64> {
    let g = now.div_euclid(period) * period;
    as_of.is_none_or(|a| g > a).then_some(g)
}

/// Live dynamic tables that read `id` directly.
pub fn consumers(engine: &Engine, id: TableId) -> Vec<TableId> {
    engine.dynamic_tables().filter(|d| d.upstream_dts().contains(&id)).map(|d| d.id).collect()
}

/// The table's own lag tightened by every consumer's effective target.
/// `None` for a DOWNSTREAM table nobody reads.
pub fn effective_target(engine: &Engine, id: TableId) -> Option<i64> {
    let own = match engine.dts.get(&id)?.target_lag {
        TargetLag::Seconds(s) => Some(s),
        TargetLag::Downstream => None,
    };
    let downstream = consumers(engine, id).into_iter().filter_map(|c| effective_target(engine, c)).min();
    match (own, downstream) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

pub fn period(engine: &Engine, id: TableId) -> Option<i64> {
    effective_target(engine, id).map(choose_period)
}

/// Live dynamic tables, producers before consumers, ties by id.
pub fn topo_order(engine: &Engine) -> Vec<TableId> {
    let live: BTreeSet<TableId> = engine.dynamic_tables().map(|d| d.id).collect();
    let mut indegree: BTreeMap<TableId, usize> = live.iter().map(|id| (*id, 0)).collect();
    for id in &live {
        for u in engine.dts[id].upstream_dts() {
            if live.contains(&u) {
                *indegree.get_mut(id).expect("live") += 1;
            }
        }
    }
    let mut ready: BTreeSet<TableId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut out = Vec::new();
    while let Some(id) = ready.pop_first() {
        out.push(id);
        for c in consumers(engine, id) {
            let d = indegree.get_mut(&c).expect("live");
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    out
}

/// Simulated refresh durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    Constant(i64),
    /// `fixed + per_row * changed rows`, rounded up.
    Linear { fixed: i64, per_row: f64 },
}

impl CostModel {
    /// Parses `constant:N` or `linear:A,B`.
    pub fn parse(s: &str) -> Option<CostModel> {
        let (kind, args) = s.split_once(':')?;
        match kind.trim() {
            "constant" => args.trim().parse().ok().filter(|d| *d >= 0).map(CostModel::Constant),
            "linear" => {
                let (a, b) = args.split_once(',')?;
                let fixed: i64 = a.trim().parse().ok().filter(|d| *d >= 0)?;
                let per_row: f64 = b.trim().parse().ok().filter(|d: &f64| *d >= 0.0)?;
                Some(CostModel::Linear { fixed, per_row })
            }
            _ => None,
        }
    }

    /// NO_DATA refreshes do no work and take no time.
    pub fn duration(&self, record: &RefreshRecord) -> i64 {
        if record.action == Some(RefreshAction::NoData) {
            return 0;
        }
        match *self {
            CostModel::Constant(d) => d,
            CostModel::Linear { fixed, per_row } => {
                fixed + (per_row * (record.rows_inserted + record.rows_deleted) as f64).ceil() as i64
            }
        }
    }
}

/// Scheduler bookkeeping kept between runs.
#[derive(Debug, Clone, Default)]
pub struct SchedState {
    /// Last grid point already visited.
    cursor: Option<i64>,
    /// Virtual time each table's latest refresh finishes.
    busy_until: BTreeMap<TableId, i64>,
    /// Finish time of each table's refresh at a data timestamp.
    ends: BTreeMap<(TableId, i64), i64>,
}

fn skipped(engine: &Engine, id: TableId, g: i64, issue: i64, reason: String) -> RefreshRecord {
    RefreshRecord {
        dt: engine.dts[&id].name.clone(),
        refresh_ts: g,
        kind: RefreshKind::Scheduled,
        action: None,
        start: issue,
        end: issue,
        rows_inserted: 0,
        rows_deleted: 0,
        rows_scanned: 0,
        outcome: "SKIPPED".into(),
        error: Some(reason),
        internal: false,
    }
}

/// Visits every grid point up to `until`, issuing refreshes upstream first,
/// and returns the records written. Grid points before the current period
/// of the virtual clock are not replayed. Afterwards the clock reads at
/// least `until`.
pub fn run_until(engine: &mut Engine, until: i64) -> Vec<RefreshRecord> {
    let first_log = engine.refresh_log.len();
    let floor = engine.now.div_euclid(BASE_PERIOD) * BASE_PERIOD;
    let mut g = match engine.sched.cursor {
        Some(c) => (c.div_euclid(BASE_PERIOD) + 1) * BASE_PERIOD,
        None => floor,
    }
    .max(floor);
    while g <= until {
        tick(engine, g);
        engine.sched.cursor = Some(g);
        g += BASE_PERIOD;
    }
    engine.now = engine.now.max(until);
    engine.refresh_log[first_log..].to_vec()
}

/// Issues the refreshes due at grid point `g`.
pub fn tick(engine: &mut Engine, g: i64) {
    let issue = g.max(engine.now);
    for id in topo_order(engine) {
        let dt = &engine.dts[&id];
        if dt.state == DtState::Suspended || g < dt.created_at {
            continue;
        }
        if dt.state == DtState::Uninitialized && dt.initialize != InitializeSpec::OnSchedule {
            continue;
        }
        let Some(p) = period(engine, id) else { continue };
        if g % p != 0 || dt.data_timestamp().is_some_and(|a| a >= g) {
            continue;
        }
        let busy = engine.sched.busy_until.get(&id).copied().unwrap_or(i64::MIN);
        if busy > issue {
            let r = skipped(engine, id, g, issue, format!("previous refresh runs until {busy}"));
            engine.refresh_log.push(r);
            continue;
        }
        let mut start = issue;
        let mut missing = None;
        for u in dt.upstream_dts() {
            let has = engine.store.table(u).is_ok_and(|t| t.refresh_ts_map().contains_key(&g));
            if !has {
                missing = Some(engine.dts[&u].name.clone());
                break;
            }
            if let Some(e) = engine.sched.ends.get(&(u, g)) {
                start = start.max(*e);
            }
        }
        if let Some(u) = missing {
            let r = skipped(engine, id, g, issue, format!("upstream {u} has no version at {g}"));
            engine.refresh_log.push(r);
            continue;
        }
        let kind = if dt.state == DtState::Uninitialized { RefreshKind::Initialization } else { RefreshKind::Scheduled };
        let scripted = dt.simulated_duration;
        let result: Result<RefreshRecord, EngineError> = engine.execute_refresh(id, g, kind, start);
        let d = match &result {
            Ok(rec) => scripted.unwrap_or_else(|| engine.config.cost_model.duration(rec)),
            Err(_) => 0,
        };
        let end = start + d;
        if let Some(last) = engine.refresh_log.last_mut() {
            last.end = end;
        }
        engine.sched.busy_until.insert(id, end);
        if result.is_ok() {
            engine.sched.ends.insert((id, g), end);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LagKind {
    Peak,
    Trough,
}

impl fmt::Display for LagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LagKind::Peak => "PEAK",
            LagKind::Trough => "TROUGH",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LagSample {
    pub dt: String,
    pub time: i64,
    pub lag: i64,
    pub kind: LagKind,
}

/// Sawtooth samples from successful refreshes: when refresh `i` lands at
/// `e_i` the lag peaks at `e_i - v_{i-1}` and drops to `e_i - v_i`.
pub fn lag_series(log: &[RefreshRecord], dt: Option<&str>) -> Vec<LagSample> {
    let mut prev: BTreeMap<&str, i64> = BTreeMap::new();
    let mut out = Vec::new();
    for r in log.iter().filter(|r| r.succeeded() && dt.is_none_or(|d| d == r.dt)) {
        if let Some(v) = prev.get(r.dt.as_str()) {
            out.push(LagSample { dt: r.dt.clone(), time: r.end, lag: r.end - v, kind: LagKind::Peak });
        }
        out.push(LagSample { dt: r.dt.clone(), time: r.end, lag: r.end - r.refresh_ts, kind: LagKind::Trough });
        prev.insert(&r.dt, r.refresh_ts);
    }
    out
}

pub fn max_peak_lag(samples: &[LagSample], dt: &str) -> Option<i64> {
    samples.iter().filter(|s| s.dt == dt && s.kind == LagKind::Peak).map(|s| s.lag).max()
}

/// `dt,time,lag,kind` with a header row.
pub fn lag_csv(samples: &[LagSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dt", "time", "lag", "kind"]).expect("in-memory write");
    for s in samples {
        w.write_record([s.dt.clone(), s.time.to_string(), s.lag.to_string(), s.kind.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
