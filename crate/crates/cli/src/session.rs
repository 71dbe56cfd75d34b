use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use dynotab_core::engine::{Engine, EngineConfig, EngineError, Output, QueryResult};
use dynotab_core::sqlfront::{parse, Statement};
use dynotab_core::types::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ClockMode {
    #[default]
    Virtual,
    /// Wall-clock seconds since the session started; smoke tests only.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

/// Process exit status of a script run. Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    UserError = 1,
    Internal = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(e: &EngineError) -> ExitStatus {
        if e.is_internal() {
            ExitStatus::Internal
        } else {
            ExitStatus::UserError
        }
    }

    /// Outputs that report an invariant violation without failing the
    /// statement: internally failed scheduled refreshes and oracle mismatches.
    pub fn of_output(out: &Output) -> ExitStatus {
        match out {
            Output::Records(rs) if rs.iter().any(|r| r.internal) => ExitStatus::Internal,
            Output::Validation(v) if v.iter().any(|e| !e.passed) => ExitStatus::Internal,
            _ => ExitStatus::Success,
        }
    }
}

pub struct Session {
    pub engine: Engine,
    pub clock: ClockMode,
    pub format: Format,
    started: Instant,
}

impl Session {
    pub fn new(config: EngineConfig, clock: ClockMode, format: Format) -> Self {
        Session { engine: Engine::new(config), clock, format, started: Instant::now() }
    }

    fn sync_clock(&mut self) {
        if self.clock == ClockMode::Real {
            self.engine.set_now(self.started.elapsed().as_secs() as i64);
        }
    }

    /// Executes one statement and renders its output.
    pub fn execute(&mut self, stmt: &Statement) -> Result<(Output, String), EngineError> {
        self.sync_clock();
        let out = self.engine.execute(stmt)?;
        let text = render(&out, self.format);
        Ok((out, text))
    }

    /// Parses and executes `text`, writing rendered output to `sink`.
    /// Stops at the first failing statement unless `keep_going`.
    pub fn run_text(&mut self, text: &str, keep_going: bool, sink: &mut dyn FnMut(&str)) -> ExitStatus {
        let stmts = match parse(text) {
            Ok(s) => s,
            Err(e) => {
                sink(&format!("error: {e}\n"));
                return ExitStatus::UserError;
            }
        };
        let mut status = ExitStatus::Success;
        for stmt in &stmts {
            match self.execute(stmt) {
                Ok((out, rendered)) => {
                    sink(&rendered);
                    status = status.max(ExitStatus::of_output(&out));
                }
                Err(e) => {
                    sink(&format!("error: {e}\n"));
                    status = status.max(ExitStatus::of_error(&e));
                    if !keep_going {
                        break;
                    }
                }
            }
        }
        status
    }
}

/// Reads and runs a script file. Relative paths inside the script resolve
/// against the script's directory.
pub fn run_script(
    path: &Path,
    mut config: EngineConfig,
    clock: ClockMode,
    format: Format,
    keep_going: bool,
    sink: &mut dyn FnMut(&str),
) -> ExitStatus {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            sink(&format!("error: {}: {e}\n", path.display()));
            return ExitStatus::UserError;
        }
    };
    if config.base_dir.is_none() {
        config.base_dir = path.parent().map(Path::to_path_buf);
    }
    let mut session = Session::new(config, clock, format);
    session.run_text(&text, keep_going, sink)
}

pub fn render(out: &Output, format: Format) -> String {
    match out {
        Output::None => String::new(),
        Output::Message(m) | Output::Text(m) => {
            let mut s = m.clone();
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s
        }
        Output::Rows(r) => render_rows(r, format),
        Output::Validation(v) => {
            if v.is_empty() {
                return "validation: no dynamic tables\n".into();
            }
            let mut s = String::new();
            for e in v {
                let verdict = if e.passed { "PASS" } else { "FAIL" };
                writeln!(s, "validate {} @ {}: {verdict}", e.dt, e.refresh_ts).unwrap();
            }
            s
        }
        Output::Records(rs) => rs.iter().map(|r| r.to_json() + "\n").collect(),
    }
}

fn cell(v: &Value) -> String {
    v.to_string()
}

fn json_value(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Bool(b) => (*b).into(),
        Value::Int64(i) | Value::Timestamp(i) => (*i).into(),
        Value::Float64(f) => serde_json::Number::from_f64(*f).map_or(serde_json::Value::Null, Into::into),
        Value::Text(s) => s.clone().into(),
    }
}

/// Rows are emitted in row-id order so output is stable across runs.
pub fn render_rows(r: &QueryResult, format: Format) -> String {
    let mut rows: Vec<_> = r.rows.iter().collect();
    rows.sort_by_key(|row| row.row_id);
    let names: Vec<&str> = r.schema.columns.iter().map(|c| c.name.as_str()).collect();
    match format {
        Format::Table => {
            let cells: Vec<Vec<String>> = rows.iter().map(|row| row.values.iter().map(cell).collect()).collect();
            let mut widths: Vec<usize> = names.iter().map(|n| n.len()).collect();
            for row in &cells {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |vals: &[String]| -> String {
                let padded: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
                padded.join(" | ").trim_end().to_string()
            };
            let mut s = String::new();
            writeln!(s, "{}", line(&names.iter().map(|n| n.to_string()).collect::<Vec<_>>())).unwrap();
            writeln!(s, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-")).unwrap();
            for row in &cells {
                writeln!(s, "{}", line(row)).unwrap();
            }
            let plural = if cells.len() == 1 { "" } else { "s" };
            match r.isolation {
                Some(iso) => writeln!(s, "({} row{plural}, {iso})", cells.len()).unwrap(),
                None => writeln!(s, "({} row{plural})", cells.len()).unwrap(),
            }
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&names).expect("in-memory write");
            for row in &rows {
                w.write_record(row.values.iter().map(cell)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        }
        Format::Json => {
            let arr: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    let obj: serde_json::Map<String, serde_json::Value> =
                        names.iter().zip(&row.values).map(|(n, v)| (n.to_string(), json_value(v))).collect();
                    serde_json::Value::Object(obj)
                })
                .collect();
            serde_json::to_string(&arr).expect("rows serialize") + "\n"
        }
    }
}
