use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dynotab::fuzz::fuzz;
use dynotab::{run_script, ClockMode, Format, Session};
use dynotab_core::engine::{EngineConfig, RecordMode};
use dynotab_core::sched::CostModel;

#[derive(Parser)]
#[command(name = "dynotab", version, about = "Dynamic tables with delayed view semantics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Record {
    Dvs,
    Persisted,
}

#[derive(clap::Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value_t = ClockMode::Virtual)]
    clock: ClockMode,
    /// Record transaction history for DUMP HISTORY and DUMP DSG.
    #[arg(long, value_enum)]
    record_history: Option<Record>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Smallest accepted target lag, in seconds.
    #[arg(long, default_value_t = 48)]
    min_target_lag: i64,
    /// Simulated refresh duration: `constant:N` or `linear:FIXED,PER_ROW`.
    #[arg(long, default_value = "constant:0", value_parser = parse_cost)]
    cost_model: CostModel,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            min_target_lag: self.min_target_lag,
            cost_model: self.cost_model,
            record: self.record_history.map(|r| match r {
                Record::Dvs => RecordMode::Dvs,
                Record::Persisted => RecordMode::Persisted,
            }),
            ..Default::default()
        }
    }
}

fn parse_cost(s: &str) -> Result<CostModel, String> {
    CostModel::parse(s).ok_or_else(|| format!("expected constant:N or linear:A,B, got {s:?}"))
}

#[derive(Subcommand)]
enum Command {
    /// Execute a script file.
    Run {
        script: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        /// Continue past failing statements.
        #[arg(long)]
        keep_going: bool,
    },
    /// Interactive session reading statements from stdin.
    Repl {
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Randomized oracle testing.
    Fuzz {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Commit raw deltas, to check that the oracle notices.
        #[arg(long)]
        disable_consolidation: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match cli.command {
        Command::Run { script, engine, keep_going } => {
            let mut lock = stdout.lock();
            let status = run_script(&script, engine.config(), engine.clock, engine.format, keep_going, &mut |s| {
                let _ = lock.write_all(s.as_bytes());
            });
            ExitCode::from(status.code() as u8)
        }
        Command::Repl { engine } => {
            let mut session = Session::new(engine.config(), engine.clock, engine.format);
            match dynotab::repl::repl(&mut session, std::io::stdin().lock(), stdout.lock()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Fuzz { seed, cases, disable_consolidation } => {
            let config = EngineConfig { disable_consolidation, ..Default::default() };
            let report = fuzz(seed, cases, &config);
            print!("{}", report.transcript);
            if report.failed() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
