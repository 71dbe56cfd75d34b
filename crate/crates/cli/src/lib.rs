//! Session, script runner, REPL and fuzzer for the dynotab engine.

pub mod fuzz;
pub mod gen;
pub mod repl;
pub mod session;

pub use session::{render, run_script, ClockMode, ExitStatus, Format, Session};
