use std::io::{BufRead, Write};

use crate::session::Session;

/// Reads statements terminated by `;` and executes each as it completes.
/// Errors are printed and the loop continues.
pub fn repl<R: BufRead, W: Write>(session: &mut Session, input: R, mut out: W) -> std::io::Result<()> {
    let mut buf = String::new();
    write!(out, "dynotab> ")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        buf.push_str(&line);
        buf.push('\n');
        if line.trim_end().ends_with(';') {
            let text = std::mem::take(&mut buf);
            session.run_text(&text, true, &mut |s| {
                let _ = out.write_all(s.as_bytes());
            });
        }
        write!(out, "{}", if buf.trim().is_empty() { "dynotab> " } else { "      -> " })?;
        out.flush()?;
    }
    if !buf.trim().is_empty() {
        session.run_text(&buf, true, &mut |s| {
            let _ = out.write_all(s.as_bytes());
        });
    }
    writeln!(out)
}
