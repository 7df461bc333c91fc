//! Shell layer for the `rxo` binary: session bindings, deterministic
//! result rendering, and the bodies of the repl, exec, dump, and check
//! subcommands.
//!
//! Each subcommand body returns a process exit code so the binary stays
//! thin: 0 for success, 1 for execution or verification failures. Usage
//! errors exit with 2 from argument parsing before these run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::Path;

use rxo_core::ast::SessionStatement;
use rxo_core::parser::ScriptParser;
use rxo_core::persistence;
use rxo_core::token::{self, Punct, TokenKind};
use rxo_core::{Engine, Error, Oid, Result, StatementResult};

/// One open database plus the session-local `LET` bindings. Bindings are
/// resolved to `#oid` form at parse time and never reach the journal.
pub struct Session {
    engine: Engine,
    bindings: BTreeMap<String, Oid>,
}

impl Session {
    pub fn open(dir: &Path) -> Result<Session> {
        Ok(Session {
            engine: Engine::open(dir)?,
            bindings: BTreeMap::new(),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn bindings(&self) -> &BTreeMap<String, Oid> {
        &self.bindings
    }

    pub fn checkpoint(&mut self) -> Result<()> {
        self.engine.checkpoint()
    }

    /// Execute one session statement, recording the binding of a `LET`.
    pub fn apply(&mut self, stmt: SessionStatement) -> Result<StatementResult> {
        match stmt {
            SessionStatement::Plain(s) => self.engine.execute(&s),
            SessionStatement::Let { name, stmt } => {
                let result = self.engine.execute(&stmt)?;
                if let StatementResult::Created(oid) = result {
                    self.bindings.insert(name, oid);
                }
                Ok(result)
            }
        }
    }
}

/// Render one statement outcome for the shell. Values serialize exactly
/// as in the snapshot, so identical states print identically.
pub fn format_result(result: &StatementResult) -> String {
    match result {
        StatementResult::Defined | StatementResult::Destroyed => "OK".to_string(),
        StatementResult::Progressed(oid) => format!("OK {oid}"),
        StatementResult::Created(oid) => oid.to_string(),
        StatementResult::Updated(v) | StatementResult::Value(v) => v.render(),
        StatementResult::Query(q) => {
            let mut out = q.columns.join(" | ");
            out.push('\n');
            for (oid, values) in &q.rows {
                out.push_str(&oid.to_string());
                for v in values {
                    out.push_str(" | ");
                    out.push_str(&v.render());
                }
                out.push('\n');
            }
            let _ = write!(out, "({} rows)", q.rows.len());
            out
        }
    }
}

// ---- repl ------------------------------------------------------------------

/// Interactive loop on stdin/stdout. Prompts appear only on a terminal,
/// so piped transcripts are clean.
pub fn run_repl(db: &Path) -> i32 {
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut out = io::stdout();
    repl_loop(db, &mut stdin.lock(), &mut out, interactive)
}

/// A buffered line is an incomplete statement while it has unbalanced
/// brackets; otherwise it is parsed and executed. Lexically broken input
/// is handed to the parser so the error is reported once.
fn open_brackets(src: &str) -> usize {
    let Ok(toks) = token::tokenize(src) else {
        return 0;
    };
    let mut depth = 0usize;
    for t in &toks {
        match &t.kind {
            TokenKind::Punct(Punct::LBrace) | TokenKind::Punct(Punct::LParen) => depth += 1,
            TokenKind::Punct(Punct::RBrace) | TokenKind::Punct(Punct::RParen) => {
                depth = depth.saturating_sub(1)
            }
            _ => {}
        }
    }
    depth
}

pub fn repl_loop(db: &Path, input: &mut dyn BufRead, out: &mut dyn Write, interactive: bool) -> i32 {
    let mut session = match Session::open(db) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(out, "ERROR {}: {e}", e.kind());
            return 1;
        }
    };
    let mut buffer = String::new();
    loop {
        if interactive {
            let prompt = if buffer.is_empty() { "rxo> " } else { "...> " };
            let _ = write!(out, "{prompt}");
            let _ = out.flush();
        }
        let mut line = String::new();
        match input.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                let _ = writeln!(out, "ERROR IoError: {e}");
                return 1;
            }
        }
        if buffer.is_empty() {
            match line.trim() {
                "" => continue,
                "\\q" => break,
                "\\snapshot" => {
                    match session.checkpoint() {
                        Ok(()) => {
                            let _ = writeln!(out, "OK");
                        }
                        Err(e) => {
                            let _ = writeln!(out, "ERROR {}: {e}", e.kind());
                        }
                    }
                    continue;
                }
                _ => {}
            }
        }
        buffer.push_str(&line);
        if open_brackets(&buffer) > 0 {
            continue;
        }
        run_buffer(&mut session, &buffer, out);
        buffer.clear();
    }
    0
}

/// Parse and execute every statement in one complete input buffer. The
/// first error abandons the rest of the buffer; the session survives.
fn run_buffer(session: &mut Session, buffer: &str, out: &mut dyn Write) {
    let mut parser = match ScriptParser::new(buffer) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(out, "ERROR {}: {e}", e.kind());
            return;
        }
    };
    loop {
        let bindings = session.bindings().clone();
        match parser.next_session(&bindings, true) {
            None => break,
            Some(Ok(stmt)) => match session.apply(stmt) {
                Ok(result) => {
                    let _ = writeln!(out, "{}", format_result(&result));
                }
                Err(e) => {
                    let _ = writeln!(out, "ERROR {}: {e}", e.kind());
                    break;
                }
            },
            Some(Err(e)) => {
                let _ = writeln!(out, "ERROR {}: {e}", e.kind());
                break;
            }
        }
    }
}

// ---- exec ------------------------------------------------------------------

/// Run a script file against the database: statements apply in order,
/// results print one per line, and the first failure stops the run with
/// its 1-based statement index. Applied statements stay applied.
pub fn run_exec(db: &Path, file: &Path) -> i32 {
    match exec_script(db, file, &mut io::stdout()) {
        Ok(()) => 0,
        Err(line) => {
            eprintln!("{line}");
            1
        }
    }
}

pub fn exec_script(db: &Path, file: &Path, out: &mut dyn Write) -> std::result::Result<(), String> {
    let source = fs::read_to_string(file)
        .map_err(|e| format!("ERROR IoError: cannot read {}: {e}", file.display()))?;
    let mut session =
        Session::open(db).map_err(|e| format!("ERROR {}: {e}", e.kind()))?;
    let mut parser =
        ScriptParser::new(&source).map_err(|e| format_script_error(&e, statement_of(&e, 1)))?;
    loop {
        let bindings = session.bindings().clone();
        match parser.next_session(&bindings, true) {
            None => return Ok(()),
            Some(Ok(stmt)) => {
                let index = parser.current_index();
                match session.apply(stmt) {
                    Ok(result) => {
                        let _ = writeln!(out, "{}", format_result(&result));
                    }
                    Err(e) => return Err(format_script_error(&e, index)),
                }
            }
            Some(Err(e)) => {
                let index = statement_of(&e, parser.current_index().max(1));
                return Err(format_script_error(&e, index));
            }
        }
    }
}

fn statement_of(e: &Error, fallback: usize) -> usize {
    match e {
        Error::Parse {
            statement: Some(i), ..
        } => *i,
        _ => fallback,
    }
}

fn format_script_error(e: &Error, index: usize) -> String {
    format!("ERROR {} at statement {index}: {e}", e.kind())
}

// ---- dump ------------------------------------------------------------------

/// Extent filter for `rxo dump`.
#[derive(Debug, Clone, Copy)]
pub enum DumpFilter<'a> {
    All,
    Class(&'a str),
    Role(&'a str),
}

/// Relation blocks in snapshot row syntax: a `RELATION` header line per
/// catalog entry followed by its rows in ascending OID order. A filter
/// restricts the output to that one relation, whose row set is exactly
/// the extent of the named class or role.
pub fn render_dump(engine: &Engine, filter: DumpFilter<'_>) -> Result<String> {
    let catalog = engine.catalog();
    let selected: Vec<&str> = match filter {
        DumpFilter::All => catalog.ordered().iter().map(|d| d.name()).collect(),
        DumpFilter::Class(name) => match catalog.get(name) {
            Some(def) if def.is_class() => vec![def.name()],
            _ => return Err(Error::UnknownClass(name.to_string())),
        },
        DumpFilter::Role(name) => match catalog.get(name) {
            Some(def) if !def.is_class() => vec![def.name()],
            _ => return Err(Error::UnknownType(name.to_string())),
        },
    };
    let mut out = String::new();
    for name in selected {
        let def = catalog.entry(name)?;
        let kind = if def.is_class() { "CLASS" } else { "ROLE" };
        let _ = writeln!(out, "RELATION {kind} {name}");
        let rel = engine.store().relation(name)?;
        for (oid, row) in &rel.rows {
            out.push_str(&oid.to_string());
            for v in row {
                out.push('|');
                out.push_str(&v.render());
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn run_dump(db: &Path, class: Option<&str>, role: Option<&str>) -> i32 {
    let engine = match Engine::open(db) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.kind());
            return 1;
        }
    };
    let filter = match (class, role) {
        (Some(c), None) => DumpFilter::Class(c),
        (None, Some(r)) => DumpFilter::Role(r),
        (None, None) => DumpFilter::All,
        (Some(_), Some(_)) => unreachable!("rejected by argument parsing"),
    };
    match render_dump(&engine, filter) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.kind());
            1
        }
    }
}

// ---- check -----------------------------------------------------------------

/// Verify files and invariants without mutating anything; one line per
/// check, nonzero exit if any fails.
pub fn run_check(db: &Path) -> i32 {
    let report = persistence::verify(db);
    for (name, finding) in &report.entries {
        match finding {
            None => println!("{name}: ok"),
            Some(msg) => println!("{name}: FAILED ({msg})"),
        }
    }
    if report.ok() {
        0
    } else {
        1
    }
}
