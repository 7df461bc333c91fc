//! Durability: append-only statement journal and snapshot checkpoints.
//!
//! A database directory holds two UTF-8 files. `db.journal` starts with
//! the header line `RXOJ1` followed by one `crc8hex<TAB>statement\n`
//! record per executed mutating statement. `db.snapshot` is the canonical
//! document `RXOS1` / `CATALOG` (DDL statements, execution order) /
//! `DATA` (one `RELATION` block per catalog entry, rows ascending OID) /
//! `NEXTOID n` / `END crc8hex`. Recovery loads the snapshot and replays
//! the journal suffix. A statement is durable exactly when its record is
//! completely written with a valid checksum: an incomplete final line is
//! a torn write and is dropped; a complete line that fails its checksum
//! is corruption and aborts the open.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::executor::Engine;
use crate::parser;
use crate::relstore::Store;
use crate::token::{self, TokenKind};
use crate::value::{Oid, Value};

pub const SNAPSHOT_FILE: &str = "db.snapshot";
pub const JOURNAL_FILE: &str = "db.journal";
const SNAPSHOT_MAGIC: &str = "RXOS1";
const JOURNAL_HEADER: &str = "RXOJ1\n";

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

// ---- journal -------------------------------------------------------------

/// Append handle for the journal of one open database.
#[derive(Debug)]
pub struct Journal {
    dir: PathBuf,
    file: fs::File,
}

impl Journal {
    /// Open the journal for appending, creating it (with header) if absent.
    pub fn open_append(dir: &Path) -> Result<Journal> {
        let path = dir.join(JOURNAL_FILE);
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        if file.metadata()?.len() == 0 {
            file.write_all(JOURNAL_HEADER.as_bytes())?;
            file.sync_data()?;
        }
        Ok(Journal {
            dir: dir.to_path_buf(),
            file,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Append one canonical statement record and flush it to stable
    /// storage before returning.
    pub fn append(&mut self, stmt: &str) -> Result<()> {
        debug_assert!(!stmt.contains('\n'));
        let line = format!("{}\t{stmt}\n", crc_hex(stmt.as_bytes()));
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }

    /// Reset the journal to just its header (after a checkpoint).
    pub fn truncate(&mut self) -> Result<()> {
        self.file.set_len(0)?;
        self.file.write_all(JOURNAL_HEADER.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Read and validate all journal records. Returns the statements and the
/// byte length of the valid prefix (shorter than the file when a torn
/// final line was dropped).
pub fn read_journal(path: &Path) -> Result<(Vec<String>, u64)> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::JournalCorrupt {
        record: 0,
        msg: "journal is not UTF-8".to_string(),
    })?;
    let Some(rest) = text.strip_prefix(JOURNAL_HEADER) else {
        return Err(Error::JournalCorrupt {
            record: 0,
            msg: "bad journal header".to_string(),
        });
    };

    let mut records = Vec::new();
    let mut valid_len = JOURNAL_HEADER.len();
    let mut remaining = rest;
    let mut index = 0usize;
    while let Some(nl) = remaining.find('\n') {
        let line = &remaining[..nl];
        index += 1;
        let Some((crc, stmt)) = line.split_once('\t') else {
            return Err(Error::JournalCorrupt {
                record: index,
                msg: "malformed record (no checksum field)".to_string(),
            });
        };
        if crc.len() != 8 || crc != crc_hex(stmt.as_bytes()) {
            return Err(Error::JournalCorrupt {
                record: index,
                msg: "checksum mismatch".to_string(),
            });
        }
        records.push(stmt.to_string());
        valid_len += nl + 1;
        remaining = &remaining[nl + 1..];
    }
    Ok((records, valid_len as u64))
}

// ---- snapshot --------------------------------------------------------------

/// Render the canonical snapshot document for a state.
pub fn render_snapshot(catalog: &Catalog, store: &Store) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(SNAPSHOT_MAGIC);
    out.push_str("\nCATALOG\n");
    for line in catalog.ddl_log() {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("DATA\n");
    for def in catalog.ordered() {
        let kind = if def.is_class() { "CLASS" } else { "ROLE" };
        out.push_str(&format!("RELATION {kind} {}\n", def.name()));
        let rel = store.relation(def.name()).expect("catalog/store in sync");
        for (oid, row) in &rel.rows {
            out.push_str(&format!("#{}", oid.0));
            for v in row {
                out.push('|');
                out.push_str(&v.render());
            }
            out.push('\n');
        }
    }
    out.push_str(&format!("NEXTOID {}\n", store.next_oid()));
    let crc = crc_hex(out.as_bytes());
    out.push_str(&format!("END {crc}\n"));
    out.into_bytes()
}

/// Atomically replace the snapshot file, then the caller truncates the
/// journal.
pub fn write_snapshot(dir: &Path, catalog: &Catalog, store: &Store) -> Result<()> {
    let bytes = render_snapshot(catalog, store);
    let tmp = dir.join("db.snapshot.tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::SnapshotCorrupt(msg.into())
}

/// Parse and fully validate a snapshot document into a fresh state.
pub fn load_snapshot(bytes: &[u8]) -> Result<(Catalog, Store)> {
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("snapshot is not UTF-8"))?;
    if !text.ends_with('\n') {
        return Err(corrupt("missing trailing newline"));
    }
    let body_end = text[..text.len() - 1]
        .rfind('\n')
        .map(|i| i + 1)
        .unwrap_or(0);
    let trailer = &text[body_end..text.len() - 1];
    let Some(stated) = trailer.strip_prefix("END ") else {
        return Err(corrupt("missing END trailer"));
    };
    if stated != crc_hex(text[..body_end].as_bytes()) {
        return Err(corrupt("checksum mismatch"));
    }

    let mut lines = text[..body_end].split('\n');
    if lines.next() != Some(SNAPSHOT_MAGIC) {
        return Err(corrupt("bad magic"));
    }
    if lines.next() != Some("CATALOG") {
        return Err(corrupt("missing CATALOG section"));
    }

    // Rebuild schema by executing the DDL through a scratch engine.
    let mut engine = Engine::in_memory();
    let mut line = lines.next();
    while let Some(l) = line {
        if l == "DATA" {
            break;
        }
        let stmt = parser::parse_statement(l)
            .map_err(|e| corrupt(format!("bad CATALOG statement `{l}`: {e}")))?;
        if !matches!(
            stmt,
            crate::ast::Statement::CreateClass { .. }
                | crate::ast::Statement::CreateRole { .. }
                | crate::ast::Statement::AlterAddAttribute { .. }
                | crate::ast::Statement::AlterAddMethod { .. }
                | crate::ast::Statement::AlterReplaceMethod { .. }
        ) {
            return Err(corrupt(format!("non-DDL statement in CATALOG: `{l}`")));
        }
        engine
            .execute(&stmt)
            .map_err(|e| corrupt(format!("CATALOG statement failed: {e}")))?;
        line = lines.next();
    }
    if line != Some("DATA") {
        return Err(corrupt("missing DATA section"));
    }
    let (catalog, mut store) = engine.into_parts();

    // Relation blocks must mirror the catalog exactly, in creation order.
    let mut line = lines.next();
    for def in catalog.ordered() {
        let kind = if def.is_class() { "CLASS" } else { "ROLE" };
        let expect = format!("RELATION {kind} {}", def.name());
        if line != Some(expect.as_str()) {
            return Err(corrupt(format!(
                "expected `{expect}`, found `{}`",
                line.unwrap_or("<end>")
            )));
        }
        line = lines.next();
        while let Some(row) = line {
            if !row.starts_with('#') {
                break;
            }
            let (oid, cells) = split_row(row)?;
            if cells.len() != def.attrs().len() {
                return Err(corrupt(format!(
                    "row {oid} of `{}` has {} cells, expected {}",
                    def.name(),
                    cells.len(),
                    def.attrs().len()
                )));
            }
            let values = cells
                .iter()
                .map(|c| parse_cell(c))
                .collect::<Result<Vec<Value>>>()?;
            store
                .insert_row(def.name(), oid, values)
                .map_err(|e| corrupt(format!("{e}")))?;
            line = lines.next();
        }
    }

    let Some(next) = line.and_then(|l| l.strip_prefix("NEXTOID ")) else {
        return Err(corrupt("missing NEXTOID"));
    };
    let next: u64 = next
        .parse()
        .map_err(|_| corrupt("NEXTOID is not a number"))?;
    // The body ends with the NEXTOID line's newline, so the split yields
    // one final empty piece.
    if lines.next() != Some("") || lines.next().is_some() {
        return Err(corrupt("trailing content after NEXTOID"));
    }
    store.set_next_oid(next);

    rebuild_headers(&catalog, &mut store)?;
    let findings = store.audit(&catalog);
    if !findings.is_empty() {
        return Err(corrupt(format!("audit failed: {}", findings.join("; "))));
    }
    Ok((catalog, store))
}

/// Derive object headers from row presence: the most-derived class is the
/// unique class whose chain equals the set of class relations holding the
/// OID; roles are the role relations holding it.
fn rebuild_headers(catalog: &Catalog, store: &mut Store) -> Result<()> {
    use std::collections::BTreeMap;
    let mut classes: BTreeMap<Oid, Vec<String>> = BTreeMap::new();
    let mut roles: BTreeMap<Oid, Vec<String>> = BTreeMap::new();
    for rel in store.relations() {
        for &oid in rel.rows.keys() {
            let bucket = if rel.is_role { &mut roles } else { &mut classes };
            bucket.entry(oid).or_default().push(rel.owner.clone());
        }
    }
    for (&oid, role_list) in &roles {
        if !classes.contains_key(&oid) {
            let role = &role_list[0];
            return Err(corrupt(format!("{oid} has a `{role}` row but no class rows")));
        }
    }
    let entries: Vec<(Oid, String, Vec<String>)> = classes
        .into_iter()
        .map(|(oid, mut present)| {
            present.sort();
            let mdc = present
                .iter()
                .find(|c| {
                    catalog
                        .chain(c)
                        .map(|chain| {
                            let mut chain: Vec<&str> = chain;
                            chain.sort_unstable();
                            chain.len() == present.len()
                                && chain.iter().zip(&present).all(|(a, b)| a == b)
                        })
                        .unwrap_or(false)
                })
                .cloned()
                .ok_or_else(|| corrupt(format!("rows of {oid} do not form a class chain")))?;
            Ok((oid, mdc, roles.get(&oid).cloned().unwrap_or_default()))
        })
        .collect::<Result<_>>()?;
    for (oid, mdc, role_list) in entries {
        store.insert_object(oid, &mdc);
        for role in role_list {
            store.add_role_to(oid, &role);
        }
    }
    Ok(())
}

/// Split a `#oid|v1|...|vn` row line, honoring `|` inside string literals.
fn split_row(line: &str) -> Result<(Oid, Vec<String>)> {
    let rest = line.strip_prefix('#').expect("caller checked");
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let oid: u64 = digits
        .parse()
        .map_err(|_| corrupt(format!("bad row oid in `{line}`")))?;
    let mut rest = &rest[digits.len()..];
    let mut cells = Vec::new();
    while !rest.is_empty() {
        let Some(tail) = rest.strip_prefix('|') else {
            return Err(corrupt(format!("malformed row `{line}`")));
        };
        let mut end = tail.len();
        let mut in_string = false;
        let mut escaped = false;
        for (i, c) in tail.char_indices() {
            if escaped {
                escaped = false;
                continue;
            }
            match c {
                '\\' if in_string => escaped = true,
                '"' => in_string = !in_string,
                '|' if !in_string => {
                    end = i;
                    break;
                }
                _ => {}
            }
        }
        cells.push(tail[..end].to_string());
        rest = &tail[end..];
    }
    Ok((Oid(oid), cells))
}

/// Parse one serialized cell back into a value.
fn parse_cell(cell: &str) -> Result<Value> {
    let toks =
        token::tokenize(cell).map_err(|_| corrupt(format!("unreadable cell `{cell}`")))?;
    let kinds: Vec<&TokenKind> = toks.iter().map(|t| &t.kind).collect();
    let value = match kinds.as_slice() {
        [TokenKind::Int(m)] if *m <= i64::MAX as u64 => Value::Int(*m as i64),
        [TokenKind::Punct(token::Punct::Minus), TokenKind::Int(m)] => {
            Value::Int((-(*m as i128)) as i64)
        }
        [TokenKind::Float(x)] => Value::Float(*x),
        [TokenKind::Punct(token::Punct::Minus), TokenKind::Float(x)] => Value::Float(-x),
        [TokenKind::Str(s)] => Value::Str(s.clone()),
        [TokenKind::Bool(b)] => Value::Bool(*b),
        [TokenKind::Kw(token::Kw::Null)] => Value::Ref(None),
        [TokenKind::OidLit(n)] => Value::Ref(Some(Oid(*n))),
        _ => return Err(corrupt(format!("unreadable cell `{cell}`"))),
    };
    Ok(value)
}

// ---- open / verify ---------------------------------------------------------

/// Open a database directory: load the snapshot if present, replay the
/// journal, drop any torn tail, and attach the append handle.
pub fn open_db(dir: &Path) -> Result<Engine> {
    fs::create_dir_all(dir)?;
    let snap_path = dir.join(SNAPSHOT_FILE);
    let (catalog, store) = if snap_path.exists() {
        load_snapshot(&fs::read(&snap_path)?)?
    } else {
        (Catalog::new(), Store::new())
    };
    let mut engine = Engine::from_parts(catalog, store);

    let journal_path = dir.join(JOURNAL_FILE);
    if journal_path.exists() {
        let (records, valid_len) = read_journal(&journal_path)?;
        for (i, record) in records.iter().enumerate() {
            let stmt = parser::parse_statement(record).map_err(|e| Error::JournalCorrupt {
                record: i + 1,
                msg: format!("unparseable statement: {e}"),
            })?;
            engine.execute(&stmt).map_err(|e| Error::ReplayError {
                record: i + 1,
                cause: Box::new(e),
            })?;
        }
        let on_disk = fs::metadata(&journal_path)?.len();
        if valid_len < on_disk {
            let file = fs::OpenOptions::new().write(true).open(&journal_path)?;
            file.set_len(valid_len)?;
            file.sync_data()?;
        }
    }

    if !snap_path.exists() {
        write_snapshot(dir, engine.catalog(), engine.store())?;
    }
    engine.attach_journal(Journal::open_append(dir)?);
    Ok(engine)
}

/// Integrity report: each entry is a check name plus `None` (pass) or the
/// failure description. Never mutates the database.
pub struct CheckReport {
    pub entries: Vec<(String, Option<String>)>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.entries.iter().all(|(_, f)| f.is_none())
    }
}

pub fn verify(dir: &Path) -> CheckReport {
    let mut entries: Vec<(String, Option<String>)> = Vec::new();
    let mut record = |name: &str, outcome: Option<String>| {
        entries.push((name.to_string(), outcome));
    };

    let snap_path = dir.join(SNAPSHOT_FILE);
    let loaded = if snap_path.exists() {
        match fs::read(&snap_path).map_err(Error::from).and_then(|b| load_snapshot(&b)) {
            Ok(parts) => {
                record("snapshot checksum and structure", None);
                Some(parts)
            }
            Err(e) => {
                record("snapshot checksum and structure", Some(e.to_string()));
                None
            }
        }
    } else {
        record(
            "snapshot checksum and structure",
            Some("snapshot file missing".to_string()),
        );
        None
    };

    let journal_path = dir.join(JOURNAL_FILE);
    let records = if journal_path.exists() {
        match read_journal(&journal_path) {
            Ok((records, _)) => {
                record("journal checksums", None);
                Some(records)
            }
            Err(e) => {
                record("journal checksums", Some(e.to_string()));
                None
            }
        }
    } else {
        record("journal checksums", Some("journal file missing".to_string()));
        None
    };

    match (loaded, records) {
        (Some((catalog, store)), Some(records)) => {
            let mut engine = Engine::from_parts(catalog, store);
            let mut failure = None;
            for (i, text) in records.iter().enumerate() {
                let outcome = parser::parse_statement(text)
                    .and_then(|stmt| engine.execute(&stmt).map(|_| ()));
                if let Err(e) = outcome {
                    failure = Some(format!("record {}: {e}", i + 1));
                    break;
                }
            }
            record("journal replay", failure);
            let findings = engine.audit();
            record(
                "partitioning, typing, and reference audit",
                if findings.is_empty() {
                    None
                } else {
                    Some(findings.join("; "))
                },
            );
        }
        _ => {
            record(
                "journal replay",
                Some("skipped: files unreadable".to_string()),
            );
        }
    }

    CheckReport { entries }
}
