//! End-to-end tests of the `rxo` and `rxo-difftest` binaries: golden
//! transcripts, exit codes, and the session-binding hygiene invariant.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn rxo(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rxo"));
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    rxo(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn write_script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SCENARIO: &str = r#"CREATE CLASS Employee { name: STRING; METHOD title(): STRING = "Employee"; }
CREATE CLASS Manager EXTENDS Employee { bonus: INT; CONSTRUCTOR(b: INT) { bonus := b; } METHOD title(): STRING = "Manager"; }
CREATE CLASS Library { holder: REF<Employee> = NULL; }
LET ann = NEW Employee(name = "Ann")
NEW Library(holder = #1)
PROGRESS ann TO Manager(5)
CALL ann.title()
SELECT * FROM Manager
"#;

#[test]
fn exec_runs_a_scenario_script_with_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let script = write_script(dir.path(), "scenario.rxo", SCENARIO);
    let out = run(&["exec", "--db", db.to_str().unwrap(), &script]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "OK\nOK\nOK\n#1\n#2\nOK #1\n\"Manager\"\noid | name | bonus\n#1 | \"Ann\" | 5\n(1 rows)\n"
    );
}

#[test]
fn exec_stops_at_the_first_error_and_names_the_statement() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let script = write_script(
        dir.path(),
        "bad.rxo",
        "CREATE CLASS A { x: INT = 0; }\nNEW A()\nSET #1.y = 2\nNEW A()\n",
    );
    let out = run(&["exec", "--db", db.to_str().unwrap(), &script]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out), "OK\n#1\n");
    assert_eq!(
        stderr(&out),
        "ERROR NameError at statement 3: no attribute `y` on #1\n"
    );

    // Prior statements stay applied: the object survives the failed run.
    let dump = run(&["dump", "--db", db.to_str().unwrap()]);
    assert_eq!(stdout(&dump), "RELATION CLASS A\n#1|0\n");
}

#[test]
fn rerunning_a_create_script_reports_duplicate_name_at_statement_one() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let script = write_script(dir.path(), "ddl.rxo", "CREATE CLASS A { x: INT = 0; }\n");
    assert_eq!(run(&["exec", "--db", db.to_str().unwrap(), &script]).status.code(), Some(0));
    let again = run(&["exec", "--db", db.to_str().unwrap(), &script]);
    assert_eq!(again.status.code(), Some(1));
    assert_eq!(
        stderr(&again),
        "ERROR DuplicateName at statement 1: duplicate name `A`\n"
    );
}

#[test]
fn repl_transcript_is_golden_and_errors_are_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let mut child = rxo(&["repl", "--db", db.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let input = "CREATE CLASS Employee {\n  name: STRING;\n  salary: INT = 0;\n}\n\
                 LET x = NEW Employee(name = \"Ann\")\n\
                 SET x.salary = salary + 7\n\
                 CALL x.nope()\n\
                 SELECT * FROM Employee\n\
                 \\snapshot\n\
                 DESTROY nobody\n\
                 \\q\n";
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "OK\n#1\n7\nERROR UnknownMethod: unknown method `nope`\n\
         oid | name | salary\n#1 | \"Ann\" | 7\n(1 rows)\n\
         OK\nERROR NameError: unknown variable `nobody`\n"
    );
    // \snapshot checkpointed: journal reduced to its header.
    assert_eq!(fs::read_to_string(db.join("db.journal")).unwrap(), "RXOJ1\n");
}

#[test]
fn journals_are_identical_with_and_without_let_bindings() {
    let plain = "CREATE CLASS A { x: INT = 0; }\nNEW A()\nSET #1.x = 5\nPROGRESS #1 TO A()\n";
    let bound = "CREATE CLASS A { x: INT = 0; }\nLET a = NEW A()\nSET a.x = 5\nPROGRESS a TO A()\n";
    let mut journals = Vec::new();
    for (name, body) in [("plain.rxo", plain), ("bound.rxo", bound)] {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("db");
        let script = write_script(dir.path(), name, body);
        let out = run(&["exec", "--db", db.to_str().unwrap(), &script]);
        // PROGRESS to the object's own class fails, but parsing resolved
        // the binding; only the three journaled statements matter here.
        assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
        journals.push(fs::read(db.join("db.journal")).unwrap());
    }
    assert_eq!(journals[0], journals[1]);
    let text = String::from_utf8(journals[0].clone()).unwrap();
    assert!(text.contains("\tNEW #1 = A()\n"), "journal: {text}");
}

#[test]
fn dump_filters_select_one_extent() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let script = write_script(
        dir.path(),
        "roles.rxo",
        "CREATE CLASS Employee { name: STRING; }\n\
         CREATE CLASS Manager EXTENDS Employee { bonus: INT = 0; }\n\
         CREATE ROLE Mentor FOR Employee { mentee: REF<Employee> = NULL; }\n\
         NEW Employee(name = \"Ann\")\n\
         NEW Manager(name = \"Bo\")\n\
         PROGRESS #1 TO Manager()\n\
         PROGRESS #2 TO Mentor()\n",
    );
    assert_eq!(run(&["exec", "--db", db.to_str().unwrap(), &script]).status.code(), Some(0));

    let class = run(&["dump", "--db", db.to_str().unwrap(), "--class", "Employee"]);
    assert_eq!(class.status.code(), Some(0));
    assert_eq!(stdout(&class), "RELATION CLASS Employee\n#1|\"Ann\"\n#2|\"Bo\"\n");

    let role = run(&["dump", "--db", db.to_str().unwrap(), "--role", "Mentor"]);
    assert_eq!(stdout(&role), "RELATION ROLE Mentor\n#2|NULL\n");

    let unknown = run(&["dump", "--db", db.to_str().unwrap(), "--class", "Zed"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert_eq!(stderr(&unknown), "ERROR UnknownClass: unknown class `Zed`\n");

    let wrong_kind = run(&["dump", "--db", db.to_str().unwrap(), "--role", "Manager"]);
    assert_eq!(wrong_kind.status.code(), Some(1));

    let both = run(&[
        "dump", "--db", db.to_str().unwrap(), "--class", "Employee", "--role", "Mentor",
    ]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn check_reports_each_verification_and_fails_on_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let script = write_script(
        dir.path(),
        "w.rxo",
        "CREATE CLASS A { x: INT = 0; }\nNEW A()\nSET #1.x = 3\n",
    );
    assert_eq!(run(&["exec", "--db", db.to_str().unwrap(), &script]).status.code(), Some(0));

    let healthy = run(&["check", "--db", db.to_str().unwrap()]);
    assert_eq!(healthy.status.code(), Some(0));
    assert_eq!(
        stdout(&healthy),
        "snapshot checksum and structure: ok\njournal checksums: ok\n\
         journal replay: ok\npartitioning, typing, and reference audit: ok\n"
    );

    let journal = db.join("db.journal");
    let mut bytes = fs::read(&journal).unwrap();
    let flip = bytes.len() - 3;
    bytes[flip] ^= 0x01;
    fs::write(&journal, &bytes).unwrap();
    let broken = run(&["check", "--db", db.to_str().unwrap()]);
    assert_eq!(broken.status.code(), Some(1));
    assert!(
        stdout(&broken).contains("journal checksums: FAILED"),
        "output: {}",
        stdout(&broken)
    );
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["exec"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn difftest_binary_reports_convergence() {
    let out = Command::new(env!("CARGO_BIN_EXE_rxo-difftest"))
        .args(["--seed", "11", "--count", "300"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.starts_with("seed 11: 300 statements,") && text.contains("engine and oracle agree"),
        "output: {text}"
    );
}
