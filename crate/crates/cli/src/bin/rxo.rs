//! `rxo`: command-line shell for an rxo-lite database directory.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rxo", version, about = "Shell for the rxo-lite persistent-object engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive statement loop against a database directory.
    Repl {
        #[arg(long, value_name = "PATH")]
        db: PathBuf,
    },
    /// Execute a script file, stopping at the first error.
    Exec {
        #[arg(long, value_name = "PATH")]
        db: PathBuf,
        file: PathBuf,
    },
    /// Print relations (or one extent) in snapshot row syntax.
    Dump {
        #[arg(long, value_name = "PATH")]
        db: PathBuf,
        #[arg(long, value_name = "NAME", conflicts_with = "role")]
        class: Option<String>,
        #[arg(long, value_name = "NAME")]
        role: Option<String>,
    },
    /// Verify snapshot, journal, and storage invariants.
    Check {
        #[arg(long, value_name = "PATH")]
        db: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Repl { db } => rxo_cli::run_repl(&db),
        Command::Exec { db, file } => rxo_cli::run_exec(&db, &file),
        Command::Dump { db, class, role } => {
            rxo_cli::run_dump(&db, class.as_deref(), role.as_deref())
        }
        Command::Check { db } => rxo_cli::run_check(&db),
    };
    std::process::exit(code);
}
