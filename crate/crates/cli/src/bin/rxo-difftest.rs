//! `rxo-difftest`: run a seeded random statement stream against the
//! engine and the flat-map oracle, comparing results, error kinds, and
//! full state after every statement.

use clap::Parser;

#[derive(Parser)]
#[command(name = "rxo-difftest", about = "Differential tester for the rxo-lite engine")]
struct Cli {
    /// Seed for the statement generator.
    #[arg(long)]
    seed: u64,
    /// Number of statements to generate and compare.
    #[arg(long)]
    count: usize,
}

fn main() {
    let cli = Cli::parse();
    match rxo_core::difftest::run(cli.seed, cli.count) {
        Ok(stats) => {
            println!(
                "seed {}: {} statements, {} ok, {} rejected, engine and oracle agree",
                cli.seed, stats.executed, stats.succeeded, stats.failed
            );
        }
        Err(divergence) => {
            eprintln!("divergence: {divergence}");
            std::process::exit(1);
        }
    }
}
