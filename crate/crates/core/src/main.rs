use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use homchain::config::RunConfig;
use homchain::harness::{self, RunContext, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "homchain", version, about = "Homogenized energies of random Lennard-Jones chains")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `outputs` from the config, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the base seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print and write solver diagnostics.
    #[arg(long, global = true)]
    diagnostics: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate J_hom on the configured strain grid.
    Tabulate,
    /// Convergence traces in N and in the approximation level L.
    Converge,
    /// Minimize the chain energy and compare with J_hom(ell).
    Minimize,
    /// Run the invariant battery.
    Verify,
    /// Compare the cell solver with exhaustive search on small instances.
    Oracle,
}

fn run(cli: &Cli) -> homchain::Result<harness::CommandReport> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if matches!(cli.command, Command::Oracle) => RunConfig::minimal(),
        None => return Err(homchain::Error::Validation(vec!["--config is required".into()])),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.outputs.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = RunContext { config, out, diagnostics: cli.diagnostics };
    match cli.command {
        Command::Tabulate => harness::cmd_tabulate(&ctx),
        Command::Converge => harness::cmd_converge(&ctx),
        Command::Minimize => harness::cmd_minimize(&ctx),
        Command::Verify => harness::cmd_verify(&ctx),
        Command::Oracle => harness::cmd_oracle(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOMCHAIN_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    let result = run(&cli);
    match &result {
        Ok(rep) => {
            for line in &rep.lines {
                println!("{line}");
            }
            for f in &rep.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(harness::exit_code(&result) as u8)
}
