use chaosfem_cli::commands::{cmd_assimilate, cmd_generate, cmd_identify, cmd_prior, cmd_report, cmd_run};
use chaosfem_cli::{Config, ErrorKind, Run, StageError};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chaosfem", version, about = "Sampling-free statistical finite elements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` from the configuration.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Overrides the data-generation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for node evaluation.
    #[arg(long, global = true, env = "CHAOSFEM_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the polynomial-chaos prior.
    Prior,
    /// Generate synthetic observations.
    Generate,
    /// Estimate ρ and σ_d by minimizing the marginal likelihood.
    Identify,
    /// Condition the prior on the data.
    Assimilate,
    /// Write summary.json and bands.csv.
    Report,
    /// All stages in order.
    Run,
}

fn fail(e: &StageError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(e).unwrap_or_else(|_| e.to_string()));
    ExitCode::from(e.error.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&StageError::new(ErrorKind::Config, "setup", e.to_string()));
        }
    }
    let Some(path) = cli.config else {
        return fail(&StageError::new(ErrorKind::Config, "setup", "--config is required"));
    };
    let config = match Config::load(&path) {
        Ok(c) => c,
        Err(e) => return fail(&StageError::new(ErrorKind::Config, "config", e.0)),
    };
    let run = Run::new(config, cli.out, cli.seed);
    let result = match cli.command {
        Command::Prior => cmd_prior(&run).map(|_| ()),
        Command::Generate => cmd_generate(&run).map(|_| ()),
        Command::Identify => cmd_identify(&run).map(|_| ()),
        Command::Assimilate => cmd_assimilate(&run).map(|_| ()),
        Command::Report => cmd_report(&run).map(|_| ()),
        Command::Run => cmd_run(&run).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
