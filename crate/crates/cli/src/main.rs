use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixcity_cli::{run_pipeline, run_stages, write_synth_city, CliError, Context, PipelineConfig, StageName, StageOutcome};

#[derive(Parser)]
#[command(name = "mixcity", version, about = "Income mixing from travel surveys, transit hubs and place embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline config (TOML); every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory (for `synth`, the city directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// With `run`: stop after this stage.
    #[arg(long, global = true)]
    stage: Option<String>,
    /// Skip stages whose inputs and outputs match the manifest.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    Ingest,
    Mixing,
    Access,
    Exposure,
    Regress,
    Embed,
    Predict,
    Report,
    /// Generate a synthetic city into --out.
    Synth,
    /// Run the stages in order.
    Run,
}

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "MIXCITY_THREADS";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().map_err(|_| CliError::Validation(format!("{THREADS_VAR} must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let single = |s: StageName| -> Result<(), CliError> {
        cfg.validate()?;
        let done = run_stages(&Context::new(cfg.clone(), out.clone()), &[s], cli.resume)?;
        report(&done);
        Ok(())
    };
    match cli.command {
        Command::Synth => {
            let path = write_synth_city(&cfg, &out)?;
            eprintln!("wrote city to {} (config {})", out.display(), path.display());
            Ok(())
        }
        Command::Run => {
            let until = cli.stage.as_deref().map(StageName::parse).transpose()?;
            let done = run_pipeline(cfg.clone(), &out, until, cli.resume)?;
            report(&done);
            Ok(())
        }
        Command::Ingest => single(StageName::Ingest),
        Command::Mixing => single(StageName::Mixing),
        Command::Access => single(StageName::Access),
        Command::Exposure => single(StageName::Exposure),
        Command::Regress => single(StageName::Regress),
        Command::Embed => single(StageName::Embed),
        Command::Predict => single(StageName::Predict),
        Command::Report => single(StageName::Report),
    }
}

fn report(done: &[(StageName, StageOutcome)]) {
    for (s, o) in done {
        let what = match o {
            StageOutcome::Ran => "done",
            StageOutcome::Skipped => "up to date",
        };
        eprintln!("{:<9} {what}", s.as_str());
    }
}
