use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use remest::cli::{self, Command, ExperimentConfig, OutputFormat, Overrides};

#[derive(Parser, Debug)]
#[command(name = "remest", version, about = "Threshold scheduling and affine coding for remote estimation")]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Report path; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,

    /// Write the effective config (with derived quantities) here
    #[arg(long, global = true)]
    emit_config: Option<PathBuf>,

    /// simulate only: write one episode trace as JSON lines
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Monte Carlo cost and conditional statistics against closed forms
    Simulate,
    /// Optimal threshold: formula, golden-section search and Monte Carlo
    Optimize,
    /// Characteristic-function matching residuals
    VerifyMatching,
    /// Optimal threshold over a parameter grid
    Sweep,
}

const DEFAULT_CONFIG: &str = "schema_version = 1\nlambda = 1.0\nk = 2.0\nP_T = 1.0\nc = 1.0\n";

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("remest: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> remest::Result<bool> {
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_toml_str(DEFAULT_CONFIG)?,
    };
    let format = args.format.as_deref().map(str::parse::<OutputFormat>).transpose()?;
    let cfg = cfg.apply(&Overrides {
        seed: args.seed,
        out: args.out.clone(),
        format,
    });

    if let Some(path) = &args.emit_config {
        std::fs::write(path, cfg.effective_toml()?)?;
    }

    let command = match args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Optimize => Command::Optimize,
        Cmd::VerifyMatching => Command::VerifyMatching,
        Cmd::Sweep => Command::Sweep,
    };

    if let (Command::Simulate, Some(path)) = (command, &args.trace) {
        let strategy = cfg.strategy()?;
        let mut rng = remest::RngHandle::new(cfg.file.seed, 0).fork(0);
        let trace = remest::simulator::run_episode(&cfg.params, &strategy, cfg.file.horizon, &mut rng)?;
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        trace.write_jsonl(file)?;
    }

    let report = cli::run(command, &cfg)?;
    let bytes = report.render(cfg.file.format)?;
    match &cfg.file.out {
        Some(path) => std::fs::write(path, &bytes)
            .map_err(|e| remest::Error::Config(format!("cannot write {}: {e}", path.display())))?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
        }
    }
    for check in report.checks().iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: value {} expected {} ({})", check.name, check.value, check.expected, check.rule);
    }
    Ok(report.all_pass())
}
