use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use afterpulse_qkd_cli::{commands, CliError, Format, Outcome, ScenarioConfig};
use clap::{Parser, Subcommand, ValueEnum};

/// Decoy-state QKD link model with afterpulsing detectors.
#[derive(Parser, Debug)]
#[command(name = "apqkd", version)]
struct Args {
    /// Scenario configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Output format; grids default to csv, single points to pretty.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Target QBER for contour tracing, overriding the configuration.
    #[arg(long, global = true)]
    target_qber: Option<f64>,

    /// Accepted for scripts; every computation is deterministic already.
    #[arg(long, global = true)]
    seedless: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Every intermediate quantity at one operating point.
    Report,
    /// Evaluate the [sweep] grid.
    Sweep,
    /// Dark-count thresholds at fixed QBER over the [contour] grid.
    Contour,
    /// Signal intensity from the closed-form optimality condition.
    OptimalMu,
    /// Key rate against afterpulse probability at 0, 5 and 21 dB.
    SkrVsAfterpulse,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Pretty,
}

fn load(path: Option<&PathBuf>) -> Result<ScenarioConfig, CliError> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|source| CliError::Io { path: p.display().to_string(), source })?;
            ScenarioConfig::parse(&text)
        }
    }
}

fn run(args: &Args) -> Result<Outcome, CliError> {
    let config = load(args.config.as_ref())?;
    // Reject a bad section even when the chosen command would not read it.
    config.scenario()?;
    config.solver()?;
    let grid_default = |f: Option<FormatArg>, default| match f {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Pretty) => Format::Pretty,
        None => default,
    };
    if let Some(t) = args.target_qber {
        if !(t > 0.0 && t < 0.5) {
            return Err(CliError::config("--target-qber", format!("{t} must lie in (0, 0.5)")));
        }
    }
    match args.command {
        Command::Report => commands::report(&config, grid_default(args.format, Format::Pretty)),
        Command::Sweep => commands::sweep(&config, grid_default(args.format, Format::Csv)),
        Command::Contour => commands::contour(&config, args.target_qber, grid_default(args.format, Format::Csv)),
        Command::OptimalMu => commands::optimal_mu(&config, grid_default(args.format, Format::Pretty)),
        Command::SkrVsAfterpulse => commands::skr_vs_afterpulse(&config, grid_default(args.format, Format::Csv)),
    }
}

fn emit(args: &Args, outcome: &Outcome) -> Result<(), CliError> {
    match &args.output {
        Some(path) => {
            fs::write(path, &outcome.body).map_err(|source| CliError::Io { path: path.display().to_string(), source })
        }
        None => match io::stdout().write_all(outcome.body.as_bytes()) {
            // A closed reader (`| head`) is not a failure of ours.
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            other => other.map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
        },
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = run(&args).and_then(|outcome| {
        for w in &outcome.warnings {
            eprintln!("{w}");
        }
        emit(&args, &outcome)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
