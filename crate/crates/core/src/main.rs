use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ghslab::expcli::{configure_threads, parse_config, Runner, Stage, THREADS_ENV};

#[derive(Parser, Debug)]
#[command(
    name = "ghslab",
    version,
    about = "Characteristic solutions, blowup classification and L^p rates for the generalized Hunter-Saxton system",
    after_help = format!("Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 verdict FAIL.\nThreads: set {THREADS_ENV}.")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides [output] dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Last frame as a fraction of eta* (overrides [eta] max_frac)
    #[arg(long, global = true)]
    eta_max_frac: Option<f64>,

    /// No progress messages
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Case, eta*, t* and predicted exponents
    Classify,
    /// Frames on characteristics with invariant and ODE residual checks
    Solve,
    /// L^p norms and the bound sandwich along the gap mesh
    Norms,
    /// Fitted blowup exponents against the predictions
    Rates,
    /// Local integral asymptotics near an extremum
    Lemmas,
    /// Characteristic solution against the periodic direct solver
    Crosscheck,
    /// Three-point boundary problem and the Riccati bound
    Threepoint,
    /// Every stage enabled in [stages]
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_err = |msg: String| {
        eprintln!("config error: {msg}");
        ExitCode::from(2)
    };
    if let Err(e) = configure_threads() {
        return config_err(e.to_string());
    }
    let Some(path) = cli.config.as_deref() else {
        return config_err("--config <path> is required".into());
    };
    let (mut cfg, text) = match parse_config(path) {
        Ok(v) => v,
        Err(e) => return config_err(e.to_string()),
    };
    if let Some(f) = cli.eta_max_frac {
        if !(f > 0.0 && f < 1.0) {
            return config_err(format!("--eta-max-frac must lie in (0, 1), got {f}"));
        }
        cfg.eta_max_frac = f;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let stages: Vec<Stage> = match cli.command {
        Command::Classify => vec![Stage::Classify],
        Command::Solve => vec![Stage::Solve],
        Command::Norms => vec![Stage::Norms],
        Command::Rates => vec![Stage::Rates],
        Command::Lemmas => vec![Stage::Lemmas],
        Command::Crosscheck => vec![Stage::Crosscheck],
        Command::Threepoint => vec![Stage::Threepoint],
        Command::All => cfg.stages.clone(),
    };
    let mut runner = Runner::new(&cfg, cli.quiet);
    match runner.run(&stages, &text) {
        Ok(m) => {
            if !cli.quiet {
                eprintln!(
                    "verdict {:?}; manifest at {}",
                    m.verdict,
                    cfg.out_dir.join("manifest.json").display()
                );
            }
            ExitCode::from(m.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
