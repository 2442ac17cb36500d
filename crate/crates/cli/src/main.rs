use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod run;

use run::Failure;

/// Optimally controlled transition paths of the 1-D Ginzburg-Landau equation.
#[derive(Debug, Parser)]
#[command(name = "glpath", version, arg_required_else_help = true)]
struct Cli {
    /// Settings file (`key = value` lines with `[section]` headers).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for CSV, SVG and summary output.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true, value_parser = ["fe", "be"])]
    scheme: Option<String>,

    #[arg(long, global = true, value_parser = ["uniform", "one_wall", "two_wall"])]
    seed: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the two stable states and write them as CSV.
    StableStates,
    /// Solve the transition problem by continuation; write the path,
    /// snapshots and a summary.
    Solve,
    /// Run a convergence sweep and write its CSV and SVG report.
    Sweep,
    /// Probe the semiconcavity of the discrete value function.
    Probe,
    /// Print the large-deviation estimate `exp(-action / epsilon)`.
    Probability {
        /// Action to use; solved from the settings when omitted.
        #[arg(long, allow_negative_numbers = true)]
        action: Option<f64>,
        /// Noise strength; falls back to `epsilon` in the settings.
        #[arg(long, allow_negative_numbers = true)]
        epsilon: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("glpath: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut overrides = cli.set.clone();
    if let Some(s) = &cli.scheme {
        overrides.push(format!("scheme={s}"));
    }
    if let Some(s) = &cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let settings = run::load_settings(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::StableStates => run::stable_states(&settings, &cli.out),
        Command::Solve => run::solve(&settings, &cli.out),
        Command::Sweep => run::sweep(&settings, &cli.out),
        Command::Probe => run::probe(&settings, &cli.out),
        Command::Probability { action, epsilon } => run::probability(&settings, action, epsilon),
    }
}
