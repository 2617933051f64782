//! Argument parsing, dispatch and exit codes: 0 on success, 2 when a
//! verdict fails, 1 on usage or runtime errors.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Outcome};
use crate::config::Settings;
use crate::output::{write_json, Outputs, RunManifest};
use crate::parallel::pool;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kbbm", version, about = "Branching Brownian motion with drift, killed at the origin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one population and write positions at each grid time.
    Simulate(Invocation),
    /// Evaluate the killed transition probability and expected count.
    ClosedForm(Invocation),
    /// Check conservation of the Hermite martingales over replicates.
    CheckMartingale(Invocation),
    /// Compare normalized counts with the order-m expansion.
    ValidateExpansion(Invocation),
    /// Track the compensated log of the expected count.
    KestenRate(Invocation),
    /// Many-to-one estimates from spine samples.
    SpineEstimate(Invocation),
}

#[derive(Debug, Args)]
struct Invocation {
    /// TOML file with any of the flag keys (snake_case).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::ClosedForm(_) => "closed-form",
            Command::CheckMartingale(_) => "check-martingale",
            Command::ValidateExpansion(_) => "validate-expansion",
            Command::KestenRate(_) => "kesten-rate",
            Command::SpineEstimate(_) => "spine-estimate",
        }
    }

    fn invocation(&self) -> &Invocation {
        match self {
            Command::Simulate(i)
            | Command::ClosedForm(i)
            | Command::CheckMartingale(i)
            | Command::ValidateExpansion(i)
            | Command::KestenRate(i)
            | Command::SpineEstimate(i) => i,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) if outcome.partial => EXIT_ERROR,
        Ok(Outcome { verdict: Some(false), .. }) => EXIT_VERDICT,
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn execute(command: &Command) -> Result<Outcome> {
    let started = Instant::now();
    let inv = command.invocation();
    let file = match &inv.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let settings = inv.settings.clone().over(file)?.resolve()?;
    let mut out = Outputs::new(settings.output_dir()?);
    let pool = pool(settings.threads()?)?;
    let outcome = match command {
        Command::Simulate(_) => commands::simulate(&settings, &mut out, &pool)?,
        Command::ClosedForm(_) => commands::closed_form(&settings, &mut out)?,
        Command::CheckMartingale(_) => commands::check_martingale(&settings, &mut out, &pool)?,
        Command::ValidateExpansion(_) => commands::validate_expansion(&settings, &mut out, &pool)?,
        Command::KestenRate(_) => commands::kesten_rate(&settings, &mut out)?,
        Command::SpineEstimate(_) => commands::spine_estimate(&settings, &mut out, &pool)?,
    };
    let manifest = RunManifest {
        subcommand: command.name().to_owned(),
        seed: settings.seed()?,
        settings,
        version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
        partial: outcome.partial,
        verdict: outcome.verdict,
    };
    write_json(&out.dir().join("manifest.json"), &manifest)?;
    Ok(outcome)
}
