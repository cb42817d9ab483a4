mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{RunConfig, Scale, StepSize};
use cptp_hmc::family::FamilyKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cptp-hmc", version, about = "Sample quantum channels with HMC and run Bayesian tomography workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate tomography counts for a channel.
    Simulate(RunArgs),
    /// Draw channels from a prior or posterior.
    Sample(RunArgs),
    /// Size and credibility curves of bounded-likelihood regions.
    Regions(RunArgs),
    /// Marginal likelihood of a channel property.
    Marginal(RunArgs),
    /// Compare the nested qubit channel families.
    ModelSelect(RunArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// `tetrahedron`, `qutrit-sic`, or a scheme JSON file.
    #[arg(long, default_value = "tetrahedron")]
    scheme: String,
    /// Counts CSV (one row per input), or `fixture:table1|2|3`.
    #[arg(long)]
    counts: Option<String>,
    /// `primitive` or `conjugate:beta=<β>,ref=<probability CSV or channel>`.
    #[arg(long, default_value = "primitive")]
    prior: String,
    #[arg(long, default_value = "general")]
    family: FamilyKind,
    /// `avg-fidelity` or `min-fidelity`.
    #[arg(long)]
    property: Option<String>,
    /// Draws per sample; overrides the scale preset.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long)]
    burn_in: Option<usize>,
    /// `auto` or a fixed leapfrog step.
    #[arg(long, default_value = "auto")]
    step_size: StepSize,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Channel for `simulate`, e.g. `amplitude-damping:gamma=0.4`.
    #[arg(long)]
    channel: Option<String>,
    /// Copies per input for `simulate`.
    #[arg(long)]
    copies: Option<u64>,
    /// Reference channel whose region membership is reported.
    #[arg(long)]
    truth: Option<String>,
    /// Run the criteria assessment harness (`model-select`).
    #[arg(long)]
    assess: bool,
    /// Also write the Born probability table (`simulate`).
    #[arg(long)]
    probabilities: bool,
}

impl RunArgs {
    fn into_config(self, command: &str) -> RunConfig {
        RunConfig {
            command: command.to_string(),
            seed: self.seed,
            chains: self.chains,
            draws: self.draws,
            burn_in: self.burn_in,
            step_size: self.step_size,
            scheme: self.scheme,
            counts: self.counts,
            family: self.family,
            prior: self.prior,
            property: self.property,
            scale: self.scale,
            out: self.out,
            channel: self.channel,
            copies: self.copies,
            truth: self.truth,
            assess: self.assess,
            probabilities: self.probabilities,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.command {
        Command::Simulate(a) => Ok(a.into_config("simulate")),
        Command::Sample(a) => Ok(a.into_config("sample")),
        Command::Regions(a) => Ok(a.into_config("regions")),
        Command::Marginal(a) => Ok(a.into_config("marginal")),
        Command::ModelSelect(a) => Ok(a.into_config("model-select")),
        Command::Replay { manifest, out } => commands::read_manifest(&manifest).map(|mut c| {
            c.out = out;
            c
        }),
    };
    match cfg.and_then(|c| commands::run(&c)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
